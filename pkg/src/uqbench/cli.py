"""Command-line entrypoints for every pipeline stage.

Stages communicate through plain files under the configured artifacts
directory; each stage validates that its inputs exist and tells the user
which command produces them. Exit codes: 0 ok, 1 stage failure, 2 config
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .augment import AugmentProviders, AugmentationError, augment_document, is_augmented, save_augmented
from .config import ConfigError, PipelineConfig, ProviderSet, file_sha256, load_config
from .corpus import DatasetDir, append_jsonl, read_jsonl, write_jsonl
from .corruption import build_pools, corrupted_to_dict, generate_dataset, record_from_dict
from .entities import EntityTaxonomy, entity_to_dict
from .evaluation import VARIANTS, run_matrix
from .evaluation import record_from_dict as eval_record_from_dict
from .fixture import build_fixture, layout_import_path
from .importers import ImportError_, import_dataset
from .metrics import Dimension, GroupingContext, compute_report, emit_report
from .mock_providers import MockProviderSet, MockTransport
from .providers import ProviderError, ServiceClient, load_layout_import
from .review_server import make_server, serve_forever
from .verification import (
    VERIFIED_UNANSWERABLE,
    decision_from_dict,
    export_verified,
    verdict_to_dict,
    verify_question,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STAGE = 1
EXIT_CONFIG = 2


class StageError(RuntimeError):
    """A stage cannot run or failed; message says what to do."""


class Artifacts:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @property
    def augment_manifest(self) -> Path:
        return self.root / "augment.manifest.json"

    def pool_path(self, doc_id: str) -> Path:
        return self.root / "pools" / f"{doc_id}.jsonl"

    @property
    def corrupted(self) -> Path:
        return self.root / "corrupted.jsonl"

    @property
    def corrupt_manifest(self) -> Path:
        return self.root / "corrupt.manifest.json"

    @property
    def verdicts(self) -> Path:
        return self.root / "verdicts.jsonl"

    @property
    def statuses(self) -> Path:
        return self.root / "verification_status.jsonl"

    @property
    def verified(self) -> Path:
        return self.root / "verified.jsonl"

    @property
    def verify_manifest(self) -> Path:
        return self.root / "verify.manifest.json"

    @property
    def decisions(self) -> Path:
        return self.root / "decisions.jsonl"

    @property
    def export(self) -> Path:
        return self.root / "verified_export.jsonl"

    @property
    def export_manifest(self) -> Path:
        return self.root / "export.manifest.json"

    @property
    def results(self) -> Path:
        return self.root / "results.jsonl"

    @property
    def run_manifest(self) -> Path:
        return self.root / "run.json"

    @property
    def report_dir(self) -> Path:
        return self.root / "report"


def _write_manifest(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=1), encoding="utf-8")


def build_runtime(cfg: PipelineConfig, providers_mode: str) -> tuple[ProviderSet, ServiceClient]:
    if providers_mode == "mock":
        transport = MockTransport(judge_answerable_rate=cfg.judge_answerable_rate)
        mocks = MockProviderSet()
        provider_set = ProviderSet(
            ocr=mocks.ocr,
            captioner=mocks.captioner,
            ner=mocks.ner,
            layout=mocks.layout,
            judge=mocks.judge,
            refiner=mocks.refiner,
            standardizer=mocks.standardizer,
            models=tuple(mocks.models),
        )
        client = ServiceClient(transport=transport, cache_dir=cfg.cache_dir)
    else:
        provider_set = cfg.providers
        client = ServiceClient(cache_dir=cfg.cache_dir)
    return provider_set, client


def cmd_fixture(args) -> int:
    dataset = build_fixture(Path(args.out), n_docs=args.docs, seed=args.seed)
    print(f"fixture dataset written to {dataset.root}")
    return EXIT_OK


def cmd_import(args) -> int:
    manifest = import_dataset(
        args.format, Path(args.src), Path(args.out), sample=args.sample, seed=args.seed
    )
    print(json.dumps(manifest, sort_keys=True))
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = load_config(args.config)
    providers, client = build_runtime(cfg, args.providers)
    dataset = DatasetDir(cfg.dataset_dir)
    art = Artifacts(cfg.artifacts_dir)
    doc_ids = dataset.document_ids()
    if not doc_ids:
        raise StageError(
            f"no documents under {dataset.documents_dir}; run `uqbench import` or `uqbench fixture` first"
        )
    aug = AugmentProviders(
        ocr=providers.require("ocr"),
        captioner=providers.require("captioner"),
        layout=providers.layout,
    )
    input_hashes = {doc_id: file_sha256(dataset.document_path(doc_id)) for doc_id in doc_ids}
    statuses: dict[str, str] = {}
    failed = 0
    for doc_id in doc_ids:
        if is_augmented(dataset, doc_id) and not args.force:
            statuses[doc_id] = "cached"
            continue
        doc = dataset.load_document(doc_id)
        layout_file = layout_import_path(dataset, doc_id)
        layout_import = load_layout_import(layout_file) if layout_file.exists() else None
        try:
            result = augment_document(
                doc, dataset, aug, client, layout_import, max_workers=cfg.concurrency
            )
        except AugmentationError as exc:
            logger.error("%s", exc)
            save_augmented(dataset, exc.artifacts)
            statuses[doc_id] = "failed-partial"
            failed += 1
            continue
        save_augmented(dataset, result)
        statuses[doc_id] = "complete"
    _write_manifest(
        art.augment_manifest,
        {
            "config_hash": cfg.config_hash,
            "inputs": {"questions": file_sha256(dataset.questions_path), "documents": input_hashes},
            "documents": statuses,
        },
    )
    if failed:
        raise StageError(f"{failed} document(s) failed augmentation; rerun `uqbench augment` to resume")
    print(f"augmented {len(doc_ids)} document(s)")
    return EXIT_OK


def _require_augmented(dataset: DatasetDir) -> list[str]:
    doc_ids = dataset.document_ids()
    missing = [d for d in doc_ids if not is_augmented(dataset, d)]
    if not doc_ids or missing:
        raise StageError("documents are not augmented; run `uqbench augment` first")
    return doc_ids


def cmd_corrupt(args) -> int:
    cfg = load_config(args.config)
    providers, client = build_runtime(cfg, args.providers)
    dataset = DatasetDir(cfg.dataset_dir)
    art = Artifacts(cfg.artifacts_dir)
    doc_ids = _require_augmented(dataset)

    taxonomy = EntityTaxonomy().with_overrides(cfg.taxonomy_overrides)
    docs = [dataset.load_document(d) for d in doc_ids]
    ner = providers.require("ner")
    pools = build_pools(docs, taxonomy, ner, client)
    for doc_id, pool in sorted(pools.items()):
        write_jsonl(art.pool_path(doc_id), (entity_to_dict(e) for e in pool))

    questions = dataset.load_questions()
    corrupted, manifest = generate_dataset(
        questions,
        pools,
        taxonomy,
        ner,
        providers.require("refiner"),
        client,
        complexities=cfg.complexities,
        seed=cfg.seed,
        variants=args.variants or cfg.variants_per_complexity,
    )
    write_jsonl(art.corrupted, (corrupted_to_dict(cq) for cq in corrupted))
    manifest.update(
        {
            "config_hash": cfg.config_hash,
            "inputs": {"questions": file_sha256(dataset.questions_path)},
        }
    )
    _write_manifest(art.corrupt_manifest, manifest)
    print(f"corrupted {manifest['n_corrupted']} question(s) from {manifest['n_questions']} source(s)")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    providers, client = build_runtime(cfg, args.providers)
    dataset = DatasetDir(cfg.dataset_dir)
    art = Artifacts(cfg.artifacts_dir)
    if not art.corrupted.exists():
        raise StageError(f"{art.corrupted} missing; run `uqbench corrupt` first")

    raw_records = list(read_jsonl(art.corrupted))
    records = [record_from_dict(r) for r in raw_records]
    done: set[str] = set()
    if art.statuses.exists():
        done = {raw["question_id"] for raw in read_jsonl(art.statuses)}

    judge = providers.require("judge")
    for rec in records:
        if rec.id in done:
            continue
        doc = dataset.load_document(rec.document_id)
        outcome = verify_question(rec, doc, dataset, judge, client)
        for verdict in outcome.verdicts:
            append_jsonl(art.verdicts, verdict_to_dict(verdict))
        append_jsonl(
            art.statuses,
            {"question_id": rec.id, "status": outcome.status, "reason": outcome.reason},
        )

    statuses = {raw["question_id"]: raw["status"] for raw in read_jsonl(art.statuses)}
    verified_raw = [r for r in raw_records if statuses.get(r["id"]) == VERIFIED_UNANSWERABLE]
    write_jsonl(art.verified, verified_raw)
    counts: dict[str, int] = {}
    for status in statuses.values():
        counts[status] = counts.get(status, 0) + 1
    _write_manifest(
        art.verify_manifest,
        {
            "config_hash": cfg.config_hash,
            "inputs": {"corrupted": file_sha256(art.corrupted)},
            "counts": counts,
            "n_verified": len(verified_raw),
        },
    )
    print(f"verified {len(verified_raw)} / {len(records)} corrupted question(s)")
    return EXIT_OK


def cmd_review_serve(args) -> int:
    cfg = load_config(args.config)
    dataset = DatasetDir(cfg.dataset_dir)
    art = Artifacts(cfg.artifacts_dir)
    if not art.verified.exists():
        raise StageError(f"{art.verified} missing; run `uqbench verify` first")
    static_dir = Path(args.ui_dir) if args.ui_dir else None
    server = make_server(
        dataset,
        art.verified,
        art.decisions,
        bind=args.bind or cfg.server_bind,
        static_dir=static_dir,
    )
    print(f"review server on http://{server.server_address[0]}:{server.server_address[1]}/")
    serve_forever(server)
    return EXIT_OK


def _load_decisions(art: Artifacts):
    if not art.decisions.exists():
        return []
    return [decision_from_dict(raw) for raw in read_jsonl(art.decisions)]


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    providers, client = build_runtime(cfg, args.providers)
    dataset = DatasetDir(cfg.dataset_dir)
    art = Artifacts(cfg.artifacts_dir)
    if not art.verified.exists():
        raise StageError(f"{art.verified} missing; run `uqbench verify` first")
    if art.results.exists() and not args.resume:
        raise StageError(f"{art.results} exists; pass --resume to continue or delete it to restart")

    verified_raw = list(read_jsonl(art.verified))
    records_by_id = {raw["id"]: record_from_dict(raw) for raw in verified_raw}
    exported, export_manifest = export_verified(
        [raw["id"] for raw in verified_raw], records_by_id, _load_decisions(art)
    )
    exported_ids = {rec.id for rec in exported}
    write_jsonl(art.export, (raw for raw in verified_raw if raw["id"] in exported_ids))
    _write_manifest(art.export_manifest, export_manifest)

    models = list(providers.models)
    if args.models:
        wanted = set(args.models)
        models = [m for m in models if m.name in wanted]
        unknown = wanted - {m.name for m in models}
        if unknown:
            raise StageError(f"unknown models {sorted(unknown)}; configured: "
                             f"{[m.name for m in providers.models]}")
    if not models:
        raise StageError("no evaluation models configured")
    variant_names = args.variants or list(cfg.variants)
    variants = [VARIANTS[name] for name in variant_names]
    window_sizes = args.window_sizes or list(cfg.window_sizes)

    documents = {rec.document_id: dataset.load_document(rec.document_id) for rec in exported}
    result = run_matrix(
        exported,
        documents,
        dataset,
        models,
        variants,
        window_sizes,
        providers.require("standardizer"),
        client,
        art.results,
        seed=cfg.seed,
        limit=args.limit,
    )
    run_manifest = dict(result.manifest)
    run_manifest.update(
        {
            "config_hash": cfg.config_hash,
            "inputs": {"verified_export": file_sha256(art.export)},
            "providers": {m.name: m.endpoint for m in models},
        }
    )
    _write_manifest(art.run_manifest, run_manifest)
    print(
        f"evaluation records: {run_manifest['n_records']} "
        f"(expected {run_manifest['expected']}, failed {run_manifest['n_failed']})"
    )
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = load_config(args.config)
    dataset = DatasetDir(cfg.dataset_dir)
    art = Artifacts(cfg.artifacts_dir)
    for path, producer in ((art.results, "evaluate"), (art.corrupted, "corrupt")):
        if not path.exists():
            raise StageError(f"{path} missing; run `uqbench {producer}` first")

    corrupted = {raw["id"]: record_from_dict(raw) for raw in read_jsonl(art.corrupted)}
    documents = {d: dataset.load_document(d) for d in dataset.document_ids()}
    taxonomy = EntityTaxonomy().with_overrides(cfg.taxonomy_overrides)
    ctx = GroupingContext(corrupted=corrupted, documents=documents, taxonomy=taxonomy)
    records = [eval_record_from_dict(raw) for raw in read_jsonl(art.results)]

    dimensions = None
    if args.group:
        try:
            dimensions = [Dimension(args.group)]
        except ValueError:
            raise StageError(
                f"unknown group dimension {args.group!r}; one of "
                f"{[d.value for d in Dimension]}"
            ) from None
    cells = compute_report(records, ctx, dimensions=dimensions, pooled_acc_p=args.pooled_acc_p or cfg.pooled_acc_p)
    paths = emit_report(cells, art.report_dir)
    for kind, path in sorted(paths.items()):
        print(f"{kind}: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uqbench",
        description="Generate verified unanswerable questions for document VQA and "
        "evaluate models on detecting them.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", help="generate the bundled synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--docs", type=int, default=3)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("import", help="import a VQA dataset into the normalized layout")
    p.add_argument("--format", required=True, choices=("native", "mpdocvqa", "dude"))
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sample", type=int, default=None, help="seeded sample of N questions")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_import)

    def stage(name: str, help_text: str):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True)
        sp.add_argument("--providers", choices=("http", "mock"), default="http")
        return sp

    p = stage("augment", "layout + OCR + captions for every document")
    p.add_argument("--force", action="store_true", help="re-augment completed documents")
    p.set_defaults(func=cmd_augment)

    p = stage("corrupt", "entity pools + corrupted question generation")
    p.add_argument("--variants", type=int, default=None, help="variants per (question, complexity)")
    p.set_defaults(func=cmd_corrupt)

    p = stage("verify", "per-page unanswerability judging")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("review-serve", help="serve the human review API and UI")
    p.add_argument("--config", required=True)
    p.add_argument("--bind", default=None, help="host:port (default from config)")
    p.add_argument("--ui-dir", default=None, help="directory with built UI assets")
    p.set_defaults(func=cmd_review_serve)

    p = stage("evaluate", "run the model x variant x window matrix")
    p.add_argument("--models", nargs="*", default=None)
    p.add_argument("--variants", nargs="*", default=None, choices=sorted(VARIANTS))
    p.add_argument("--window-sizes", nargs="*", type=int, default=None)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--limit", type=int, default=None, help="stop after N new records (testing aid)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="compute metrics and emit report files")
    p.add_argument("--config", required=True)
    p.add_argument("--group", default=None, help="restrict to one grouping dimension")
    p.add_argument("--pooled-acc-p", action="store_true")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StageError, ImportError_, ProviderError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:  # noqa: BLE001 - stage failures must map to exit 1
        logger.exception("stage failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
