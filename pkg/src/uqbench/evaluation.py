"""Model evaluation: prompt variants, page windows, answer standardization.

The matrix runs every verified question against every (model, prompt variant,
window size) combination. Windows tile the document without overlap, so page
coverage is counted exactly once per configuration. An answer is correct when
it standardizes to the refusal sentinel.
"""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .augment import page_ocr_text
from .corpus import DatasetDir, append_jsonl, read_jsonl
from .corruption import CorruptedRecord
from .docmodel import Document
from .prompts import render_standardization_prompt, render_vqa_prompt
from .providers import ChatRequest, ProviderConfig, ProviderError, ServiceClient, complete

logger = logging.getLogger(__name__)

UNANSWERABLE_SENTINEL = "unable to determine"

# Refusal phrasings from the standardization prompt's example list, normalized.
# Matching is prefix-based after normalization, so longer variants of these
# phrases standardize without a provider call.
CANONICAL_REFUSALS = (
    "unable to determine",
    "not available",
    "not provided in document",
    "the image does not provide information",
    "i cannot provide an answer",
    "the document does not provide information",
    "no answer",
)


@dataclass(frozen=True)
class PromptVariant:
    include_ocr: bool
    explicit_unanswerable: bool

    @property
    def name(self) -> str:
        if self.include_ocr and self.explicit_unanswerable:
            return "ocr_explicit"
        if self.include_ocr:
            return "ocr"
        if self.explicit_unanswerable:
            return "explicit"
        return "base"

    @classmethod
    def from_name(cls, name: str) -> "PromptVariant":
        try:
            return VARIANTS[name]
        except KeyError:
            raise ValueError(f"unknown prompt variant {name!r}") from None


VARIANTS = {
    "base": PromptVariant(False, False),
    "ocr": PromptVariant(True, False),
    "explicit": PromptVariant(False, True),
    "ocr_explicit": PromptVariant(True, True),
}


@dataclass(frozen=True)
class PageWindow:
    document_id: str
    start_page: int
    pages: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "pages", tuple(self.pages))
        if not self.pages or self.pages[0] != self.start_page:
            raise ValueError(f"window pages must start at start_page: {self}")
        for a, b in zip(self.pages, self.pages[1:]):
            if b != a + 1:
                raise ValueError(f"window pages not consecutive: {self.pages}")


@dataclass(frozen=True)
class EvaluationRecord:
    question_id: str
    model: str
    variant: str
    window: PageWindow
    raw_answer: str
    standardized_answer: str
    correct: bool
    latency: float
    unstandardized: bool = False


def make_windows(doc: Document, w: int) -> list[PageWindow]:
    """Tile the document into consecutive page windows of size ``w``.

    The final window is truncated when the page count is not a multiple.
    """
    if w < 1:
        raise ValueError(f"window size must be >= 1: {w}")
    n = len(doc.pages)
    windows = []
    for start in range(1, n + 1, w):
        pages = tuple(range(start, min(start + w, n + 1)))
        windows.append(PageWindow(document_id=doc.id, start_page=start, pages=pages))
    return windows


def window_ocr_text(doc: Document, window: PageWindow) -> str:
    return "\n".join(page_ocr_text(doc.page(i)) for i in window.pages)


def build_vqa_prompt(
    record: CorruptedRecord,
    doc: Document,
    window: PageWindow,
    variant: PromptVariant,
    page_images: list[bytes],
    model: ProviderConfig,
) -> ChatRequest:
    """VQA request: template text plus the window's page images in order."""
    ocr_text = window_ocr_text(doc, window) if variant.include_ocr else ""
    prompt = render_vqa_prompt(
        question=record.final_text,
        ocr_text=ocr_text,
        include_ocr=variant.include_ocr,
        explicit=variant.explicit_unanswerable,
    )
    return ChatRequest(system="", user=prompt, images=tuple(page_images), provider=model.name)


def normalize_answer(text: str) -> str:
    collapsed = " ".join(text.split()).lower()
    return collapsed.strip(string.punctuation + " ")


def rule_standardize(raw_answer: str) -> Optional[str]:
    """Rule pass: canonical refusal phrasings map straight to the sentinel."""
    normalized = normalize_answer(raw_answer)
    for phrase in CANONICAL_REFUSALS:
        if normalized == phrase or normalized.startswith(phrase):
            return UNANSWERABLE_SENTINEL
    return None


def standardize(
    raw_answer: str,
    standardizer: ProviderConfig,
    client: ServiceClient,
) -> tuple[str, bool]:
    """Two-stage standardization; returns (answer, unstandardized_flag).

    The rule pass is free and deterministic; anything it misses goes to the
    standardizer model. A provider failure returns the raw answer flagged
    unstandardized, which downstream scoring treats as incorrect.
    """
    ruled = rule_standardize(raw_answer)
    if ruled is not None:
        return ruled, False
    req = ChatRequest(
        system="", user=render_standardization_prompt(raw_answer), provider=standardizer.name
    )
    try:
        resp = complete(req, standardizer, client)
    except ProviderError as exc:
        logger.warning("standardizer failed: %s", exc)
        return raw_answer, True
    text = resp.text.strip()
    if normalize_answer(text) == UNANSWERABLE_SENTINEL:
        return UNANSWERABLE_SENTINEL, False
    return text, False


def is_correct(standardized_answer: str, unstandardized: bool) -> bool:
    if unstandardized:
        return False
    return standardized_answer == UNANSWERABLE_SENTINEL


def window_key(question_id: str, model: str, variant: str, w: int, start_page: int) -> str:
    return f"{question_id}|{model}|{variant}|w{w}|p{start_page}"


def record_to_dict(rec: EvaluationRecord, w: int) -> dict:
    return {
        "question_id": rec.question_id,
        "model": rec.model,
        "variant": rec.variant,
        "window": {
            "document_id": rec.window.document_id,
            "start_page": rec.window.start_page,
            "pages": list(rec.window.pages),
            "w": w,
        },
        "raw_answer": rec.raw_answer,
        "standardized_answer": rec.standardized_answer,
        "correct": rec.correct,
        "latency": rec.latency,
        "unstandardized": rec.unstandardized,
    }


def record_from_dict(raw: dict) -> tuple[EvaluationRecord, int]:
    win = raw["window"]
    rec = EvaluationRecord(
        question_id=raw["question_id"],
        model=raw["model"],
        variant=raw["variant"],
        window=PageWindow(win["document_id"], win["start_page"], tuple(win["pages"])),
        raw_answer=raw["raw_answer"],
        standardized_answer=raw["standardized_answer"],
        correct=raw["correct"],
        latency=raw["latency"],
        unstandardized=raw.get("unstandardized", False),
    )
    return rec, win["w"]


@dataclass
class MatrixResult:
    records: list[tuple[EvaluationRecord, int]]
    manifest: dict


def run_matrix(
    records: list[CorruptedRecord],
    documents: dict[str, Document],
    dataset: DatasetDir,
    models: list[ProviderConfig],
    variants: list[PromptVariant],
    window_sizes: list[int],
    standardizer: ProviderConfig,
    client: ServiceClient,
    results_path: Path,
    seed: int = 0,
    limit: Optional[int] = None,
) -> MatrixResult:
    """Evaluate the full matrix, appending results as JSON lines.

    Existing rows in ``results_path`` are honored, so an interrupted run
    resumes where it stopped; with a frozen provider cache the final record
    set is identical either way. ``limit`` caps the number of new provider
    evaluations (used to exercise interruption in tests).
    """
    done: set[str] = set()
    if results_path.exists():
        for raw in read_jsonl(results_path):
            win = raw["window"]
            done.add(
                window_key(raw["question_id"], raw["model"], raw["variant"], win["w"], win["start_page"])
            )

    expected = 0
    produced = 0
    failures: list[dict] = []
    out: list[tuple[EvaluationRecord, int]] = []
    image_cache: dict[str, bytes] = {}

    def page_image(doc: Document, index: int) -> bytes:
        ref = doc.page(index).image_ref
        if ref not in image_cache:
            image_cache[ref] = dataset.image_path(ref).read_bytes()
        return image_cache[ref]

    stop = False
    for record in records:
        doc = documents[record.document_id]
        for w in window_sizes:
            windows = make_windows(doc, w)
            for model in models:
                for variant in variants:
                    expected += len(windows)
                    for window in windows:
                        key = window_key(record.id, model.name, variant.name, w, window.start_page)
                        if key in done:
                            continue
                        if stop:
                            continue
                        if limit is not None and produced >= limit:
                            stop = True
                            continue
                        images = [page_image(doc, i) for i in window.pages]
                        req = build_vqa_prompt(record, doc, window, variant, images, model)
                        try:
                            resp = complete(req, model, client)
                        except ProviderError as exc:
                            failures.append({"key": key, "error": str(exc)})
                            continue
                        answer, unstandardized = standardize(resp.text, standardizer, client)
                        rec = EvaluationRecord(
                            question_id=record.id,
                            model=model.name,
                            variant=variant.name,
                            window=window,
                            raw_answer=resp.text,
                            standardized_answer=answer,
                            correct=is_correct(answer, unstandardized),
                            latency=resp.latency,
                            unstandardized=unstandardized,
                        )
                        append_jsonl(results_path, record_to_dict(rec, w))
                        done.add(key)
                        produced += 1
                        out.append((rec, w))

    n_records = 0
    n_unstandardized = 0
    if results_path.exists():
        for raw in read_jsonl(results_path):
            n_records += 1
            if raw.get("unstandardized"):
                n_unstandardized += 1
    manifest = {
        "seed": seed,
        "expected": expected,
        "n_records": n_records,
        "n_failed": len(failures),
        "n_unstandardized": n_unstandardized,
        "n_new": produced,
        "interrupted": stop,
        "failures": failures,
        "models": [m.name for m in models],
        "variants": [v.name for v in variants],
        "window_sizes": list(window_sizes),
    }
    return MatrixResult(records=out, manifest=manifest)
