"""Document- and page-level accuracy, sliced along every ablation dimension.

Both metrics work per question: document accuracy asks whether every window
answer for the question was correct; page accuracy averages each question's
correct-window rate and then averages over questions (not pooled over
windows). A slice is any subset of evaluation records; grouping functions
produce the subsets for one dimension at a time.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

from .corruption import CorruptedRecord
from .docmodel import Document, ElementClass, density_bin, length_bin
from .entities import EntityTaxonomy
from .evaluation import EvaluationRecord

DEFAULT_COUNTED_CLASSES = frozenset({ElementClass.FIGURE, ElementClass.TABLE})


class Dimension(str, Enum):
    OVERALL = "overall"
    COMPLEXITY = "complexity"
    MACRO_ENTITY = "macro_entity"
    DENSITY_BIN = "density_bin"
    LENGTH_BIN = "length_bin"
    IN_PAGE = "in_page"
    QUADRANT = "quadrant"
    ELEMENT_CLASS = "element_class"
    PAGE_ELEMENT_COUNT = "page_element_count"
    VARIANT = "variant"
    WINDOW_SIZE = "window_size"
    MODEL = "model"


@dataclass(frozen=True)
class GroupKey:
    dimension: Dimension
    value: str


class MetricsJoinError(RuntimeError):
    """Evaluation records reference provenance that cannot be resolved."""


ScoredRecord = tuple[EvaluationRecord, int]  # (record, window size w)


def acc_d(records: Iterable[ScoredRecord]) -> float:
    """Fraction of questions whose every window answer in the slice is correct."""
    per_question: dict[str, bool] = {}
    for rec, _ in records:
        per_question[rec.question_id] = per_question.get(rec.question_id, True) and rec.correct
    if not per_question:
        return 0.0
    return sum(per_question.values()) / len(per_question)


def acc_p(records: Iterable[ScoredRecord], pooled: bool = False) -> float:
    """Mean over questions of each question's correct-window rate.

    Computed in exact rational arithmetic and rounded once, so the result is
    independent of record order and duplicating whole questions leaves it
    unchanged bit for bit. ``pooled=True`` switches to the single-level
    alternative (correct windows over all windows) for comparison runs.
    """
    totals: dict[str, int] = {}
    corrects: dict[str, int] = {}
    for rec, _ in records:
        totals[rec.question_id] = totals.get(rec.question_id, 0) + 1
        corrects[rec.question_id] = corrects.get(rec.question_id, 0) + (1 if rec.correct else 0)
    if not totals:
        return 0.0
    if pooled:
        return sum(corrects.values()) / sum(totals.values())
    total = sum((Fraction(corrects[q], totals[q]) for q in totals), start=Fraction(0))
    return float(total / len(totals))


@dataclass
class GroupingContext:
    corrupted: dict[str, CorruptedRecord]
    documents: dict[str, Document]
    taxonomy: EntityTaxonomy
    counted_classes: frozenset[ElementClass] = DEFAULT_COUNTED_CLASSES

    def record_of(self, rec: EvaluationRecord) -> CorruptedRecord:
        try:
            return self.corrupted[rec.question_id]
        except KeyError:
            raise MetricsJoinError(f"no corrupted record for question {rec.question_id!r}") from None

    def document_of(self, rec: EvaluationRecord) -> Document:
        cq = self.record_of(rec)
        try:
            return self.documents[cq.document_id]
        except KeyError:
            raise MetricsJoinError(f"no document {cq.document_id!r} for {rec.question_id!r}") from None


def _groups_for(rec: EvaluationRecord, w: int, ctx: GroupingContext, dim: Dimension) -> list[str]:
    """Group labels a record belongs to; multi-membership only for
    replacement-derived dimensions."""
    if dim is Dimension.OVERALL:
        return ["all"]
    if dim is Dimension.COMPLEXITY:
        return [f"C{ctx.record_of(rec).complexity}"]
    if dim is Dimension.MACRO_ENTITY:
        macros = {
            ctx.taxonomy.macro_of(r.substitute_fine_type).value
            for r in ctx.record_of(rec).replacements
        }
        return sorted(macros)
    if dim is Dimension.DENSITY_BIN:
        return [density_bin(ctx.document_of(rec))]
    if dim is Dimension.LENGTH_BIN:
        return [length_bin(ctx.document_of(rec))]
    if dim is Dimension.IN_PAGE:
        window_pages = set(rec.window.pages)
        in_page = any(r.page in window_pages for r in ctx.record_of(rec).replacements)
        return ["In-Page" if in_page else "Out-Page"]
    if dim is Dimension.QUADRANT:
        return sorted({r.quadrant.value for r in ctx.record_of(rec).replacements})
    if dim is Dimension.ELEMENT_CLASS:
        classes = {
            r.element_class.value
            for r in ctx.record_of(rec).replacements
            if r.element_class is not ElementClass.ISOLATED_FORMULA
        }
        return sorted(classes)
    if dim is Dimension.PAGE_ELEMENT_COUNT:
        doc = ctx.document_of(rec)
        count = sum(
            1
            for idx in rec.window.pages
            for el in doc.page(idx).elements
            if el.element_class in ctx.counted_classes
        )
        return ["0" if count == 0 else "1" if count == 1 else ">1"]
    if dim is Dimension.VARIANT:
        return [rec.variant]
    if dim is Dimension.WINDOW_SIZE:
        return [str(w)]
    if dim is Dimension.MODEL:
        return [rec.model]
    raise ValueError(f"unknown dimension {dim}")


def group_records(
    records: Iterable[ScoredRecord], ctx: GroupingContext, dimension: Dimension
) -> dict[GroupKey, list[ScoredRecord]]:
    out: dict[GroupKey, list[ScoredRecord]] = {}
    for rec, w in records:
        for label in _groups_for(rec, w, ctx, dimension):
            out.setdefault(GroupKey(dimension, label), []).append((rec, w))
    return out


@dataclass(frozen=True)
class MetricCell:
    model: str
    variant: str
    window: int
    key: GroupKey
    acc_d: float
    acc_p: float
    n_questions: int
    n_records: int


# Canonical in-table ordering per dimension; unknown labels sort after these.
GROUP_ORDER: dict[Dimension, tuple[str, ...]] = {
    Dimension.OVERALL: ("all",),
    Dimension.COMPLEXITY: ("C1", "C2", "C3"),
    Dimension.MACRO_ENTITY: ("numerical", "temporal", "miscellaneous", "location", "structural"),
    Dimension.DENSITY_BIN: ("<15%", "15-25%", ">25%"),
    Dimension.LENGTH_BIN: ("<4", "4-8", ">8"),
    Dimension.IN_PAGE: ("In-Page", "Out-Page"),
    Dimension.QUADRANT: ("top_left", "top_right", "bottom_left", "bottom_right"),
    Dimension.ELEMENT_CLASS: ("title", "plain_text", "figure", "table", "abandon"),
    Dimension.PAGE_ELEMENT_COUNT: ("0", "1", ">1"),
}


def _group_sort_key(dim: Dimension, label: str) -> tuple[int, str]:
    order = GROUP_ORDER.get(dim, ())
    return (order.index(label), "") if label in order else (len(order), label)


def compute_report(
    records: Iterable[ScoredRecord],
    ctx: GroupingContext,
    dimensions: Optional[list[Dimension]] = None,
    pooled_acc_p: bool = False,
) -> list[MetricCell]:
    """One cell per (model, variant, window, dimension, group), fully sorted."""
    dims = dimensions if dimensions is not None else list(Dimension)
    slices: dict[tuple[str, str, int], list[ScoredRecord]] = {}
    for rec, w in records:
        slices.setdefault((rec.model, rec.variant, w), []).append((rec, w))

    cells: list[MetricCell] = []
    for (model, variant, w), part in sorted(slices.items()):
        for dim in dims:
            grouped = group_records(part, ctx, dim)
            for key in sorted(grouped, key=lambda k: _group_sort_key(dim, k.value)):
                subset = grouped[key]
                questions = {r.question_id for r, _ in subset}
                cells.append(
                    MetricCell(
                        model=model,
                        variant=variant,
                        window=w,
                        key=key,
                        acc_d=acc_d(subset),
                        acc_p=acc_p(subset, pooled=pooled_acc_p),
                        n_questions=len(questions),
                        n_records=len(subset),
                    )
                )
    return cells


CSV_COLUMNS = [
    "model",
    "variant",
    "window",
    "dimension",
    "group",
    "acc_d",
    "acc_p",
    "n_questions",
    "n_records",
]


def cell_row(cell: MetricCell) -> dict:
    return {
        "model": cell.model,
        "variant": cell.variant,
        "window": cell.window,
        "dimension": cell.key.dimension.value,
        "group": cell.key.value,
        "acc_d": cell.acc_d,
        "acc_p": cell.acc_p,
        "n_questions": cell.n_questions,
        "n_records": cell.n_records,
    }


# Figure-name keys for plot data; each mirrors one ablation axis.
PLOT_FIGURES: dict[str, Dimension] = {
    "entity_macro_radar": Dimension.MACRO_ENTITY,
    "complexity_bars": Dimension.COMPLEXITY,
    "element_density_bins": Dimension.DENSITY_BIN,
    "document_length_bins": Dimension.LENGTH_BIN,
    "in_page_vs_out_page": Dimension.IN_PAGE,
    "quadrant_bars": Dimension.QUADRANT,
    "element_class_bars": Dimension.ELEMENT_CLASS,
    "page_element_count_bars": Dimension.PAGE_ELEMENT_COUNT,
    "variant_ablation": Dimension.VARIANT,
    "window_size_ablation": Dimension.WINDOW_SIZE,
}


def emit_report(cells: list[MetricCell], out_dir: Path) -> dict[str, Path]:
    """Write report.csv, report.json, and plotdata.json deterministically.

    Floats are written with ``repr`` so a CSV re-parse reproduces the
    in-memory values exactly.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out_dir / "report.csv",
        "json": out_dir / "report.json",
        "plotdata": out_dir / "plotdata.json",
    }

    with open(paths["csv"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for cell in cells:
            row = cell_row(cell)
            row["acc_d"] = repr(cell.acc_d)
            row["acc_p"] = repr(cell.acc_p)
            writer.writerow(row)

    paths["json"].write_text(
        json.dumps([cell_row(c) for c in cells], sort_keys=True, indent=1), encoding="utf-8"
    )

    plotdata: dict[str, list[dict]] = {}
    for figure, dim in PLOT_FIGURES.items():
        plotdata[figure] = [cell_row(c) for c in cells if c.key.dimension is dim]
    paths["plotdata"].write_text(
        json.dumps(plotdata, sort_keys=True, indent=1), encoding="utf-8"
    )
    return paths


def parse_report_csv(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = []
        for raw in csv.DictReader(fh):
            rows.append(
                {
                    **raw,
                    "window": int(raw["window"]),
                    "acc_d": float(raw["acc_d"]),
                    "acc_p": float(raw["acc_p"]),
                    "n_questions": int(raw["n_questions"]),
                    "n_records": int(raw["n_records"]),
                }
            )
        return rows
