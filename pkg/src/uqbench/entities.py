"""Entity taxonomy and NER orchestration over questions and document elements.

The taxonomy groups fine-grained entity types into five macro categories and
carries the per-type detection thresholds. Extraction runs per element (not
per concatenated page) so every pooled entity keeps element-precise
provenance for the layout and element analyses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Union

from .corpus import Question
from .docmodel import Document, ElementClass, Quadrant, quadrant_of
from .providers import NerLabel, NerRequest, ProviderConfig, ProviderError, ServiceClient, extract_entities

logger = logging.getLogger(__name__)


class MacroCategory(str, Enum):
    NUMERICAL = "numerical"
    TEMPORAL = "temporal"
    MISCELLANEOUS = "miscellaneous"
    LOCATION = "location"
    STRUCTURAL = "structural"


DEFAULT_THRESHOLD = 0.75

FINE_TYPES: dict[MacroCategory, tuple[str, ...]] = {
    MacroCategory.NUMERICAL: (
        "percentage",
        "currency",
        "temperature",
        "measure_unit",
        "numerical_value_number",
        "price_number_information",
        "price_numerical_value",
    ),
    MacroCategory.TEMPORAL: (
        "date_information",
        "date_numerical_value",
        "time_information",
        "time_numerical_value",
        "year_number_information",
        "year_numerical_value",
    ),
    MacroCategory.MISCELLANEOUS: (
        "person_name",
        "company_name",
        "product",
        "food",
        "chemical_element",
        "job_title_name",
        "job_title_information",
        "animal",
        "plant",
        "movie",
        "book",
        "transport_means",
        "event",
    ),
    MacroCategory.LOCATION: (
        "country",
        "city",
        "street",
        "spatial_information",
        "continent",
        "postal_code_information",
        "postal_code_numerical_value",
    ),
    MacroCategory.STRUCTURAL: (
        "document_position_information",
        "page_number_information",
        "page_number_numerical_value",
        "document_element_type",
        "document_element_information",
        "document_structure_information",
    ),
}

THRESHOLD_OVERRIDES: dict[str, float] = {
    "document_element_type": 0.8,
    "document_element_information": 0.8,
    "document_structure_information": 0.8,
    "postal_code_information": 0.8,
    "postal_code_numerical_value": 0.78,
    "job_title_information": 0.8,
    "job_title_name": 0.9,
    "year_numerical_value": 0.7,
    "date_information": 0.75,
}


class ExtractionError(RuntimeError):
    """NER failed for a question; the question is skipped by the caller."""


@dataclass(frozen=True)
class EntityTaxonomy:
    fine_types: dict[MacroCategory, tuple[str, ...]] = field(
        default_factory=lambda: dict(FINE_TYPES)
    )
    default_threshold: float = DEFAULT_THRESHOLD
    overrides: dict[str, float] = field(default_factory=lambda: dict(THRESHOLD_OVERRIDES))

    def __post_init__(self):
        seen: dict[str, MacroCategory] = {}
        for macro, types in self.fine_types.items():
            for t in types:
                if t in seen:
                    raise ValueError(f"fine type {t!r} in both {seen[t]} and {macro}")
                seen[t] = macro
        for t in self.overrides:
            if t not in seen:
                raise ValueError(f"threshold override for unknown fine type {t!r}")
        object.__setattr__(self, "_macro_of", seen)

    def all_fine_types(self) -> list[str]:
        return [t for types in self.fine_types.values() for t in types]

    def macro_of(self, fine_type: str) -> MacroCategory:
        try:
            return self._macro_of[fine_type]
        except KeyError:
            raise KeyError(f"unknown fine type {fine_type!r}") from None

    def threshold(self, fine_type: str) -> float:
        self.macro_of(fine_type)
        return self.overrides.get(fine_type, self.default_threshold)

    def ner_labels(self) -> list[NerLabel]:
        return [NerLabel(t, self.threshold(t)) for t in self.all_fine_types()]

    def with_overrides(self, overrides: dict[str, float]) -> "EntityTaxonomy":
        merged = dict(self.overrides)
        merged.update(overrides)
        return replace(self, overrides=merged)


@dataclass(frozen=True)
class QuestionProvenance:
    question_id: str
    start: int
    end: int


@dataclass(frozen=True)
class ElementProvenance:
    document_id: str
    page_index: int
    element_id: str
    element_class: ElementClass
    quadrant: Quadrant
    start: int
    end: int


Provenance = Union[QuestionProvenance, ElementProvenance]


@dataclass(frozen=True)
class Entity:
    surface: str
    fine_type: str
    macro: MacroCategory
    score: float
    provenance: Provenance


def extract_question_entities(
    question: Question,
    taxonomy: EntityTaxonomy,
    ner_cfg: ProviderConfig,
    client: ServiceClient,
) -> list[Entity]:
    """NER over the question text; duplicates on (span, fine type) collapse."""
    if not question.text:
        raise ValueError(f"question {question.id!r} has empty text")
    try:
        spans = extract_entities(
            NerRequest(text=question.text, labels=tuple(taxonomy.ner_labels())),
            ner_cfg,
            client,
        )
    except ProviderError as exc:
        raise ExtractionError(f"NER failed for question {question.id!r}: {exc}") from exc
    out: list[Entity] = []
    seen: set[tuple[int, int, str]] = set()
    for span in spans:
        key = (span.start, span.end, span.fine_type)
        if key in seen:
            continue
        seen.add(key)
        out.append(
            Entity(
                surface=span.surface,
                fine_type=span.fine_type,
                macro=taxonomy.macro_of(span.fine_type),
                score=span.score,
                provenance=QuestionProvenance(question.id, span.start, span.end),
            )
        )
    return out


def build_entity_pool(
    doc: Document,
    taxonomy: EntityTaxonomy,
    ner_cfg: ProviderConfig,
    client: ServiceClient,
) -> list[Entity]:
    """NER over every augmented element text (captions included).

    A failing element is logged and skipped; the document is not failed.
    """
    labels = tuple(taxonomy.ner_labels())
    pool: list[Entity] = []
    for page in doc.pages:
        for el in page.elements:
            if not el.text:
                continue
            try:
                spans = extract_entities(NerRequest(text=el.text, labels=labels), ner_cfg, client)
            except ProviderError as exc:
                logger.warning(
                    "NER failed for %s p%d %s, element skipped: %s",
                    doc.id, page.index, el.id, exc,
                )
                continue
            quad = quadrant_of(el.bbox, page)
            for span in spans:
                pool.append(
                    Entity(
                        surface=span.surface,
                        fine_type=span.fine_type,
                        macro=taxonomy.macro_of(span.fine_type),
                        score=span.score,
                        provenance=ElementProvenance(
                            document_id=doc.id,
                            page_index=page.index,
                            element_id=el.id,
                            element_class=el.element_class,
                            quadrant=quad,
                            start=span.start,
                            end=span.end,
                        ),
                    )
                )
    return pool


def index_by_type(pool: list[Entity]) -> dict[str, list[Entity]]:
    by_type: dict[str, list[Entity]] = {}
    for ent in pool:
        by_type.setdefault(ent.fine_type, []).append(ent)
    return by_type


def entity_to_dict(ent: Entity) -> dict:
    prov = ent.provenance
    if isinstance(prov, QuestionProvenance):
        prov_raw: dict = {
            "kind": "question",
            "question_id": prov.question_id,
            "start": prov.start,
            "end": prov.end,
        }
    else:
        prov_raw = {
            "kind": "element",
            "document_id": prov.document_id,
            "page_index": prov.page_index,
            "element_id": prov.element_id,
            "element_class": prov.element_class.value,
            "quadrant": prov.quadrant.value,
            "start": prov.start,
            "end": prov.end,
        }
    return {
        "surface": ent.surface,
        "fine_type": ent.fine_type,
        "macro": ent.macro.value,
        "score": ent.score,
        "provenance": prov_raw,
    }


def entity_from_dict(raw: dict) -> Entity:
    prov_raw = raw["provenance"]
    prov: Provenance
    if prov_raw["kind"] == "question":
        prov = QuestionProvenance(prov_raw["question_id"], prov_raw["start"], prov_raw["end"])
    else:
        prov = ElementProvenance(
            document_id=prov_raw["document_id"],
            page_index=prov_raw["page_index"],
            element_id=prov_raw["element_id"],
            element_class=ElementClass.parse(prov_raw["element_class"]),
            quadrant=Quadrant(prov_raw["quadrant"]),
            start=prov_raw["start"],
            end=prov_raw["end"],
        )
    return Entity(
        surface=raw["surface"],
        fine_type=raw["fine_type"],
        macro=MacroCategory(raw["macro"]),
        score=raw["score"],
        provenance=prov,
    )
