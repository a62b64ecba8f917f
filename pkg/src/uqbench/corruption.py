"""Typed entity substitution: turn answerable questions into plausible
unanswerable candidates.

Each corruption replaces 1-3 question entities with same-type entities drawn
from the document's pool, splices them into the text, and sends the result
through an LLM refinement pass that must preserve every substitute surface.
Generation is a pure function of (question, pool, taxonomy, seed).
"""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass, replace as dc_replace
from typing import Optional

from .corpus import Question
from .docmodel import ElementClass, Quadrant
from .entities import (
    ElementProvenance,
    Entity,
    EntityTaxonomy,
    ExtractionError,
    QuestionProvenance,
    build_entity_pool,
    extract_question_entities,
)
from .prompts import render_refinement_prompt
from .providers import ChatRequest, ProviderConfig, ProviderError, ServiceClient, chat_payload

logger = logging.getLogger(__name__)

MAX_COMPLEXITY = 3


class NotEnoughCandidates(RuntimeError):
    """The question cannot support the requested corruption complexity."""


@dataclass(frozen=True)
class Replacement:
    original: Entity
    substitute: Entity

    def __post_init__(self):
        if not isinstance(self.original.provenance, QuestionProvenance):
            raise ValueError("replacement original must carry question provenance")
        if not isinstance(self.substitute.provenance, ElementProvenance):
            raise ValueError("replacement substitute must carry element provenance")
        if self.original.fine_type != self.substitute.fine_type:
            raise ValueError(
                f"type mismatch: {self.original.fine_type} vs {self.substitute.fine_type}"
            )
        if self.original.surface.lower() == self.substitute.surface.lower():
            raise ValueError(f"substitute equals original surface: {self.original.surface!r}")


@dataclass(frozen=True)
class CorruptedQuestion:
    id: str
    source_question_id: str
    document_id: str
    original_text: str
    corrupted_text: str
    complexity: int
    replacements: tuple[Replacement, ...]
    rng_seed: int
    refined_text: Optional[str] = None
    unrefined: bool = False

    def __post_init__(self):
        object.__setattr__(self, "replacements", tuple(self.replacements))
        if not 1 <= self.complexity <= MAX_COMPLEXITY:
            raise ValueError(f"complexity out of range: {self.complexity}")
        if len(self.replacements) != self.complexity:
            raise ValueError(
                f"{len(self.replacements)} replacements for complexity {self.complexity}"
            )
        spans = sorted(
            (r.original.provenance.start, r.original.provenance.end) for r in self.replacements
        )
        for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
            if s1 < e0:
                raise ValueError(f"overlapping original spans: {(s0, e0)} and {(s1, e1)}")

    @property
    def final_text(self) -> str:
        return self.refined_text if self.refined_text is not None else self.corrupted_text


@dataclass(frozen=True)
class CandidateFilter:
    """Optional targeted-generation filters over substitute provenance."""

    element_class: Optional[ElementClass] = None
    relation: Optional[str] = None  # "in_page" | "out_page"
    target_page: Optional[int] = None

    def admits(self, entity: Entity) -> bool:
        prov = entity.provenance
        assert isinstance(prov, ElementProvenance)
        if self.element_class is not None and prov.element_class is not self.element_class:
            return False
        if self.relation is not None:
            if self.target_page is None:
                raise ValueError("relation filter requires target_page")
            in_page = prov.page_index == self.target_page
            if self.relation == "in_page" and not in_page:
                return False
            if self.relation == "out_page" and in_page:
                return False
        return True


def candidate_map(
    question_entities: list[Entity],
    pool: list[Entity],
    candidate_filter: Optional[CandidateFilter] = None,
) -> dict[Entity, list[Entity]]:
    """For each question entity, the same-type pool entities with a different
    surface, in deterministic (page, element id, span) order."""
    ordered = sorted(
        pool,
        key=lambda e: (
            e.provenance.page_index,
            e.provenance.element_id,
            e.provenance.start,
            e.provenance.end,
        ),
    )
    out: dict[Entity, list[Entity]] = {}
    for q_ent in question_entities:
        matches = [
            p
            for p in ordered
            if p.fine_type == q_ent.fine_type
            and p.surface.lower() != q_ent.surface.lower()
            and (candidate_filter is None or candidate_filter.admits(p))
        ]
        out[q_ent] = matches
    return out


def derive_rng(seed: int, *parts: object) -> random.Random:
    material = ":".join([str(seed), *map(str, parts)])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def splice(text: str, edits: list[tuple[int, int, str]]) -> str:
    """Apply (start, end, replacement) edits right-to-left so offsets stay valid."""
    out = text
    for start, end, repl in sorted(edits, key=lambda e: e[0], reverse=True):
        out = out[:start] + repl + out[end:]
    return out


def corrupt(
    question: Question,
    candidates: dict[Entity, list[Entity]],
    complexity: int,
    seed: int,
    variant: int = 0,
) -> CorruptedQuestion:
    """Build one pre-refinement corrupted question.

    Entity and substitute choices are uniform draws from a generator derived
    from (seed, question id, complexity, variant), so repeated calls replay
    exactly.
    """
    if not 1 <= complexity <= MAX_COMPLEXITY:
        raise ValueError(f"complexity out of range: {complexity}")
    eligible = [ent for ent, cands in candidates.items() if cands]
    if len(eligible) < complexity:
        raise NotEnoughCandidates(
            f"question {question.id!r}: {len(eligible)} eligible entities < C={complexity}"
        )
    rng = derive_rng(seed, question.id, complexity, variant)
    shuffled = list(eligible)
    rng.shuffle(shuffled)

    chosen: list[Entity] = []
    taken: list[tuple[int, int]] = []
    for ent in shuffled:
        prov = ent.provenance
        assert isinstance(prov, QuestionProvenance)
        if any(prov.start < e and s < prov.end for s, e in taken):
            continue
        chosen.append(ent)
        taken.append((prov.start, prov.end))
        if len(chosen) == complexity:
            break
    if len(chosen) < complexity:
        raise NotEnoughCandidates(
            f"question {question.id!r}: only {len(chosen)} non-overlapping eligible "
            f"entities for C={complexity}"
        )

    replacements = []
    edits = []
    for ent in chosen:
        substitute = rng.choice(candidates[ent])
        replacements.append(Replacement(original=ent, substitute=substitute))
        prov = ent.provenance
        edits.append((prov.start, prov.end, substitute.surface))
    replacements.sort(key=lambda r: r.original.provenance.start)

    cq_id = f"{question.id}_c{complexity}" + (f"_v{variant}" if variant else "")
    document_id = replacements[0].substitute.provenance.document_id
    return CorruptedQuestion(
        id=cq_id,
        source_question_id=question.id,
        document_id=document_id,
        original_text=question.text,
        corrupted_text=splice(question.text, edits),
        complexity=complexity,
        replacements=tuple(replacements),
        rng_seed=seed,
    )


def refine(
    cq: CorruptedQuestion,
    refiner: ProviderConfig,
    client: ServiceClient,
) -> CorruptedQuestion:
    """Fluency-refine the corrupted text, keeping every substitute verbatim.

    One retry on validation failure (fresh sample via a cache-key salt), then
    fall back to the raw corrupted text with the unrefined flag set. Provider
    failures take the same fallback; nothing is dropped here.
    """
    surfaces = [r.substitute.surface for r in cq.replacements]
    prompt = render_refinement_prompt(cq.original_text, cq.corrupted_text, surfaces)
    payload = chat_payload(ChatRequest(system="", user=prompt, provider=refiner.name), refiner)
    for attempt, salt in enumerate(("", "refine-retry")):
        try:
            result = client.call(refiner, payload, key_salt=salt)
        except ProviderError as exc:
            logger.warning("refiner failed for %s: %s", cq.id, exc)
            break
        text = _completion_text(result.body)
        if text is None:
            logger.warning("refiner returned malformed body for %s", cq.id)
            continue
        text = text.strip()
        if all(s in text for s in surfaces):
            return dc_replace(cq, refined_text=text, unrefined=False)
        logger.info("refinement attempt %d for %s dropped a substitute", attempt + 1, cq.id)
    return dc_replace(cq, refined_text=cq.corrupted_text, unrefined=True)


def _completion_text(body: dict) -> Optional[str]:
    try:
        text = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        return None
    return text if isinstance(text, str) else None


def replacement_to_dict(r: Replacement) -> dict:
    sub_prov = r.substitute.provenance
    assert isinstance(sub_prov, ElementProvenance)
    return {
        "original": {"surface": r.original.surface, "fine_type": r.original.fine_type},
        "substitute": {
            "surface": r.substitute.surface,
            "fine_type": r.substitute.fine_type,
            "page": sub_prov.page_index,
            "element_id": sub_prov.element_id,
            "element_class": sub_prov.element_class.value,
            "quadrant": sub_prov.quadrant.value,
        },
    }


def corrupted_to_dict(cq: CorruptedQuestion) -> dict:
    return {
        "id": cq.id,
        "source_question_id": cq.source_question_id,
        "document_id": cq.document_id,
        "original_text": cq.original_text,
        "corrupted_text": cq.corrupted_text,
        "refined_text": cq.refined_text,
        "complexity": cq.complexity,
        "replacements": [replacement_to_dict(r) for r in cq.replacements],
        "rng_seed": cq.rng_seed,
        "unrefined_flag": cq.unrefined,
    }


@dataclass(frozen=True)
class ReplacementRecord:
    """One replacement as persisted in the corrupted dataset JSON lines."""

    original_surface: str
    original_fine_type: str
    substitute_surface: str
    substitute_fine_type: str
    page: int
    element_id: str
    element_class: ElementClass
    quadrant: Quadrant


@dataclass(frozen=True)
class CorruptedRecord:
    """A corrupted question as read back from disk (provenance flattened)."""

    id: str
    source_question_id: str
    document_id: str
    original_text: str
    corrupted_text: str
    refined_text: Optional[str]
    complexity: int
    replacements: tuple[ReplacementRecord, ...]
    rng_seed: int
    unrefined: bool = False

    @property
    def final_text(self) -> str:
        return self.refined_text if self.refined_text is not None else self.corrupted_text


def record_from_dict(raw: dict) -> CorruptedRecord:
    replacements = tuple(
        ReplacementRecord(
            original_surface=r["original"]["surface"],
            original_fine_type=r["original"]["fine_type"],
            substitute_surface=r["substitute"]["surface"],
            substitute_fine_type=r["substitute"]["fine_type"],
            page=r["substitute"]["page"],
            element_id=r["substitute"]["element_id"],
            element_class=ElementClass.parse(r["substitute"]["element_class"]),
            quadrant=Quadrant(r["substitute"]["quadrant"]),
        )
        for r in raw["replacements"]
    )
    return CorruptedRecord(
        id=raw["id"],
        source_question_id=raw["source_question_id"],
        document_id=raw["document_id"],
        original_text=raw["original_text"],
        corrupted_text=raw["corrupted_text"],
        refined_text=raw.get("refined_text"),
        complexity=raw["complexity"],
        replacements=replacements,
        rng_seed=raw["rng_seed"],
        unrefined=raw.get("unrefined_flag", False),
    )


def generate_dataset(
    questions: list[Question],
    pools: dict[str, list[Entity]],
    taxonomy: EntityTaxonomy,
    ner: ProviderConfig,
    refiner: ProviderConfig,
    client: ServiceClient,
    complexities: tuple[int, ...] = (1, 2, 3),
    seed: int = 0,
    variants: int = 1,
    candidate_filter: Optional[CandidateFilter] = None,
) -> tuple[list[CorruptedQuestion], dict]:
    """Corrupt every question at every requested complexity.

    Questions whose document has no pool, that yield no entities, or that
    cannot support a complexity contribute nothing for that slot; all skips
    land in the manifest. Output order follows (question order, complexity,
    variant), so a fixed input snapshot and seed reproduce the file exactly.
    """
    out: list[CorruptedQuestion] = []
    counts = {c: 0 for c in complexities}
    skipped: dict[str, int] = {"no_pool": 0, "no_entities": 0, "ner_error": 0}
    not_enough: dict[int, int] = {c: 0 for c in complexities}

    for question in questions:
        pool = pools.get(question.document_id)
        if not pool:
            skipped["no_pool"] += 1
            continue
        try:
            q_entities = extract_question_entities(question, taxonomy, ner, client)
        except ExtractionError as exc:
            logger.warning("skipping question %s: %s", question.id, exc)
            skipped["ner_error"] += 1
            continue
        if not q_entities:
            skipped["no_entities"] += 1
            continue
        candidates = candidate_map(q_entities, pool, candidate_filter)
        for complexity in complexities:
            for variant in range(variants):
                try:
                    cq = corrupt(question, candidates, complexity, seed, variant)
                except NotEnoughCandidates:
                    not_enough[complexity] += 1
                    break  # higher variants of the same complexity fail identically
                cq = refine(cq, refiner, client)
                out.append(cq)
                counts[complexity] += 1

    manifest = {
        "n_questions": len(questions),
        "n_corrupted": len(out),
        "per_complexity": {str(c): counts[c] for c in complexities},
        "not_enough_candidates": {str(c): not_enough[c] for c in complexities},
        "skipped": skipped,
        "seed": seed,
        "variants": variants,
    }
    return out, manifest


def build_pools(
    documents: list,
    taxonomy: EntityTaxonomy,
    ner: ProviderConfig,
    client: ServiceClient,
) -> dict[str, list[Entity]]:
    """Entity pools for a batch of augmented documents, keyed by document id."""
    return {doc.id: build_entity_pool(doc, taxonomy, ner, client) for doc in documents}
