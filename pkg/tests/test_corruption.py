"""Corruption: candidate selection, seeded substitution, refinement fallback."""

from __future__ import annotations

import random

import pytest

from uqbench.corpus import Question
from uqbench.corruption import (
    CandidateFilter,
    NotEnoughCandidates,
    Replacement,
    candidate_map,
    corrupt,
    corrupted_to_dict,
    generate_dataset,
    record_from_dict,
    refine,
    splice,
)
from uqbench.docmodel import ElementClass, Quadrant
from uqbench.entities import ElementProvenance, Entity, EntityTaxonomy, MacroCategory, QuestionProvenance
from uqbench.mock_providers import MockProviderSet, MockTransport
from uqbench.providers import ProviderConfig

from conftest import ScriptedTransport, chat_body, make_client


def q_entity(question: Question, surface: str, fine_type: str, macro: MacroCategory) -> Entity:
    start = question.text.index(surface)
    return Entity(
        surface=surface,
        fine_type=fine_type,
        macro=macro,
        score=0.9,
        provenance=QuestionProvenance(question.id, start, start + len(surface)),
    )


def pool_entity(
    surface: str,
    fine_type: str,
    macro: MacroCategory = MacroCategory.TEMPORAL,
    doc_id: str = "d1",
    page: int = 1,
    element_id: str = "p1e0",
    el_class: ElementClass = ElementClass.PLAIN_TEXT,
    quadrant: Quadrant = Quadrant.TOP_LEFT,
    start: int = 0,
) -> Entity:
    return Entity(
        surface=surface,
        fine_type=fine_type,
        macro=macro,
        score=0.85,
        provenance=ElementProvenance(
            doc_id, page, element_id, el_class, quadrant, start, start + len(surface)
        ),
    )


YEAR = "year_numerical_value"


# --- candidate map ---------------------------------------------------------------

def test_candidates_same_type_different_surface():
    q = Question(id="q1", document_id="d1", text="Was it built in 2009?")
    ent = q_entity(q, "2009", YEAR, MacroCategory.TEMPORAL)
    pool = [pool_entity("2009", YEAR), pool_entity("2011", YEAR, start=10)]
    cands = candidate_map([ent], pool)
    assert [c.surface for c in cands[ent]] == ["2011"]


def test_candidates_empty_when_no_same_type():
    q = Question(id="q1", document_id="d1", text="Was it built in 2009?")
    ent = q_entity(q, "2009", YEAR, MacroCategory.TEMPORAL)
    pool = [pool_entity("Lisbon", "city", MacroCategory.LOCATION)]
    assert candidate_map([ent], pool)[ent] == []


def test_candidates_surface_comparison_is_case_insensitive():
    q = Question(id="q1", document_id="d1", text="Is LISBON on the map?")
    ent = q_entity(q, "LISBON", "city", MacroCategory.LOCATION)
    pool = [pool_entity("Lisbon", "city", MacroCategory.LOCATION)]
    assert candidate_map([ent], pool)[ent] == []


def test_candidates_match_brute_force_filter():
    rng = random.Random(5)
    types = [YEAR, "city", "percentage"]
    q = Question(id="q1", document_id="d1", text="2001 Lisbon 10 %")
    q_entities = [
        q_entity(q, "2001", YEAR, MacroCategory.TEMPORAL),
        q_entity(q, "Lisbon", "city", MacroCategory.LOCATION),
        q_entity(q, "10 %", "percentage", MacroCategory.NUMERICAL),
    ]
    pool = [
        pool_entity(
            surface=rng.choice(["2001", "2002", "Lisbon", "Porto", "10 %", "20 %"]),
            fine_type=rng.choice(types),
            page=rng.randint(1, 3),
            element_id=f"p1e{rng.randint(0, 5)}",
            start=rng.randint(0, 40),
        )
        for _ in range(60)
    ]
    cands = candidate_map(q_entities, pool)
    for ent in q_entities:
        naive = [
            p
            for p in pool
            if p.fine_type == ent.fine_type and p.surface.lower() != ent.surface.lower()
        ]
        assert sorted(c.surface for c in cands[ent]) == sorted(p.surface for p in naive)
        order = [
            (c.provenance.page_index, c.provenance.element_id, c.provenance.start, c.provenance.end)
            for c in cands[ent]
        ]
        assert order == sorted(order)


def test_candidate_filters_restrict_by_class_and_page():
    q = Question(id="q1", document_id="d1", text="built in 2009")
    ent = q_entity(q, "2009", YEAR, MacroCategory.TEMPORAL)
    pool = [
        pool_entity("2010", YEAR, page=1, el_class=ElementClass.TITLE),
        pool_entity("2011", YEAR, page=2, el_class=ElementClass.TABLE),
    ]
    by_class = candidate_map([ent], pool, CandidateFilter(element_class=ElementClass.TABLE))
    assert [c.surface for c in by_class[ent]] == ["2011"]
    in_page = candidate_map([ent], pool, CandidateFilter(relation="in_page", target_page=1))
    assert [c.surface for c in in_page[ent]] == ["2010"]
    out_page = candidate_map([ent], pool, CandidateFilter(relation="out_page", target_page=1))
    assert [c.surface for c in out_page[ent]] == ["2011"]


# --- corrupt ---------------------------------------------------------------------

def _single_candidate_setup():
    q = Question(id="q1", document_id="d1", text="Was the site opened in 2009?")
    ent = q_entity(q, "2009", YEAR, MacroCategory.TEMPORAL)
    pool = [pool_entity("2011", YEAR)]
    return q, candidate_map([ent], pool)


def test_corrupt_single_swap():
    q, cands = _single_candidate_setup()
    cq = corrupt(q, cands, complexity=1, seed=0)
    assert cq.corrupted_text == "Was the site opened in 2011?"
    assert cq.complexity == 1
    assert cq.document_id == "d1"
    assert cq.replacements[0].original.surface == "2009"
    assert cq.replacements[0].substitute.surface == "2011"


def test_corrupt_insufficient_entities_raises():
    q, cands = _single_candidate_setup()
    with pytest.raises(NotEnoughCandidates):
        corrupt(q, cands, complexity=3, seed=0)


def test_corrupt_is_deterministic_for_seed():
    q = Question(id="q1", document_id="d1", text="Did Globex report 10 % in 2003 in Oslo?")
    q_entities = [
        q_entity(q, "Globex", "company_name", MacroCategory.MISCELLANEOUS),
        q_entity(q, "10 %", "percentage", MacroCategory.NUMERICAL),
        q_entity(q, "2003", YEAR, MacroCategory.TEMPORAL),
        q_entity(q, "Oslo", "city", MacroCategory.LOCATION),
    ]
    pool = [
        pool_entity("Initech", "company_name", MacroCategory.MISCELLANEOUS, start=0),
        pool_entity("Acme Corp", "company_name", MacroCategory.MISCELLANEOUS, start=10),
        pool_entity("25 %", "percentage", MacroCategory.NUMERICAL, start=20),
        pool_entity("1999", YEAR, start=30),
        pool_entity("2017", YEAR, start=40),
        pool_entity("Porto", "city", MacroCategory.LOCATION, start=50),
    ]
    cands = candidate_map(q_entities, pool)
    for complexity in (1, 2, 3):
        a = corrupt(q, cands, complexity, seed=42)
        b = corrupt(q, cands, complexity, seed=42)
        assert a == b
        assert len(a.replacements) == complexity
        for r in a.replacements:
            assert r.original.fine_type == r.substitute.fine_type
            assert r.original.surface.lower() != r.substitute.surface.lower()
            assert r.substitute.surface in a.corrupted_text


def test_corrupt_variants_differ_but_replay():
    q = Question(id="q1", document_id="d1", text="Did Globex report 10 % in 2003?")
    q_entities = [
        q_entity(q, "Globex", "company_name", MacroCategory.MISCELLANEOUS),
        q_entity(q, "10 %", "percentage", MacroCategory.NUMERICAL),
        q_entity(q, "2003", YEAR, MacroCategory.TEMPORAL),
    ]
    pool = [
        pool_entity("Initech", "company_name", MacroCategory.MISCELLANEOUS, start=0),
        pool_entity("25 %", "percentage", MacroCategory.NUMERICAL, start=20),
        pool_entity("1999", YEAR, start=30),
    ]
    cands = candidate_map(q_entities, pool)
    v0 = corrupt(q, cands, 1, seed=1, variant=0)
    v1 = corrupt(q, cands, 1, seed=1, variant=1)
    assert v0.id != v1.id
    assert corrupt(q, cands, 1, seed=1, variant=1) == v1


def test_splice_applies_edits_right_to_left():
    text = "a 2009 b 2010 c"
    out = splice(text, [(2, 6, "50"), (9, 13, "2222222")])
    assert out == "a 50 b 2222222 c"


def test_replacement_validation():
    q = Question(id="q1", document_id="d1", text="2009")
    orig = q_entity(q, "2009", YEAR, MacroCategory.TEMPORAL)
    with pytest.raises(ValueError):
        Replacement(original=orig, substitute=pool_entity("2009", YEAR))
    with pytest.raises(ValueError):
        Replacement(original=orig, substitute=pool_entity("ten", "percentage", MacroCategory.NUMERICAL))


# --- refine ------------------------------------------------------------------------

REFINER = ProviderConfig(name="refiner", endpoint="http://test/chat/completions", max_retries=0)


def _cq():
    q = Question(id="q1", document_id="d1", text="What is the highest temperature recorded?")
    ent = q_entity(q, "highest temperature", "temperature", MacroCategory.NUMERICAL)
    pool = [pool_entity("85 F", "temperature", MacroCategory.NUMERICAL)]
    return corrupt(q, candidate_map([ent], pool), 1, seed=0)


def test_refine_uses_model_rewrite_when_valid():
    cq = _cq()
    assert cq.corrupted_text == "What is the 85 F recorded?"
    transport = ScriptedTransport([(200, chat_body("Was 85 F the highest temperature recorded?"))])
    refined = refine(cq, REFINER, make_client(transport))
    assert refined.refined_text == "Was 85 F the highest temperature recorded?"
    assert refined.unrefined is False


def test_refine_echo_stub_keeps_corrupted_text_unflagged():
    cq = _cq()
    transport = ScriptedTransport([(200, chat_body(cq.corrupted_text))])
    refined = refine(cq, REFINER, make_client(transport))
    assert refined.refined_text == cq.corrupted_text
    assert refined.unrefined is False


def test_refine_retries_once_then_falls_back():
    cq = _cq()
    transport = ScriptedTransport(
        [(200, chat_body("dropped the substitute")), (200, chat_body("still wrong"))]
    )
    refined = refine(cq, REFINER, make_client(transport))
    assert len(transport.calls) == 2
    assert refined.refined_text == cq.corrupted_text
    assert refined.unrefined is True


def test_refine_retry_can_recover():
    cq = _cq()
    transport = ScriptedTransport(
        [(200, chat_body("missing")), (200, chat_body("Was 85 F recorded as the maximum?"))]
    )
    refined = refine(cq, REFINER, make_client(transport))
    assert refined.refined_text == "Was 85 F recorded as the maximum?"
    assert refined.unrefined is False


def test_refine_provider_failure_falls_back():
    cq = _cq()
    transport = ScriptedTransport([(500, {})])
    refined = refine(cq, REFINER, make_client(transport))
    assert refined.refined_text == cq.corrupted_text
    assert refined.unrefined is True


# --- dataset generation ---------------------------------------------------------------

def test_generate_dataset_counts_and_manifest():
    mocks = MockProviderSet()
    client = make_client(MockTransport())
    questions = [
        Question(id=f"q{i}", document_id="d1", text=f"Was it built in {1991 + i}?")
        for i in range(5)
    ]
    pool = [pool_entity("2020", YEAR, start=i * 10) for i in range(1)]
    corrupted, manifest = generate_dataset(
        questions,
        {"d1": pool},
        EntityTaxonomy(),
        mocks.ner,
        mocks.refiner,
        client,
        complexities=(1, 2, 3),
        seed=3,
    )
    assert manifest["per_complexity"] == {"1": 5, "2": 0, "3": 0}
    assert manifest["not_enough_candidates"] == {"1": 0, "2": 5, "3": 5}
    # Oracle: recount emitted records from their serialized form.
    recount: dict[str, int] = {"1": 0, "2": 0, "3": 0}
    for cq in corrupted:
        recount[str(cq.complexity)] += 1
    assert recount == manifest["per_complexity"]
    assert manifest["n_corrupted"] == len(corrupted) == 5


def test_corrupted_record_round_trip():
    cq = _cq()
    raw = corrupted_to_dict(cq)
    rec = record_from_dict(raw)
    assert rec.id == cq.id
    assert rec.complexity == cq.complexity
    assert rec.final_text == cq.corrupted_text  # refined_text unset
    assert rec.replacements[0].substitute_surface == "85 F"
    assert rec.replacements[0].element_class is ElementClass.PLAIN_TEXT
    assert rec.replacements[0].quadrant is Quadrant.TOP_LEFT
