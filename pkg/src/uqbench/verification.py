"""Per-page unanswerability judging and the human review gate.

A corrupted question is verified unanswerable only when the judge reports it
unanswerable on every page of its document. Judging short-circuits on the
first answerable page; the pages never judged are recorded as skipped so the
stored verdicts stay a complete account.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass
from typing import Iterable, Optional

from .augment import page_ocr_text
from .corpus import DatasetDir
from .corruption import CorruptedRecord
from .docmodel import Document, Page
from .prompts import render_judge_prompt
from .providers import ChatRequest, ProviderConfig, ProviderError, ServiceClient, chat_payload

logger = logging.getLogger(__name__)

VERIFIED_UNANSWERABLE = "verified_unanswerable"
ANSWERABLE_SOMEWHERE = "answerable_somewhere"
UNVERIFIABLE = "unverifiable"


class MalformedVerdict(ValueError):
    """The judge response could not be parsed into a verdict."""


@dataclass(frozen=True)
class JudgeVerdict:
    question_id: str
    page_index: int
    verification_result: Optional[bool]  # None only for skipped pages
    question_answer: str
    raw_response: str
    skipped: bool = False


@dataclass(frozen=True)
class VerificationOutcome:
    question_id: str
    status: str
    verdicts: tuple[JudgeVerdict, ...]
    reason: str = ""


@dataclass(frozen=True)
class ReviewDecision:
    question_id: str
    reviewer: str
    decision: str  # "accept" | "reject"
    note: str = ""
    timestamp: float = 0.0

    def __post_init__(self):
        if self.decision not in ("accept", "reject"):
            raise ValueError(f"decision must be accept or reject: {self.decision!r}")


def entities_string(record: CorruptedRecord) -> str:
    return "\n".join(
        f"{r.original_surface} --> {r.substitute_surface}" for r in record.replacements
    )


def build_judge_prompt(
    record: CorruptedRecord, page: Page, page_image: bytes, judge: ProviderConfig
) -> ChatRequest:
    """Judge request for one (question, page): template text plus the page image."""
    prompt = render_judge_prompt(
        ocr_text=page_ocr_text(page),
        entities_string=entities_string(record),
        question=record.final_text,
    )
    return ChatRequest(system="", user=prompt, images=(page_image,), provider=judge.name)


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n(.*?)```", re.DOTALL)


def parse_verdict(raw: str, question_id: str, page_index: int) -> JudgeVerdict:
    """Parse a judge response, tolerating code fences and surrounding prose."""
    candidates = [raw.strip()]
    fenced = _FENCE_RE.search(raw)
    if fenced:
        candidates.append(fenced.group(1).strip())
    start, end = raw.find("{"), raw.rfind("}")
    if 0 <= start < end:
        candidates.append(raw[start : end + 1])

    data = None
    for text in candidates:
        try:
            parsed = json.loads(text)
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, dict):
            data = parsed
            break
    if data is None or "verification_result" not in data:
        raise MalformedVerdict(f"no verification_result JSON in response: {raw[:200]!r}")

    value = data["verification_result"]
    if isinstance(value, bool):
        result = value
    elif isinstance(value, str) and value.strip().lower() in ("true", "false"):
        result = value.strip().lower() == "true"
    else:
        raise MalformedVerdict(f"verification_result not a boolean: {value!r}")

    return JudgeVerdict(
        question_id=question_id,
        page_index=page_index,
        verification_result=result,
        question_answer=str(data.get("question_answer", "")),
        raw_response=raw,
    )


def verify_question(
    record: CorruptedRecord,
    doc: Document,
    dataset: DatasetDir,
    judge: ProviderConfig,
    client: ServiceClient,
) -> VerificationOutcome:
    """Judge every page; unanswerable iff every page verdict is false.

    Short-circuits on the first answerable page (the rest become skipped
    verdicts). A page that stays malformed after one rejudge, or a provider
    failure, marks the question unverifiable.
    """
    verdicts: list[JudgeVerdict] = []
    for page in doc.pages:
        page_image = dataset.image_path(page.image_ref).read_bytes()
        req = build_judge_prompt(record, page, page_image, judge)
        payload = chat_payload(req, judge)
        verdict: Optional[JudgeVerdict] = None
        failure = ""
        for salt in ("", "rejudge"):
            try:
                result = client.call(judge, payload, key_salt=salt)
                raw = result.body["choices"][0]["message"]["content"]
                verdict = parse_verdict(raw, record.id, page.index)
                break
            except ProviderError as exc:
                failure = f"judge call failed on page {page.index}: {exc}"
                break
            except (MalformedVerdict, KeyError, IndexError, TypeError) as exc:
                failure = f"malformed verdict on page {page.index}: {exc}"
        if verdict is None:
            return VerificationOutcome(
                question_id=record.id,
                status=UNVERIFIABLE,
                verdicts=tuple(verdicts),
                reason=failure,
            )
        verdicts.append(verdict)
        if verdict.verification_result:
            for later in doc.pages[page.index :]:
                verdicts.append(
                    JudgeVerdict(
                        question_id=record.id,
                        page_index=later.index,
                        verification_result=None,
                        question_answer="",
                        raw_response="",
                        skipped=True,
                    )
                )
            return VerificationOutcome(
                question_id=record.id, status=ANSWERABLE_SOMEWHERE, verdicts=tuple(verdicts)
            )
    return VerificationOutcome(
        question_id=record.id, status=VERIFIED_UNANSWERABLE, verdicts=tuple(verdicts)
    )


def replay_status(verdicts: Iterable[JudgeVerdict]) -> str:
    """Recompute the question status from stored verdicts (conjunction check)."""
    saw_any = False
    for v in verdicts:
        if v.skipped:
            continue
        saw_any = True
        if v.verification_result:
            return ANSWERABLE_SOMEWHERE
    return VERIFIED_UNANSWERABLE if saw_any else UNVERIFIABLE


def verdict_to_dict(v: JudgeVerdict) -> dict:
    return {
        "question_id": v.question_id,
        "page": v.page_index,
        "verification_result": v.verification_result,
        "question_answer": v.question_answer,
        "raw_response": v.raw_response,
        "skipped": v.skipped,
    }


def verdict_from_dict(raw: dict) -> JudgeVerdict:
    return JudgeVerdict(
        question_id=raw["question_id"],
        page_index=raw["page"],
        verification_result=raw["verification_result"],
        question_answer=raw.get("question_answer", ""),
        raw_response=raw.get("raw_response", ""),
        skipped=raw.get("skipped", False),
    )


def decision_to_dict(d: ReviewDecision) -> dict:
    return {
        "question_id": d.question_id,
        "reviewer": d.reviewer,
        "decision": d.decision,
        "note": d.note,
        "timestamp": d.timestamp or time.time(),
    }


def decision_from_dict(raw: dict) -> ReviewDecision:
    return ReviewDecision(
        question_id=raw["question_id"],
        reviewer=raw["reviewer"],
        decision=raw["decision"],
        note=raw.get("note", ""),
        timestamp=raw.get("timestamp", 0.0),
    )


def active_decisions(decisions: Iterable[ReviewDecision]) -> dict[str, str]:
    """Aggregate decisions: latest per (question, reviewer), then majority.

    A question is rejected only when rejecting reviewers strictly outnumber
    accepting ones; a single reviewer is sufficient either way.
    """
    latest: dict[tuple[str, str], ReviewDecision] = {}
    for d in decisions:
        key = (d.question_id, d.reviewer)
        if key not in latest or d.timestamp >= latest[key].timestamp:
            latest[key] = d
    tally: dict[str, list[str]] = {}
    for (qid, _), d in latest.items():
        tally.setdefault(qid, []).append(d.decision)
    out = {}
    for qid, votes in tally.items():
        rejects = sum(1 for v in votes if v == "reject")
        accepts = len(votes) - rejects
        out[qid] = "reject" if rejects > accepts else "accept"
    return out


def export_verified(
    verified_ids: list[str],
    records: dict[str, CorruptedRecord],
    decisions: Iterable[ReviewDecision],
) -> tuple[list[CorruptedRecord], dict]:
    """Verified questions minus review rejections, plus coverage stats."""
    verdict_by_q = active_decisions(decisions)
    exported = [
        records[qid] for qid in verified_ids if verdict_by_q.get(qid, "accept") == "accept"
    ]
    reviewed = sum(1 for qid in verified_ids if qid in verdict_by_q)
    manifest = {
        "n_verified": len(verified_ids),
        "n_reviewed": reviewed,
        "n_rejected": len(verified_ids) - len(exported),
        "n_exported": len(exported),
        "review_coverage": reviewed / len(verified_ids) if verified_ids else 0.0,
    }
    return exported, manifest
