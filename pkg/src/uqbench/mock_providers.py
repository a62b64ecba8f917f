"""Deterministic in-process providers for offline runs and the test suite.

The mock transport answers every service the pipeline knows how to call:
layout detection, NER, OCR, captioning, refinement, judging, VQA, and answer
standardization. Every response is a pure function of the request bytes, so
two runs over the same inputs produce identical artifacts without a network.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

from .providers import ProviderConfig, Transport

CITIES = ("Lisbon", "Madrid", "Oslo", "Prague", "Dublin", "Vienna", "Porto", "Turin")
COMPANIES = ("Acme Corp", "Globex", "Initech", "Umbrella Ltd", "Vortex Labs")

REFUSAL_PHRASINGS = (
    "Unable to determine",
    "Not available.",
    "The document does not provide information to answer this question.",
    "I cannot provide an answer based on the given text.",
    "unable to determine.",
    "There is no mention of that anywhere in these pages.",
)
FAKE_ANSWERS = ("1987", "Lisbon", "42 %", "approximately twelve", "Globex", "75 F")

# Phrases the mock standardizer treats as refusals (beyond the rule pass).
STANDARDIZER_CUES = ("no mention", "cannot", "not stated", "does not contain", "no information")


def stable_digest(*parts: object) -> int:
    h = hashlib.sha256()
    for part in parts:
        data = part if isinstance(part, bytes) else str(part).encode("utf-8")
        h.update(data)
        h.update(b"\x00")
    return int.from_bytes(h.digest()[:8], "big")


def synth_element_text(h: int) -> str:
    """Deterministic OCR-style sentence with typed entities for the mock NER."""
    year = 1990 + h % 30
    other_year = 1990 + (h >> 8) % 30
    pct = 5 + h % 90
    temp = 40 + h % 60
    city = CITIES[h % len(CITIES)]
    company = COMPANIES[(h >> 4) % len(COMPANIES)]
    variant = h % 4
    if variant == 0:
        return f"{company} reported revenue growth of {pct} % during {year} in {city}."
    if variant == 1:
        return f"In {year} the office in {city} recorded a peak temperature of {temp} F."
    if variant == 2:
        return f"See the table on page {1 + h % 9} for {company} results from {year} to {other_year}."
    return f"{city} branch summary: {pct} % of shipments arrived before {year}."


def synth_caption(h: int) -> str:
    year = 1991 + h % 28
    other_year = 1991 + (h >> 6) % 28
    pct = 5 + (h >> 3) % 90
    company = COMPANIES[h % len(COMPANIES)]
    city = CITIES[(h >> 5) % len(CITIES)]
    return (
        f"A chart comparing {company} shipments to the {city} region between "
        f"{year} and {other_year}, in {pct} % increments."
    )


_NER_PATTERNS: list[tuple[str, re.Pattern, float]] = [
    ("year_numerical_value", re.compile(r"\b(?:19|20)\d{2}\b"), 0.9),
    ("temperature", re.compile(r"\b\d{1,3} F\b"), 0.88),
    ("percentage", re.compile(r"\b\d{1,3} %"), 0.9),
    ("document_element_type", re.compile(r"\b(?:figure|table|chart|footnote|header)\b", re.I), 0.85),
    ("page_number_numerical_value", re.compile(r"(?<=page )\d+", re.I), 0.8),
]


def mock_ner_entities(text: str, requested: set[str]) -> list[dict]:
    found: list[dict] = []
    for fine_type, pattern, score in _NER_PATTERNS:
        if fine_type not in requested:
            continue
        for m in pattern.finditer(text):
            found.append(
                {"label": fine_type, "text": m.group(0), "start": m.start(), "end": m.end(), "score": score}
            )
    for fine_type, names, score in (("city", CITIES, 0.92), ("company_name", COMPANIES, 0.93)):
        if fine_type not in requested:
            continue
        for name in names:
            start = 0
            while True:
                idx = text.find(name, start)
                if idx < 0:
                    break
                found.append(
                    {"label": fine_type, "text": name, "start": idx, "end": idx + len(name), "score": score}
                )
                start = idx + 1
    found.sort(key=lambda e: (e["start"], e["end"], e["label"]))
    return found


@dataclass
class MockTransport(Transport):
    """Routes requests to deterministic local implementations.

    ``judge_answerable_rate`` tunes roughly how often the mock judge calls a
    page answerable; per-page outcomes stay a pure function of the request.
    """

    judge_answerable_rate: float = 0.25
    calls: list[str] = field(default_factory=list)

    def post_json(self, url, payload, headers, timeout):
        self.calls.append(url)
        if url.endswith("/ner"):
            return 200, self._ner(payload)
        if url.endswith("/layout"):
            return 200, self._layout(payload)
        if url.endswith("/chat/completions"):
            return self._chat(payload)
        return 404, {"error": f"no mock route for {url}"}

    def _ner(self, payload):
        requested = {lb["name"] for lb in payload.get("labels", [])}
        return {"entities": mock_ner_entities(payload.get("text", ""), requested)}

    def _layout(self, payload):
        h = stable_digest(payload.get("image", ""))
        detections = []
        classes = ("title", "plain text", "abandon", "figure", "table")
        for i in range(3 + h % 3):
            hi = stable_digest(h, i)
            x0 = 10 + (hi % 200)
            y0 = 10 + ((hi >> 8) % 400)
            detections.append(
                {
                    "class": classes[(hi >> 16) % len(classes)],
                    "bbox": [x0, y0, x0 + 120 + hi % 100, y0 + 30 + (hi >> 4) % 60],
                    "confidence": 0.3 + (hi % 60) / 100.0,
                }
            )
        return {"detections": detections}

    def _chat(self, payload):
        model = payload.get("model", "")
        user = _user_text(payload)
        images = _image_parts(payload)
        if model == "mock-ocr":
            text = synth_element_text(stable_digest(b"ocr", *images))
        elif model == "mock-captioner":
            text = synth_caption(stable_digest(b"caption", *images))
        elif model == "mock-refiner":
            text = _refine(user)
        elif model == "mock-judge":
            text = self._judge(user, images)
        elif model == "mock-standardizer":
            text = _standardize(user)
        elif model.startswith("mock-vqa"):
            text = _vqa(model, user, images)
        else:
            return 404, {"error": f"unknown mock model {model!r}"}
        return 200, {"choices": [{"message": {"content": text}}]}

    def _judge(self, user: str, images: list[bytes]) -> str:
        h = stable_digest(b"judge", user, *images)
        answerable = (h % 1000) < self.judge_answerable_rate * 1000
        body = {
            "verification_result": "true" if answerable else "false",
            "question_answer": "probably stated on this page" if answerable else "not found",
        }
        # Vary the framing so the tolerant parser gets exercised end to end.
        rendered = json.dumps(body)
        style = (h >> 12) % 3
        if style == 1:
            return f"```json\n{rendered}\n```"
        if style == 2:
            return f"Here is my assessment:\n{rendered}"
        return rendered


def _user_text(payload: dict) -> str:
    for message in payload.get("messages", []):
        if message.get("role") != "user":
            continue
        content = message.get("content")
        if isinstance(content, str):
            return content
        return "".join(p.get("text", "") for p in content if p.get("type") == "text")
    return ""


def _image_parts(payload: dict) -> list[bytes]:
    out = []
    for message in payload.get("messages", []):
        content = message.get("content")
        if not isinstance(content, list):
            continue
        for part in content:
            if part.get("type") == "image_url":
                out.append(part["image_url"]["url"].encode("ascii"))
    return out


_CORRUPTED_Q_RE = re.compile(r'Corrupted question: "(.*?)"\n')
_ANSWER_RE = re.compile(r"The answer is: (.*) \nPlease respond", re.DOTALL)


def _refine(user: str) -> str:
    m = _CORRUPTED_Q_RE.search(user)
    return m.group(1) if m else user.splitlines()[-1]


def _standardize(user: str) -> str:
    m = _ANSWER_RE.search(user)
    answer = m.group(1) if m else user
    lowered = answer.lower()
    if any(cue in lowered for cue in STANDARDIZER_CUES):
        return "unable to determine"
    return answer


def _vqa(model: str, user: str, images: list[bytes]) -> str:
    h = stable_digest(b"vqa", model, user, *images)
    refusal_pct = 35
    if "Unable to determine" in user:
        refusal_pct += 30
    if "OCR text:" in user:
        refusal_pct += 15
    if model.endswith("-strong"):
        refusal_pct += 15
    if model.endswith("-weak"):
        refusal_pct -= 20
    if (h % 100) < refusal_pct:
        return REFUSAL_PHRASINGS[(h >> 8) % len(REFUSAL_PHRASINGS)]
    return FAKE_ANSWERS[(h >> 8) % len(FAKE_ANSWERS)]


def _mock_cfg(name: str, route: str) -> ProviderConfig:
    return ProviderConfig(
        name=name,
        endpoint=f"http://mock/{route}",
        requests_per_minute=1_000_000,
        max_retries=1,
        timeout=5.0,
    )


@dataclass(frozen=True)
class MockProviderSet:
    """Ready-made provider configs matching the mock transport's routes."""

    ocr: ProviderConfig = _mock_cfg("mock-ocr", "chat/completions")
    captioner: ProviderConfig = _mock_cfg("mock-captioner", "chat/completions")
    ner: ProviderConfig = _mock_cfg("mock-ner", "ner")
    layout: ProviderConfig = _mock_cfg("mock-layout", "layout")
    judge: ProviderConfig = _mock_cfg("mock-judge", "chat/completions")
    refiner: ProviderConfig = _mock_cfg("mock-refiner", "chat/completions")
    standardizer: ProviderConfig = _mock_cfg("mock-standardizer", "chat/completions")
    models: tuple[ProviderConfig, ...] = (
        _mock_cfg("mock-vqa-strong", "chat/completions"),
        _mock_cfg("mock-vqa-weak", "chat/completions"),
    )
