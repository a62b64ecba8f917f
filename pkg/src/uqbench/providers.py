"""Clients for the external inference services the pipeline depends on.

Chat-style models (OCR, captioning, refinement, judging, VQA, standardization)
are reached through an OpenAI-compatible chat-completions endpoint. Entity
extraction and layout detection have their own small JSON protocols. All
clients share one policy layer: content-addressed on-disk caching, sliding
window rate limiting per provider, and retries with exponential backoff.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .docmodel import BoundingBox, DocumentElement, ElementClass

logger = logging.getLogger(__name__)

BACKOFF_BASE_SECONDS = 1.0
BACKOFF_CAP_SECONDS = 60.0


class ProviderError(RuntimeError):
    """Transport failure that survived all retries."""

    def __init__(self, message: str, request_hash: str = ""):
        super().__init__(message)
        self.request_hash = request_hash


class ProviderConfigError(ProviderError):
    """Non-retryable client-side error (HTTP 4xx, bad configuration)."""


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    endpoint: str
    api_key_env: str = ""
    max_output_tokens: int = 1024
    requests_per_minute: int = 60
    max_retries: int = 3
    timeout: float = 120.0
    image_scaling: Optional[tuple[int, int]] = None  # (min_px, max_px)

    def __post_init__(self):
        if self.max_output_tokens < 1:
            raise ProviderConfigError(f"max_output_tokens must be >= 1: {self.max_output_tokens}")
        if self.max_retries < 0:
            raise ProviderConfigError(f"max_retries must be >= 0: {self.max_retries}")
        if self.image_scaling is not None:
            lo, hi = self.image_scaling
            if lo > hi:
                raise ProviderConfigError(f"image_scaling min > max: {self.image_scaling}")

    def api_key(self) -> str:
        return os.environ.get(self.api_key_env, "") if self.api_key_env else ""


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    images: tuple[bytes, ...] = ()
    provider: str = ""

    def __post_init__(self):
        if not self.user:
            raise ValueError("chat request needs non-empty user text")
        object.__setattr__(self, "images", tuple(self.images))


@dataclass(frozen=True)
class ChatResponse:
    text: str
    latency: float
    provider: str
    cached: bool = False


@dataclass(frozen=True)
class NerLabel:
    name: str
    threshold: float

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold for {self.name!r} must be in (0, 1]: {self.threshold}")


@dataclass(frozen=True)
class NerRequest:
    text: str
    labels: tuple[NerLabel, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))


@dataclass(frozen=True)
class NerSpan:
    fine_type: str
    surface: str
    start: int
    end: int
    score: float


class Transport:
    """HTTP transport seam; swapped for scripted mocks in tests."""

    def post_json(self, url: str, payload: dict, headers: dict, timeout: float) -> tuple[int, dict]:
        raise NotImplementedError


class RequestsTransport(Transport):
    def post_json(self, url, payload, headers, timeout):
        import requests

        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
        try:
            body = resp.json()
        except ValueError:
            body = {"raw": resp.text}
        return resp.status_code, body


class RateLimiter:
    """Sliding-window limiter: at most ``rpm`` sends per 60 s per provider."""

    def __init__(self, clock: Callable[[], float], sleep: Callable[[float], None]):
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._sent: dict[str, deque] = {}

    def acquire(self, provider: str, rpm: int) -> None:
        if rpm <= 0:
            return
        while True:
            with self._lock:
                window = self._sent.setdefault(provider, deque())
                now = self._clock()
                while window and now - window[0] >= 60.0:
                    window.popleft()
                if len(window) < rpm:
                    window.append(now)
                    return
                wait = 60.0 - (now - window[0])
            self._sleep(max(wait, 0.0))


def canonical_payload_hash(provider: str, payload: dict, key_salt: str = "") -> str:
    blob = (
        provider + "\x00" + json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\x00" + key_salt
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class CallResult:
    body: dict
    latency: float
    cached: bool
    request_hash: str
    # Wall-clock time the response was first produced; stable across cache hits.
    created_at: float = 0.0


class ServiceClient:
    """Shared policy layer: cache -> rate limit -> POST with retry/backoff."""

    def __init__(
        self,
        transport: Optional[Transport] = None,
        cache_dir: Optional[Path] = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
        rng: Optional[random.Random] = None,
    ):
        self.transport = transport or RequestsTransport()
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self._clock = clock
        self._sleep = sleep
        self._rng = rng or random.Random()
        self.limiter = RateLimiter(clock, sleep)

    def _cache_path(self, provider: str, request_hash: str) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        return self.cache_dir / provider / f"{request_hash}.json"

    def call(self, cfg: ProviderConfig, payload: dict, key_salt: str = "") -> CallResult:
        """Send one request under the policy layer.

        ``key_salt`` feeds only the cache key, not the wire payload; callers
        use it to force a fresh sample of an otherwise identical request.
        """
        request_hash = canonical_payload_hash(cfg.name, payload, key_salt)
        path = self._cache_path(cfg.name, request_hash)
        if path is not None and path.exists():
            entry = json.loads(path.read_text(encoding="utf-8"))
            return CallResult(
                entry["body"],
                entry["latency"],
                cached=True,
                request_hash=request_hash,
                created_at=entry["created_at"],
            )

        headers = {"Content-Type": "application/json"}
        key = cfg.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"

        attempts = cfg.max_retries + 1
        last_error: Optional[str] = None
        for attempt in range(1, attempts + 1):
            self.limiter.acquire(cfg.name, cfg.requests_per_minute)
            started = self._clock()
            try:
                status, body = self.transport.post_json(cfg.endpoint, payload, headers, cfg.timeout)
            except Exception as exc:  # noqa: BLE001 - transport errors are retryable
                status, body = None, None
                last_error = f"{type(exc).__name__}: {exc}"
            latency = self._clock() - started

            if status is not None and 200 <= status < 300:
                created_at = time.time()
                if path is not None:
                    path.parent.mkdir(parents=True, exist_ok=True)
                    entry = {"body": body, "latency": latency, "created_at": created_at}
                    tmp = path.with_suffix(".tmp")
                    tmp.write_text(json.dumps(entry, sort_keys=True), encoding="utf-8")
                    tmp.replace(path)
                return CallResult(
                    body, latency, cached=False, request_hash=request_hash, created_at=created_at
                )

            if status is not None and 400 <= status < 500:
                raise ProviderConfigError(
                    f"provider {cfg.name!r} rejected request (HTTP {status}): {body}",
                    request_hash=request_hash,
                )
            if status is not None:
                last_error = f"HTTP {status}: {body}"
            logger.warning(
                "provider %s attempt %d/%d failed: %s", cfg.name, attempt, attempts, last_error
            )
            if attempt < attempts:
                delay = min(BACKOFF_CAP_SECONDS, BACKOFF_BASE_SECONDS * 2 ** (attempt - 1))
                self._sleep(delay * self._rng.uniform(0.5, 1.0))

        raise ProviderError(
            f"provider {cfg.name!r} failed after {attempts} attempts: {last_error}",
            request_hash=request_hash,
        )


def scale_image(data: bytes, min_px: int, max_px: int) -> bytes:
    """Resize so the longest side fits in ``max_px`` and, if possible without
    violating that, the shortest side reaches ``min_px``."""
    from PIL import Image

    with Image.open(io.BytesIO(data)) as img:
        w, h = img.size
        scale = 1.0
        if max(w, h) > max_px:
            scale = max_px / max(w, h)
        elif min(w, h) < min_px:
            scale = min(min_px / min(w, h), max_px / max(w, h))
        if scale == 1.0:
            return data
        resized = img.resize((max(1, round(w * scale)), max(1, round(h * scale))))
        out = io.BytesIO()
        resized.save(out, format=img.format or "PNG")
        return out.getvalue()


def chat_payload(req: ChatRequest, cfg: ProviderConfig) -> dict:
    """OpenAI-compatible chat-completions body (text + base64 image parts)."""
    content: list[dict] = [{"type": "text", "text": req.user}]
    for img in req.images:
        if cfg.image_scaling is not None:
            img = scale_image(img, *cfg.image_scaling)
        b64 = base64.b64encode(img).decode("ascii")
        content.append(
            {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}
        )
    messages = []
    if req.system:
        messages.append({"role": "system", "content": req.system})
    messages.append({"role": "user", "content": content})
    return {"model": cfg.name, "messages": messages, "max_tokens": cfg.max_output_tokens}


def complete(req: ChatRequest, cfg: ProviderConfig, client: ServiceClient) -> ChatResponse:
    """Run one chat completion through the shared policy layer."""
    result = client.call(cfg, chat_payload(req, cfg))
    try:
        text = result.body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise ProviderError(
            f"provider {cfg.name!r} returned malformed completion body",
            request_hash=result.request_hash,
        ) from None
    if not isinstance(text, str):
        raise ProviderError(
            f"provider {cfg.name!r} returned non-text content",
            request_hash=result.request_hash,
        )
    return ChatResponse(text=text, latency=result.latency, provider=cfg.name, cached=result.cached)


def extract_entities(req: NerRequest, cfg: ProviderConfig, client: ServiceClient) -> list[NerSpan]:
    """Call the NER service and enforce per-type score thresholds client-side.

    Returned spans are within text bounds and sorted by span start.
    """
    if not req.labels:
        raise ValueError("NER request needs at least one label")
    if not req.text:
        return []
    payload = {
        "text": req.text,
        "labels": [{"name": lb.name, "threshold": lb.threshold} for lb in req.labels],
    }
    result = client.call(cfg, payload)
    thresholds = {lb.name: lb.threshold for lb in req.labels}
    spans = []
    for raw in result.body.get("entities", []):
        label = raw["label"]
        if label not in thresholds:
            continue
        score = float(raw["score"])
        if score < thresholds[label]:
            continue
        start, end = int(raw["start"]), int(raw["end"])
        if not (0 <= start < end <= len(req.text)):
            logger.warning("NER span out of bounds, dropped: %s", raw)
            continue
        spans.append(NerSpan(label, raw["text"], start, end, score))
    spans.sort(key=lambda s: (s.start, s.end, s.fine_type))
    return spans


LAYOUT_CONFIDENCE_FLOOR = 0.1


def detect_layout(
    image: bytes,
    page_index: int,
    cfg: ProviderConfig,
    client: ServiceClient,
    min_confidence: float = LAYOUT_CONFIDENCE_FLOOR,
) -> list[DocumentElement]:
    """Fetch raw layout detections for one page image.

    The confidence floor is passed to the detector and re-applied locally.
    Overlap removal is the caller's job (``docmodel.dedup_elements``).
    """
    payload = {
        "image": base64.b64encode(image).decode("ascii"),
        "confidence_threshold": min_confidence,
    }
    result = client.call(cfg, payload)
    elements = []
    for i, det in enumerate(result.body.get("detections", [])):
        conf = float(det["confidence"])
        if conf < min_confidence:
            continue
        elements.append(
            DocumentElement(
                id=f"p{page_index}e{i}",
                element_class=ElementClass.parse(det["class"]),
                bbox=BoundingBox(*det["bbox"]),
                confidence=conf,
            )
        )
    return elements


def load_layout_import(path: Path) -> dict[int, list[DocumentElement]]:
    """Read precomputed detections from a JSON-lines import file.

    One detection per line: {page, class, bbox, confidence}. Detections under
    the confidence floor are dropped, mirroring detector-side filtering.
    """
    by_page: dict[int, list[DocumentElement]] = {}
    counters: dict[int, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                page = int(raw["page"])
                el_class = ElementClass.parse(raw["class"])
                bbox = BoundingBox(*raw["bbox"])
                conf = float(raw["confidence"])
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad layout import record: {exc}") from exc
            if conf < LAYOUT_CONFIDENCE_FLOOR:
                continue
            seq = counters.get(page, 0)
            counters[page] = seq + 1
            by_page.setdefault(page, []).append(
                DocumentElement(
                    id=f"p{page}e{seq}", element_class=el_class, bbox=bbox, confidence=conf
                )
            )
    return by_page
