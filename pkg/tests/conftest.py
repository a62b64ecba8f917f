"""Shared fixtures: scripted transports and small in-memory corpora."""

from __future__ import annotations

import random

import pytest

from uqbench.docmodel import BoundingBox, DocumentElement, ElementClass, Page
from uqbench.providers import ProviderConfig, ServiceClient, Transport


class ScriptedTransport(Transport):
    """Replays a scripted list of (status, body) responses and records calls."""

    def __init__(self, script):
        self.script = list(script)
        self.calls = []

    def post_json(self, url, payload, headers, timeout):
        self.calls.append({"url": url, "payload": payload, "headers": headers})
        if not self.script:
            raise AssertionError("scripted transport exhausted")
        step = self.script.pop(0)
        if isinstance(step, Exception):
            raise step
        return step


def chat_body(text: str) -> dict:
    return {"choices": [{"message": {"content": text}}]}


class ManualClock:
    def __init__(self, start: float = 0.0):
        self.now = start
        self.sleeps = []

    def __call__(self) -> float:
        return self.now

    def sleep(self, seconds: float) -> None:
        self.sleeps.append(seconds)
        self.now += seconds


@pytest.fixture
def manual_clock():
    return ManualClock()


def make_client(transport, cache_dir=None, clock=None) -> ServiceClient:
    clock = clock or ManualClock()
    return ServiceClient(
        transport=transport,
        cache_dir=cache_dir,
        clock=clock,
        sleep=clock.sleep,
        rng=random.Random(0),
    )


def provider(name="svc", rpm=1000, retries=3) -> ProviderConfig:
    return ProviderConfig(
        name=name,
        endpoint="http://test/chat/completions",
        requests_per_minute=rpm,
        max_retries=retries,
        timeout=5.0,
    )


def element(
    el_id: str,
    bbox: tuple[float, float, float, float],
    el_class: ElementClass = ElementClass.PLAIN_TEXT,
    confidence: float = 0.9,
    text=None,
) -> DocumentElement:
    return DocumentElement(
        id=el_id, element_class=el_class, bbox=BoundingBox(*bbox), confidence=confidence, text=text
    )


def page(index=1, width=1000.0, height=800.0, elements=(), image_ref="images/p.png") -> Page:
    return Page(index=index, width=width, height=height, image_ref=image_ref, elements=tuple(elements))


def random_box(rng: random.Random, max_x=100, max_y=100) -> BoundingBox:
    x0 = rng.randint(0, max_x - 2)
    y0 = rng.randint(0, max_y - 2)
    x1 = rng.randint(x0 + 1, max_x)
    y1 = rng.randint(y0 + 1, max_y)
    return BoundingBox(x0, y0, x1, y1)
