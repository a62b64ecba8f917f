"""Augmentation: class routing, cache-frozen determinism, resume, page text."""

from __future__ import annotations

import json

import pytest

from uqbench.augment import (
    AugmentProviders,
    AugmentationError,
    NotAugmentedError,
    augment_document,
    page_ocr_text,
    save_augmented,
)
from uqbench.corpus import DatasetDir
from uqbench.docmodel import Document, ElementClass, document_to_dict
from uqbench.mock_providers import MockProviderSet, MockTransport
from uqbench.providers import ProviderConfig, Transport

from conftest import chat_body, element, make_client, page


def _write_image(path, width=200, height=200):
    from PIL import Image

    path.parent.mkdir(parents=True, exist_ok=True)
    img = Image.new("RGB", (width, height), "white")
    img.save(path, format="PNG")


@pytest.fixture
def dataset(tmp_path):
    ds = DatasetDir(tmp_path / "data")
    _write_image(ds.root / "images/d1_p1.png")
    return ds


def _doc(elements):
    return Document(
        id="d1",
        pages=(page(width=200, height=200, elements=elements, image_ref="images/d1_p1.png"),),
    )


def _layout(elements):
    return {1: list(elements)}


def _providers():
    mocks = MockProviderSet()
    return AugmentProviders(ocr=mocks.ocr, captioner=mocks.captioner, layout=mocks.layout)


class RoutingTransport(Transport):
    """Answers OCR/caption chat calls with fixed text; records model per call."""

    def __init__(self, ocr_text="hello", caption_text="sales by year", fail_models=()):
        self.ocr_text = ocr_text
        self.caption_text = caption_text
        self.fail_models = set(fail_models)
        self.models_called = []

    def post_json(self, url, payload, headers, timeout):
        model = payload["model"]
        self.models_called.append(model)
        if model in self.fail_models:
            return 500, {}
        if model == "mock-ocr":
            return 200, chat_body(self.ocr_text)
        if model == "mock-captioner":
            return 200, chat_body(self.caption_text)
        raise AssertionError(f"unexpected model {model}")


def test_ocr_text_lands_on_element(dataset):
    transport = RoutingTransport(ocr_text="hello")
    client = make_client(transport)
    doc = _doc(())
    layout = _layout([element("p1e0", (10, 10, 60, 40))])
    result = augment_document(doc, dataset, _providers(), client, layout)
    (el,) = result.document.pages[0].elements
    assert el.text == "hello"
    assert result.manifest["status"] == "complete"
    assert result.manifest["elements"][el.id]["provider"] == "mock-ocr"


def test_visual_elements_use_captioner_never_ocr(dataset):
    transport = RoutingTransport()
    client = make_client(transport)
    layout = _layout(
        [
            element("p1e0", (10, 10, 60, 40), ElementClass.FIGURE),
            element("p1e1", (10, 60, 60, 90), ElementClass.TABLE),
            element("p1e2", (10, 110, 60, 140), ElementClass.TITLE),
        ]
    )
    result = augment_document(_doc(()), dataset, _providers(), client, layout)
    by_id = {el.id: el for el in result.document.pages[0].elements}
    assert by_id["p1e0"].text == "sales by year"
    assert by_id["p1e1"].text == "sales by year"
    assert by_id["p1e2"].text == "hello"
    manifest = result.manifest["elements"]
    assert manifest["p1e0"]["provider"] == "mock-captioner"
    assert manifest["p1e1"]["provider"] == "mock-captioner"
    assert manifest["p1e2"]["provider"] == "mock-ocr"


def test_formula_elements_stay_text_free(dataset):
    client = make_client(RoutingTransport())
    layout = _layout([element("p1e0", (10, 10, 60, 40), ElementClass.ISOLATED_FORMULA)])
    result = augment_document(_doc(()), dataset, _providers(), client, layout)
    (el,) = result.document.pages[0].elements
    assert el.text is None
    assert result.manifest["elements"][el.id]["provider"] is None


def test_overlapping_detections_are_deduped(dataset):
    client = make_client(RoutingTransport())
    layout = _layout(
        [
            element("p1e0", (10, 10, 110, 110)),
            element("p1e1", (14, 14, 106, 106)),  # IoU > 0.6 vs p1e0
            element("p1e2", (10, 130, 60, 160)),
        ]
    )
    result = augment_document(_doc(()), dataset, _providers(), client, layout)
    assert [el.id for el in result.document.pages[0].elements] == ["p1e0", "p1e2"]


def test_rerun_with_frozen_cache_is_byte_identical(dataset, tmp_path):
    layout = _layout(
        [
            element("p1e0", (10, 10, 60, 40)),
            element("p1e1", (10, 60, 60, 90), ElementClass.FIGURE),
        ]
    )
    client = make_client(MockTransport(), cache_dir=tmp_path / "cache")
    first = augment_document(_doc(()), dataset, _providers(), client, layout)
    second = augment_document(_doc(()), dataset, _providers(), client, layout)

    def blob(result):
        return json.dumps(
            {"doc": document_to_dict(result.document), "manifest": result.manifest},
            sort_keys=True,
        ).encode()

    assert blob(first) == blob(second)


def test_failed_element_raises_with_partial_artifacts(dataset):
    transport = RoutingTransport(fail_models={"mock-captioner"})
    client = make_client(transport)
    mocks = MockProviderSet()
    providers = AugmentProviders(
        ocr=mocks.ocr,
        captioner=ProviderConfig(
            name="mock-captioner", endpoint="http://mock/chat/completions", max_retries=0
        ),
        layout=mocks.layout,
    )
    layout = _layout(
        [
            element("p1e0", (10, 10, 60, 40)),
            element("p1e1", (10, 60, 60, 90), ElementClass.FIGURE),
        ]
    )
    with pytest.raises(AugmentationError) as err:
        augment_document(_doc(()), dataset, providers, client, layout)
    partial = err.value.artifacts
    assert partial.manifest["status"] == "failed-partial"
    assert "p1e1" in partial.manifest["failures"]
    by_id = {el.id: el for el in partial.document.pages[0].elements}
    assert by_id["p1e0"].text == "hello"  # completed elements persist
    assert by_id["p1e1"].text is None
    save_augmented(dataset, partial)  # resumable partial state on disk
    assert dataset.manifest_path("d1").exists()


def test_resume_after_interrupt_matches_uninterrupted_run(dataset, tmp_path):
    layout = _layout(
        [
            element("p1e0", (10, 10, 60, 40)),
            element("p1e1", (10, 60, 60, 90), ElementClass.FIGURE),
        ]
    )
    mocks = MockProviderSet()
    flaky_captioner = ProviderConfig(
        name="mock-captioner", endpoint="http://mock/chat/completions", max_retries=0
    )

    class OneShotFailure(MockTransport):
        def __init__(self):
            super().__init__()
            self.failed_once = False

        def post_json(self, url, payload, headers, timeout):
            if payload.get("model") == "mock-captioner" and not self.failed_once:
                self.failed_once = True
                return 500, {}
            return super().post_json(url, payload, headers, timeout)

    cache = tmp_path / "cache"
    client = make_client(OneShotFailure(), cache_dir=cache)
    providers = AugmentProviders(ocr=mocks.ocr, captioner=flaky_captioner, layout=mocks.layout)
    with pytest.raises(AugmentationError):
        augment_document(_doc(()), dataset, providers, client, layout)
    resumed = augment_document(_doc(()), dataset, providers, client, layout)

    clean_client = make_client(MockTransport(), cache_dir=tmp_path / "cache2")
    uninterrupted = augment_document(_doc(()), dataset, _providers(), clean_client, layout)
    assert document_to_dict(resumed.document) == document_to_dict(uninterrupted.document)


# --- page text assembly ------------------------------------------------------------

def test_page_ocr_text_joins_in_reading_order():
    p = page(
        elements=[
            element("b", (0, 50, 10, 60), text="B"),
            element("a", (0, 10, 10, 20), text="A"),
        ]
    )
    assert page_ocr_text(p) == "A\nB"


def test_page_ocr_text_prefixes_visual_captions():
    p = page(
        elements=[element("t", (0, 10, 40, 30), ElementClass.TABLE, text="sales by year")]
    )
    assert page_ocr_text(p) == "[TABLE] sales by year"


def test_page_ocr_text_empty_page():
    assert page_ocr_text(page()) == ""


def test_page_ocr_text_skips_formulas_and_requires_augmentation():
    with_formula = page(
        elements=[
            element("f", (0, 10, 10, 20), ElementClass.ISOLATED_FORMULA),
            element("a", (0, 30, 10, 40), text="A"),
        ]
    )
    assert page_ocr_text(with_formula) == "A"
    unaugmented = page(elements=[element("a", (0, 10, 10, 20))])
    with pytest.raises(NotAugmentedError):
        page_ocr_text(unaugmented)
