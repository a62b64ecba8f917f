"""Document augmentation: layout detection, OCR transcripts, element captions.

Per page: detect (or import) layout elements, drop overlapping boxes, then
fetch text for every element crop. Textual classes (title, plain text,
abandon) go to the OCR provider, figures and tables to the captioning
provider, isolated formulas stay text-free. Every element call is recorded in
a manifest so re-runs against a frozen cache are byte-identical.
"""

from __future__ import annotations

import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .corpus import DatasetDir
from .docmodel import (
    BoundingBox,
    Document,
    DocumentElement,
    ElementClass,
    Page,
    VISUAL_CLASSES,
    dedup_elements,
    reading_order,
)
from .providers import (
    ChatRequest,
    ChatResponse,
    ProviderConfig,
    ProviderError,
    ServiceClient,
    canonical_payload_hash,
    chat_payload,
    detect_layout,
)

logger = logging.getLogger(__name__)

DEDUP_IOU_THRESHOLD = 0.6
CROP_MARGIN_PX = 2

OCR_INSTRUCTION = (
    "Transcribe all text visible in this document region exactly as written. "
    "Return only the transcription."
)
CAPTION_INSTRUCTION = (
    "Describe the content of this figure or table from a document page, "
    "including any values, labels, and names it shows. Return only the description."
)


class AugmentationError(RuntimeError):
    """Document augmentation failed; partial artifacts ride along for resume."""

    def __init__(self, message: str, artifacts: "AugmentedDocument"):
        super().__init__(message)
        self.artifacts = artifacts


class NotAugmentedError(RuntimeError):
    """An operation needed element texts before augmentation ran."""


@dataclass
class AugmentProviders:
    ocr: ProviderConfig
    captioner: ProviderConfig
    layout: Optional[ProviderConfig] = None  # None => layout must come from an import file


@dataclass
class AugmentedDocument:
    document: Document
    manifest: dict = field(default_factory=dict)


def crop_element(page_image: bytes, page: Page, bbox: BoundingBox) -> bytes:
    """PNG crop of the element region with a small margin against glyph clipping."""
    from PIL import Image

    with Image.open(io.BytesIO(page_image)) as img:
        x0 = max(0, int(bbox.x0) - CROP_MARGIN_PX)
        y0 = max(0, int(bbox.y0) - CROP_MARGIN_PX)
        x1 = min(img.width, int(bbox.x1) + CROP_MARGIN_PX)
        y1 = min(img.height, int(bbox.y1) + CROP_MARGIN_PX)
        out = io.BytesIO()
        img.crop((x0, y0, x1, y1)).save(out, format="PNG")
        return out.getvalue()


def clamp_to_page(el: DocumentElement, page: Page) -> DocumentElement:
    bbox = el.bbox
    x1 = min(bbox.x1, page.width)
    y1 = min(bbox.y1, page.height)
    if x1 == bbox.x1 and y1 == bbox.y1:
        return el
    from dataclasses import replace

    return replace(el, bbox=BoundingBox(bbox.x0, bbox.y0, x1, y1))


def augment_document(
    doc: Document,
    dataset: DatasetDir,
    providers: AugmentProviders,
    client: ServiceClient,
    layout_import: Optional[dict[int, list[DocumentElement]]] = None,
    max_workers: int = 4,
) -> AugmentedDocument:
    """Populate element texts for one document and build its manifest.

    Raises AugmentationError when any element keeps failing after provider
    retries; by then the partial document and manifest entries gathered so far
    have already been returned to the caller via the exception's artifacts.
    """
    if layout_import is None and providers.layout is None:
        raise ValueError("no layout provider configured and no layout import supplied")

    pages: list[Page] = []
    manifest_elements: dict[str, dict] = {}
    failures: dict[str, str] = {}

    for page in doc.pages:
        page_image = dataset.image_path(page.image_ref).read_bytes()
        if layout_import is not None:
            raw = layout_import.get(page.index, [])
        else:
            raw = detect_layout(page_image, page.index, providers.layout, client)
        raw = [clamp_to_page(el, page) for el in raw]
        elements = dedup_elements(raw, DEDUP_IOU_THRESHOLD)

        def fetch(el: DocumentElement) -> tuple[DocumentElement, Optional[dict], Optional[str]]:
            key = f"p{page.index}:{el.id}"
            if el.element_class is ElementClass.ISOLATED_FORMULA:
                return el, {"provider": None, "cache_key": None, "timestamp": None}, None
            if el.element_class in VISUAL_CLASSES:
                cfg, instruction = providers.captioner, CAPTION_INSTRUCTION
            else:
                cfg, instruction = providers.ocr, OCR_INSTRUCTION
            crop = crop_element(page_image, page, el.bbox)
            req = ChatRequest(system="", user=instruction, images=(crop,), provider=cfg.name)
            try:
                payload_hash, resp, created_at = _complete_with_hash(req, cfg, client)
            except ProviderError as exc:
                return el, None, f"{key}: {exc}"
            entry = {"provider": cfg.name, "cache_key": payload_hash, "timestamp": created_at}
            return el.with_text(resp.text), entry, None

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(fetch, elements))

        done: list[DocumentElement] = []
        for el, entry, failure in results:
            done.append(el)
            if entry is not None:
                manifest_elements[el.id] = entry
            if failure is not None:
                failures[el.id] = failure
        pages.append(page.with_elements(done))

    augmented = Document(id=doc.id, pages=tuple(pages), source_dataset=doc.source_dataset)
    manifest = {
        "document_id": doc.id,
        "status": "failed-partial" if failures else "complete",
        "elements": manifest_elements,
        "failures": failures,
    }
    result = AugmentedDocument(document=augmented, manifest=manifest)
    if failures:
        raise AugmentationError(
            f"document {doc.id!r}: {len(failures)} element(s) failed augmentation; "
            "partial artifacts persisted for resume",
            artifacts=result,
        )
    return result


def _complete_with_hash(req: ChatRequest, cfg: ProviderConfig, client: ServiceClient):
    payload = chat_payload(req, cfg)
    payload_hash = canonical_payload_hash(cfg.name, payload)
    result = client.call(cfg, payload)
    try:
        text = result.body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise ProviderError(
            f"provider {cfg.name!r} returned malformed completion body",
            request_hash=result.request_hash,
        ) from None
    resp = ChatResponse(text=text, latency=result.latency, provider=cfg.name, cached=result.cached)
    return payload_hash, resp, result.created_at


def page_ocr_text(page: Page) -> str:
    """Element texts joined in reading order, one element per line.

    Captions of visual elements are prefixed with their class in brackets
    (e.g. "[FIGURE] ...") so downstream consumers can tell them apart from
    OCR transcripts. Formula elements carry no text and are omitted.
    """
    lines: list[str] = []
    for el in reading_order(page):
        if el.element_class is ElementClass.ISOLATED_FORMULA:
            continue
        if el.text is None:
            raise NotAugmentedError(
                f"page {page.index}: element {el.id!r} has no text; run augmentation first"
            )
        if el.element_class in VISUAL_CLASSES:
            lines.append(f"[{el.element_class.name}] {el.text}")
        else:
            lines.append(el.text)
    return "\n".join(lines)


def save_augmented(dataset: DatasetDir, result: AugmentedDocument) -> None:
    """Persist document JSON and sibling manifest atomically."""
    import json

    dataset.save_document(result.document)
    path = dataset.manifest_path(result.document.id)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(result.manifest, sort_keys=True, indent=1), encoding="utf-8")
    tmp.replace(path)


def is_augmented(dataset: DatasetDir, doc_id: str) -> bool:
    path = dataset.manifest_path(doc_id)
    if not path.exists():
        return False
    import json

    manifest = json.loads(path.read_text(encoding="utf-8"))
    return manifest.get("status") == "complete"
