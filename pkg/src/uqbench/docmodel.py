"""Document/geometry data model: pages, typed layout elements, bounding boxes.

Coordinates are page pixels with the origin at the top-left corner; x grows
right, y grows down. All types are immutable value objects and the operations
below are pure functions, so everything here is safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional


class GeometryError(ValueError):
    """Raised when a bounding box violates page geometry."""


class ElementClass(str, Enum):
    TITLE = "title"
    PLAIN_TEXT = "plain_text"
    FIGURE = "figure"
    TABLE = "table"
    # Headers, footers, footnotes and marginal notes.
    ABANDON = "abandon"
    # Kept in the model but excluded from analysis groupings.
    ISOLATED_FORMULA = "isolated_formula"

    @classmethod
    def parse(cls, name: str) -> "ElementClass":
        """Parse a class label, tolerating detector-side spellings."""
        key = name.strip().lower().replace(" ", "_").replace("-", "_")
        aliases = {
            "text": cls.PLAIN_TEXT,
            "plain_text": cls.PLAIN_TEXT,
            "isolate_formula": cls.ISOLATED_FORMULA,
            "formula": cls.ISOLATED_FORMULA,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown element class: {name!r}") from None


#: Classes whose text is an OCR transcript.
TEXTUAL_CLASSES = frozenset(
    {ElementClass.TITLE, ElementClass.PLAIN_TEXT, ElementClass.ABANDON}
)
#: Classes whose text is a generated caption.
VISUAL_CLASSES = frozenset({ElementClass.FIGURE, ElementClass.TABLE})


class Quadrant(str, Enum):
    TOP_LEFT = "top_left"
    TOP_RIGHT = "top_right"
    BOTTOM_LEFT = "bottom_left"
    BOTTOM_RIGHT = "bottom_right"


@dataclass(frozen=True)
class BoundingBox:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise GeometryError(f"degenerate bounding box: {self.as_list()}")
        if self.x0 < 0 or self.y0 < 0:
            raise GeometryError(f"negative coordinates: {self.as_list()}")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class DocumentElement:
    id: str
    element_class: ElementClass
    bbox: BoundingBox
    confidence: float
    text: Optional[str] = None

    def with_text(self, text: str) -> "DocumentElement":
        return replace(self, text=text)


@dataclass(frozen=True)
class Page:
    index: int  # 1-based ordinal within the document
    width: float
    height: float
    image_ref: str
    elements: tuple[DocumentElement, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        for el in self.elements:
            if el.bbox.x1 > self.width or el.bbox.y1 > self.height:
                raise GeometryError(
                    f"element {el.id!r} bbox {el.bbox.as_list()} exceeds "
                    f"page {self.index} extent ({self.width}x{self.height})"
                )

    def with_elements(self, elements: Iterable[DocumentElement]) -> "Page":
        return replace(self, elements=tuple(elements))


@dataclass(frozen=True)
class Document:
    id: str
    pages: tuple[Page, ...]
    source_dataset: str = ""

    def __post_init__(self):
        object.__setattr__(self, "pages", tuple(self.pages))
        if not self.pages:
            raise ValueError(f"document {self.id!r} has no pages")
        indices = [p.index for p in self.pages]
        if indices != list(range(1, len(self.pages) + 1)):
            raise ValueError(
                f"document {self.id!r} page indices not contiguous 1..{len(self.pages)}: {indices}"
            )

    def page(self, index: int) -> Page:
        return self.pages[index - 1]


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint."""
    ix0 = max(a.x0, b.x0)
    iy0 = max(a.y0, b.y0)
    ix1 = min(a.x1, b.x1)
    iy1 = min(a.y1, b.y1)
    if ix1 <= ix0 or iy1 <= iy0:
        return 0.0
    inter = (ix1 - ix0) * (iy1 - iy0)
    union = a.area + b.area - inter
    return inter / union


def quadrant_of(bbox: BoundingBox, page: Page) -> Quadrant:
    """Quadrant of the bbox center relative to the page midlines.

    Centers lying exactly on a midline resolve toward the lower coordinate
    (left / top), so the four preimages partition the page.
    """
    if bbox.x1 > page.width or bbox.y1 > page.height:
        raise GeometryError(
            f"bbox {bbox.as_list()} outside page {page.index} "
            f"extent ({page.width}x{page.height})"
        )
    cx, cy = bbox.center
    left = cx <= page.width / 2.0
    top = cy <= page.height / 2.0
    if top:
        return Quadrant.TOP_LEFT if left else Quadrant.TOP_RIGHT
    return Quadrant.BOTTOM_LEFT if left else Quadrant.BOTTOM_RIGHT


def dedup_elements(
    elements: list[DocumentElement], threshold: float = 0.6
) -> list[DocumentElement]:
    """Drop overlapping detections, keeping the larger box of each clashing pair.

    A pair clashes when its IoU strictly exceeds ``threshold``. Area ties keep
    the element appearing first in the input. Elimination repeats until no
    retained pair clashes; survivors are returned in page reading order.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1]: {threshold}")
    alive = list(range(len(elements)))
    changed = True
    while changed:
        changed = False
        for a in range(len(alive)):
            for b in range(a + 1, len(alive)):
                i, j = alive[a], alive[b]
                if iou(elements[i].bbox, elements[j].bbox) > threshold:
                    # Smaller area loses; ties drop the later input index.
                    loser = b if elements[j].bbox.area <= elements[i].bbox.area else a
                    del alive[loser]
                    changed = True
                    break
            if changed:
                break
    alive.sort(key=lambda k: (elements[k].bbox.y0, elements[k].bbox.x0, k))
    return [elements[k] for k in alive]


def reading_order(page: Page) -> list[DocumentElement]:
    """Page elements sorted top-to-bottom, then left-to-right."""
    return sorted(page.elements, key=lambda el: (el.bbox.y0, el.bbox.x0))


def element_density(doc: Document) -> float:
    """Ratio of visual elements (figures + tables) to all non-formula elements."""
    visual = 0
    total = 0
    for page in doc.pages:
        for el in page.elements:
            if el.element_class is ElementClass.ISOLATED_FORMULA:
                continue
            total += 1
            if el.element_class in VISUAL_CLASSES:
                visual += 1
    return visual / total if total else 0.0


def density_bin(doc: Document) -> str:
    """Density bin label; the middle bin is closed on the left ([15%, 25%))."""
    d = element_density(doc)
    if d < 0.15:
        return "<15%"
    if d < 0.25:
        return "15-25%"
    return ">25%"


def length_bin(doc: Document) -> str:
    """Page-count bin label; 4 and 8 both fall in the middle bin."""
    n = len(doc.pages)
    if n < 4:
        return "<4"
    if n <= 8:
        return "4-8"
    return ">8"


# --- normalized document JSON -------------------------------------------------

def element_to_dict(el: DocumentElement) -> dict:
    return {
        "id": el.id,
        "class": el.element_class.value,
        "bbox": el.bbox.as_list(),
        "confidence": el.confidence,
        "text": el.text,
    }


def document_to_dict(doc: Document) -> dict:
    return {
        "id": doc.id,
        "source_dataset": doc.source_dataset,
        "pages": [
            {
                "index": p.index,
                "width": p.width,
                "height": p.height,
                "image": p.image_ref,
                "elements": [element_to_dict(el) for el in p.elements],
            }
            for p in doc.pages
        ],
    }


def element_from_dict(raw: dict) -> DocumentElement:
    return DocumentElement(
        id=raw["id"],
        element_class=ElementClass.parse(raw["class"]),
        bbox=BoundingBox(*raw["bbox"]),
        confidence=raw["confidence"],
        text=raw.get("text"),
    )


def document_from_dict(raw: dict) -> Document:
    pages = [
        Page(
            index=p["index"],
            width=p["width"],
            height=p["height"],
            image_ref=p["image"],
            elements=tuple(element_from_dict(e) for e in p["elements"]),
        )
        for p in raw["pages"]
    ]
    return Document(id=raw["id"], pages=tuple(pages), source_dataset=raw.get("source_dataset", ""))
