"""Synthetic dataset generator: small multi-page documents with page images,
layout detections, and questions that carry recognizable typed entities.

The generated dataset drives the mock-provider pipeline end to end. Every
artifact is a pure function of the seed, so repeated generation is
byte-identical and pipeline determinism tests can regenerate at will.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from .corpus import DatasetDir, Question
from .docmodel import Document, Page
from .mock_providers import CITIES, COMPANIES

PAGE_WIDTH = 480
PAGE_HEIGHT = 640

QUESTION_TEMPLATES = (
    "Was revenue {pct} % higher in {year} according to {company}?",
    "Did the {city} office report {temp} F during {year}?",
    "What does the table on page {pagenum} show for {year}?",
    "When did {company} open its {city} branch?",
    "Is {year} mentioned in the header of the {company} report?",
)


def _draw_page(path: Path, boxes: list[tuple[str, list[int]]], rng: random.Random) -> None:
    from PIL import Image, ImageDraw

    img = Image.new("RGB", (PAGE_WIDTH, PAGE_HEIGHT), "white")
    draw = ImageDraw.Draw(img)
    for _, (x0, y0, x1, y1) in boxes:
        draw.rectangle((x0, y0, x1 - 1, y1 - 1), outline=(180, 180, 180))
        # Seeded bar pattern so every element crop has distinct pixels.
        y = y0 + 4
        while y + 3 < y1:
            x_start = x0 + 4 + rng.randrange(8)
            x_end = x1 - 4 - rng.randrange(8)
            if x_end > x_start:
                draw.rectangle((x_start, y, x_end, y + 2), fill=(60, 60, 60))
            y += 7 + rng.randrange(4)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


def _page_layout(rng: random.Random) -> list[tuple[str, list[int], float]]:
    """Element boxes for one page: (class, bbox, confidence)."""
    left = (20, 230)
    right = (250, 460)
    boxes: list[tuple[str, list[int], float]] = []
    boxes.append(("abandon", [20, 6, 460, 34], round(0.6 + rng.random() * 0.35, 2)))
    boxes.append(("title", [40, 44, 420, 84], round(0.7 + rng.random() * 0.25, 2)))

    y = 100
    n_rows = rng.randint(3, 5)
    for _ in range(n_rows):
        col = rng.choice((left, right))
        height = rng.randint(50, 90)
        if y + height > 560:
            break
        kind = rng.choices(
            ("plain text", "figure", "table", "isolate_formula"), weights=(6, 2, 2, 1)
        )[0]
        bbox = [col[0], y, col[1], y + height]
        boxes.append((kind, bbox, round(0.5 + rng.random() * 0.45, 2)))
        if kind == "plain text" and rng.random() < 0.35:
            # Near-duplicate detection; IoU > 0.6, removed by dedup downstream.
            dup = [bbox[0] + 4, bbox[1] + 4, bbox[2] - 4, bbox[3] - 4]
            boxes.append(("plain text", dup, round(0.3 + rng.random() * 0.2, 2)))
        y += height + rng.randint(12, 30)

    boxes.append(("abandon", [20, 600, 460, 630], round(0.6 + rng.random() * 0.3, 2)))
    # Sub-floor detection; dropped when the import file is loaded.
    boxes.append(("plain text", [30, 570, 120, 595], 0.05))
    return boxes


def _make_question(rng: random.Random, qid: str, doc_id: str) -> Question:
    template = rng.choice(QUESTION_TEMPLATES)
    text = template.format(
        pct=rng.randint(5, 95),
        year=rng.randint(1990, 2019),
        company=rng.choice(COMPANIES),
        city=rng.choice(CITIES),
        temp=rng.randint(40, 99),
        pagenum=rng.randint(1, 9),
    )
    return Question(id=qid, document_id=doc_id, text=text, answers=("synthetic",))


def build_fixture(root: Path, n_docs: int = 3, seed: int = 7) -> DatasetDir:
    """Write a synthetic dataset under ``root`` and return its accessor."""
    rng = random.Random(seed)
    dataset = DatasetDir(Path(root))
    dataset.root.mkdir(parents=True, exist_ok=True)
    questions: list[Question] = []

    for d in range(1, n_docs + 1):
        doc_id = f"doc{d:02d}"
        n_pages = rng.randint(2, 4) if d > 1 else 2
        pages = []
        layout_lines = []
        for p in range(1, n_pages + 1):
            boxes = _page_layout(rng)
            image_ref = f"images/{doc_id}_p{p}.png"
            _draw_page(dataset.root / image_ref, [(c, b) for c, b, _ in boxes], rng)
            pages.append(
                Page(index=p, width=PAGE_WIDTH, height=PAGE_HEIGHT, image_ref=image_ref)
            )
            for el_class, bbox, conf in boxes:
                layout_lines.append(
                    json.dumps(
                        {"page": p, "class": el_class, "bbox": bbox, "confidence": conf},
                        sort_keys=True,
                    )
                )
        doc = Document(id=doc_id, pages=tuple(pages), source_dataset="synthetic")
        dataset.save_document(doc)
        layout_path = dataset.root / "layout" / f"{doc_id}.jsonl"
        layout_path.parent.mkdir(parents=True, exist_ok=True)
        layout_path.write_text("\n".join(layout_lines) + "\n", encoding="utf-8")

        for q in range(1, rng.randint(3, 4) + 1):
            questions.append(_make_question(rng, f"{doc_id}_q{q}", doc_id))

    dataset.save_questions(questions)
    return dataset


def layout_import_path(dataset: DatasetDir, doc_id: str) -> Path:
    return dataset.root / "layout" / f"{doc_id}.jsonl"
