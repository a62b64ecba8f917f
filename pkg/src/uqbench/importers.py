"""Dataset importers: the native normalized format plus adapters for the two
public multi-page document VQA releases.

Every importer lands on the same normalized layout (documents/, images/,
questions.jsonl). Sampling is seeded so a sampled import is reproducible.
"""

from __future__ import annotations

import json
import random
import shutil
from pathlib import Path
from typing import Optional

from .corpus import DatasetDir, Question
from .docmodel import Document, Page

SOURCE_FORMATS = ("native", "mpdocvqa", "dude")


class ImportError_(ValueError):
    """Schema mismatch or unreadable source; message names the offender."""


def _image_size(path: Path) -> tuple[int, int]:
    from PIL import Image

    with Image.open(path) as img:
        return img.width, img.height


def _copy_image(src: Path, dataset: DatasetDir, ref: str) -> None:
    dest = dataset.root / ref
    dest.parent.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(src, dest)


def import_native(src: Path, out: DatasetDir) -> tuple[int, int]:
    """Validate and copy an already-normalized dataset; lossless round trip."""
    source = DatasetDir(src)
    doc_ids = source.document_ids()
    if not doc_ids:
        raise ImportError_(f"{src}: no documents found under documents/")
    questions = source.load_questions()
    for doc_id in doc_ids:
        doc = source.load_document(doc_id)  # validates invariants
        out.save_document(doc)
        for page in doc.pages:
            _copy_image(source.image_path(page.image_ref), out, page.image_ref)
    out.save_questions(questions)
    return len(doc_ids), len(questions)


def import_mpdocvqa(src: Path, out: DatasetDir) -> tuple[int, int]:
    """Adapter for the MPDocVQA question file + per-page image directory.

    Expects ``src`` to be the questions JSON ({"data": [...]}) with page
    images in an ``images/`` directory beside it, named ``{page_id}.jpg``
    (or ``.png``).
    """
    raw = _load_json(src)
    records = raw.get("data")
    if not isinstance(records, list):
        raise ImportError_(f"{src}: expected top-level 'data' list")
    images_dir = src.parent / "images"

    page_lists: dict[str, list[str]] = {}
    questions: list[Question] = []
    for i, rec in enumerate(records):
        try:
            qid = str(rec["questionId"])
            doc_id = str(rec["doc_id"])
            text = rec["question"]
            page_ids = list(rec["page_ids"])
            answers = [str(a) for a in rec.get("answers", [])]
        except (KeyError, TypeError) as exc:
            raise ImportError_(f"{src}: data[{i}]: missing field {exc}") from exc
        known = page_lists.setdefault(doc_id, [])
        for pid in page_ids:
            if pid not in known:
                known.append(pid)
        questions.append(Question(id=qid, document_id=doc_id, text=text, answers=tuple(answers)))

    for doc_id, page_ids in sorted(page_lists.items()):
        pages = []
        for idx, pid in enumerate(sorted(page_ids), start=1):
            img = _find_image(images_dir, pid)
            if img is None:
                raise ImportError_(f"{src}: page image not found for {pid!r} under {images_dir}")
            ref = f"images/{img.name}"
            _copy_image(img, out, ref)
            w, h = _image_size(img)
            pages.append(Page(index=idx, width=w, height=h, image_ref=ref))
        out.save_document(Document(id=doc_id, pages=tuple(pages), source_dataset="mpdocvqa"))
    out.save_questions(questions)
    return len(page_lists), len(questions)


def import_dude(src: Path, out: DatasetDir) -> tuple[int, int]:
    """Adapter for the DUDE annotations file + rendered page images.

    Expects ``src`` to be the annotations JSON ({"data": [...]}) with page
    images in an ``images/`` directory beside it, named
    ``{docId}_{page:04d}.png`` (or ``.jpg``), pages numbered from 1.
    """
    raw = _load_json(src)
    records = raw.get("data")
    if not isinstance(records, list):
        raise ImportError_(f"{src}: expected top-level 'data' list")
    images_dir = src.parent / "images"

    questions: list[Question] = []
    doc_ids: list[str] = []
    for i, rec in enumerate(records):
        try:
            qid = str(rec["questionId"])
            doc_id = str(rec["docId"])
            text = rec["question"]
            answers = [str(a) for a in rec.get("answers", [])]
        except (KeyError, TypeError) as exc:
            raise ImportError_(f"{src}: data[{i}]: missing field {exc}") from exc
        if doc_id not in doc_ids:
            doc_ids.append(doc_id)
        questions.append(Question(id=qid, document_id=doc_id, text=text, answers=tuple(answers)))

    for doc_id in sorted(doc_ids):
        page_images = sorted(
            p for p in images_dir.glob(f"{doc_id}_*.*") if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        )
        if not page_images:
            raise ImportError_(f"{src}: no page images for document {doc_id!r} under {images_dir}")
        pages = []
        for idx, img in enumerate(page_images, start=1):
            ref = f"images/{img.name}"
            _copy_image(img, out, ref)
            w, h = _image_size(img)
            pages.append(Page(index=idx, width=w, height=h, image_ref=ref))
        out.save_document(Document(id=doc_id, pages=tuple(pages), source_dataset="dude"))
    out.save_questions(questions)
    return len(doc_ids), len(questions)


def _find_image(images_dir: Path, page_id: str) -> Optional[Path]:
    for ext in (".jpg", ".jpeg", ".png"):
        candidate = images_dir / f"{page_id}{ext}"
        if candidate.exists():
            return candidate
    return None


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ImportError_(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise ImportError_(f"{path}: invalid JSON: {exc}") from exc


def sample_questions(dataset: DatasetDir, n: int, seed: int) -> tuple[int, int]:
    """Seeded downsample to ``n`` questions; drops now-unreferenced documents."""
    questions = sorted(dataset.load_questions(), key=lambda q: q.id)
    if n < len(questions):
        rng = random.Random(seed)
        questions = sorted(rng.sample(questions, n), key=lambda q: q.id)
    keep_docs = {q.document_id for q in questions}
    removed = 0
    for doc_id in dataset.document_ids():
        if doc_id not in keep_docs:
            dataset.document_path(doc_id).unlink()
            removed += 1
    dataset.save_questions(questions)
    return len(questions), removed


def import_dataset(
    source_format: str, src: Path, out_dir: Path, sample: Optional[int] = None, seed: int = 0
) -> dict:
    out = DatasetDir(Path(out_dir))
    out.root.mkdir(parents=True, exist_ok=True)
    if source_format == "native":
        n_docs, n_questions = import_native(Path(src), out)
    elif source_format == "mpdocvqa":
        n_docs, n_questions = import_mpdocvqa(Path(src), out)
    elif source_format == "dude":
        n_docs, n_questions = import_dude(Path(src), out)
    else:
        raise ImportError_(f"unknown source format {source_format!r}; expected {SOURCE_FORMATS}")
    manifest = {"format": source_format, "n_documents": n_docs, "n_questions": n_questions}
    if sample is not None:
        kept, removed = sample_questions(out, sample, seed)
        manifest.update({"sampled_to": kept, "documents_dropped": removed, "sample_seed": seed})
    return manifest
