"""Questions and on-disk layout of normalized pipeline artifacts.

A dataset directory holds one JSON file per document under ``documents/``,
page images under ``images/``, and a ``questions.jsonl`` file. Later stages
add sibling artifacts (entity pools, corrupted questions, verdicts, results)
next to them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .docmodel import Document, document_from_dict, document_to_dict


@dataclass(frozen=True)
class Question:
    id: str
    document_id: str
    text: str
    answers: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "answers", tuple(self.answers))


def question_to_dict(q: Question) -> dict:
    return {"id": q.id, "document_id": q.document_id, "text": q.text, "answers": list(q.answers)}


def question_from_dict(raw: dict) -> Question:
    return Question(
        id=raw["id"],
        document_id=raw["document_id"],
        text=raw["text"],
        answers=tuple(raw.get("answers", [])),
    )


def write_jsonl(path: Path, records: Iterable[dict]) -> int:
    """Write records atomically; returns the record count."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    n = 0
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            n += 1
    tmp.replace(path)
    return n


def read_jsonl(path: Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON line: {exc}") from exc


def append_jsonl(path: Path, record: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
        fh.flush()


class DatasetDir:
    """Accessor for a normalized dataset directory."""

    def __init__(self, root: Path):
        self.root = Path(root)

    @property
    def documents_dir(self) -> Path:
        return self.root / "documents"

    @property
    def images_dir(self) -> Path:
        return self.root / "images"

    @property
    def questions_path(self) -> Path:
        return self.root / "questions.jsonl"

    def document_path(self, doc_id: str) -> Path:
        return self.documents_dir / f"{doc_id}.json"

    def manifest_path(self, doc_id: str) -> Path:
        return self.documents_dir / f"{doc_id}.manifest.json"

    def save_document(self, doc: Document) -> Path:
        path = self.document_path(doc.id)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(document_to_dict(doc), sort_keys=True, indent=1), encoding="utf-8")
        tmp.replace(path)
        return path

    def load_document(self, doc_id: str) -> Document:
        return document_from_dict(json.loads(self.document_path(doc_id).read_text(encoding="utf-8")))

    def document_ids(self) -> list[str]:
        if not self.documents_dir.is_dir():
            return []
        return sorted(
            p.stem for p in self.documents_dir.glob("*.json") if not p.name.endswith(".manifest.json")
        )

    def image_path(self, image_ref: str) -> Path:
        return self.root / image_ref

    def save_questions(self, questions: Iterable[Question]) -> int:
        return write_jsonl(self.questions_path, (question_to_dict(q) for q in questions))

    def load_questions(self) -> list[Question]:
        return [question_from_dict(r) for r in read_jsonl(self.questions_path)]
