"""Importer adapters: native round trip, public-format mapping, seeded sampling."""

from __future__ import annotations

import json

import pytest

from uqbench.corpus import DatasetDir
from uqbench.fixture import build_fixture
from uqbench.importers import ImportError_, import_dataset


def _write_image(path, width=90, height=120):
    from PIL import Image

    path.parent.mkdir(parents=True, exist_ok=True)
    Image.new("RGB", (width, height), "white").save(path, format=("PNG" if path.suffix == ".png" else "JPEG"))


def test_native_round_trip(tmp_path):
    src = build_fixture(tmp_path / "src", n_docs=2, seed=5)
    manifest = import_dataset("native", src.root, tmp_path / "dst")
    assert manifest["n_documents"] == 2
    dst = DatasetDir(tmp_path / "dst")
    for doc_id in src.document_ids():
        assert dst.document_path(doc_id).read_text() == src.document_path(doc_id).read_text()
    assert dst.questions_path.read_text() == src.questions_path.read_text()
    for page in src.load_document("doc01").pages:
        assert (dst.root / page.image_ref).read_bytes() == (src.root / page.image_ref).read_bytes()


def test_mpdocvqa_adapter(tmp_path):
    src_dir = tmp_path / "mp"
    for pid in ("docA_p1", "docA_p2", "docB_p1"):
        _write_image(src_dir / "images" / f"{pid}.jpg")
    questions = {
        "dataset_name": "sample",
        "data": [
            {
                "questionId": 101,
                "question": "What year is shown?",
                "doc_id": "docA",
                "page_ids": ["docA_p1", "docA_p2"],
                "answers": ["2001"],
            },
            {
                "questionId": 102,
                "question": "Which city?",
                "doc_id": "docB",
                "page_ids": ["docB_p1"],
                "answers": ["Oslo"],
            },
        ],
    }
    src = src_dir / "questions.json"
    src.write_text(json.dumps(questions), encoding="utf-8")

    manifest = import_dataset("mpdocvqa", src, tmp_path / "out")
    assert manifest == {"format": "mpdocvqa", "n_documents": 2, "n_questions": 2}
    out = DatasetDir(tmp_path / "out")
    doc = out.load_document("docA")
    assert len(doc.pages) == 2
    assert doc.pages[0].width == 90 and doc.pages[0].height == 120
    assert doc.source_dataset == "mpdocvqa"
    questions_out = out.load_questions()
    assert {q.id for q in questions_out} == {"101", "102"}
    assert questions_out[0].answers == ("2001",)


def test_mpdocvqa_missing_field_names_record(tmp_path):
    src = tmp_path / "questions.json"
    src.write_text(json.dumps({"data": [{"questionId": 1, "question": "q"}]}), encoding="utf-8")
    with pytest.raises(ImportError_) as err:
        import_dataset("mpdocvqa", src, tmp_path / "out")
    assert "data[0]" in str(err.value)


def test_dude_adapter(tmp_path):
    src_dir = tmp_path / "dude"
    for name in ("docX_0001.png", "docX_0002.png"):
        _write_image(src_dir / "images" / name)
    annotations = {
        "data": [
            {"questionId": "q-1", "docId": "docX", "question": "When?", "answers": ["1999"]}
        ]
    }
    src = src_dir / "annotations.json"
    src.write_text(json.dumps(annotations), encoding="utf-8")
    manifest = import_dataset("dude", src, tmp_path / "out")
    assert manifest["n_documents"] == 1
    out = DatasetDir(tmp_path / "out")
    doc = out.load_document("docX")
    assert [p.index for p in doc.pages] == [1, 2]
    assert doc.source_dataset == "dude"


def test_dude_missing_images_is_error(tmp_path):
    src_dir = tmp_path / "dude"
    (src_dir / "images").mkdir(parents=True)
    src = src_dir / "annotations.json"
    src.write_text(
        json.dumps({"data": [{"questionId": "q", "docId": "ghost", "question": "?"}]}),
        encoding="utf-8",
    )
    with pytest.raises(ImportError_) as err:
        import_dataset("dude", src, tmp_path / "out")
    assert "ghost" in str(err.value)


def test_sampling_is_seeded_and_stable(tmp_path):
    def run(out):
        src = build_fixture(tmp_path / f"src_{out}", n_docs=3, seed=5)
        import_dataset("native", src.root, tmp_path / out, sample=4, seed=11)
        return [q.id for q in DatasetDir(tmp_path / out).load_questions()]

    first = run("out1")
    second = run("out2")
    assert first == second
    assert len(first) == 4


def test_sampling_drops_unreferenced_documents(tmp_path):
    src = build_fixture(tmp_path / "src", n_docs=3, seed=5)
    import_dataset("native", src.root, tmp_path / "out", sample=1, seed=2)
    out = DatasetDir(tmp_path / "out")
    questions = out.load_questions()
    assert len(questions) == 1
    assert out.document_ids() == [questions[0].document_id]


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(ImportError_):
        import_dataset("csv", tmp_path / "x", tmp_path / "out")
