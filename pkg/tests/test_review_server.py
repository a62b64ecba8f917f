"""Review API: queue filtering, image serving, decision persistence."""

from __future__ import annotations

import json
import threading
import urllib.request

import pytest

from uqbench.corpus import DatasetDir, read_jsonl, write_jsonl
from uqbench.corruption import corrupted_to_dict
from uqbench.review_server import make_server
from uqbench.verification import decision_from_dict

from test_corruption import pool_entity, q_entity  # reuse entity builders
from uqbench.corpus import Question
from uqbench.corruption import candidate_map, corrupt
from uqbench.entities import MacroCategory


@pytest.fixture
def served(tmp_path):
    from PIL import Image

    dataset = DatasetDir(tmp_path / "data")
    from uqbench.docmodel import Document
    from conftest import element, page

    pages = []
    for i in (1, 2):
        ref = f"images/d1_p{i}.png"
        path = dataset.root / ref
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.new("RGB", (64, 64), "white").save(path, format="PNG")
        pages.append(
            page(index=i, width=64, height=64, image_ref=ref, elements=[element(f"p{i}e0", (1, 1, 10, 10), text="t")])
        )
    dataset.save_document(Document(id="d1", pages=tuple(pages)))

    verified = []
    for i in range(3):
        q = Question(id=f"q{i}", document_id="d1", text=f"Was it built in {2000 + i}?")
        ent = q_entity(q, str(2000 + i), "year_numerical_value", MacroCategory.TEMPORAL)
        pool = [pool_entity("1990", "year_numerical_value")]
        cq = corrupt(q, candidate_map([ent], pool), 1, seed=0)
        verified.append(corrupted_to_dict(cq))
    verified_path = tmp_path / "verified.jsonl"
    write_jsonl(verified_path, verified)

    decisions_path = tmp_path / "decisions.jsonl"
    server = make_server(dataset, verified_path, decisions_path, bind="127.0.0.1:0")
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    yield base, decisions_path
    server.shutdown()
    server.server_close()


def _get_json(url):
    with urllib.request.urlopen(url) as resp:
        return json.loads(resp.read())


def _post_json(url, payload):
    req = urllib.request.Request(
        url, data=json.dumps(payload).encode(), headers={"Content-Type": "application/json"}
    )
    with urllib.request.urlopen(req) as resp:
        return resp.status


def test_queue_lists_pending_items(served):
    base, _ = served
    queue = _get_json(f"{base}/api/review/queue")
    assert queue["counts"] == {"pending": 3, "decided": 0, "total": 3}
    item = queue["items"][0]
    assert item["question_id"] == "q0_c1"
    assert item["replacements"][0]["substitute"] == "1990"
    assert item["pages"] == ["/api/documents/d1/pages/1/image", "/api/documents/d1/pages/2/image"]
    assert item["decision"] is None


def test_page_image_served(served):
    base, _ = served
    with urllib.request.urlopen(f"{base}/api/documents/d1/pages/1/image") as resp:
        assert resp.status == 200
        assert resp.headers["Content-Type"] == "image/png"
        assert resp.read()[:8] == b"\x89PNG\r\n\x1a\n"


def test_decision_round_trip_updates_queue_and_file(served):
    base, decisions_path = served
    status = _post_json(
        f"{base}/api/review/q1_c1", {"decision": "reject", "reviewer": "rev1", "note": "answerable"}
    )
    assert status == 204
    stored = [decision_from_dict(r) for r in read_jsonl(decisions_path)]
    assert len(stored) == 1
    assert (stored[0].question_id, stored[0].decision, stored[0].note) == (
        "q1_c1",
        "reject",
        "answerable",
    )
    queue = _get_json(f"{base}/api/review/queue")
    assert queue["counts"] == {"pending": 2, "decided": 1, "total": 3}
    assert all(item["question_id"] != "q1_c1" for item in queue["items"])


def test_double_submit_latest_wins(served):
    base, decisions_path = served
    _post_json(f"{base}/api/review/q0_c1", {"decision": "reject", "reviewer": "rev1"})
    _post_json(f"{base}/api/review/q0_c1", {"decision": "accept", "reviewer": "rev1"})
    rows = list(read_jsonl(decisions_path))
    assert len(rows) == 2  # every submit persisted
    from uqbench.verification import active_decisions

    assert active_decisions([decision_from_dict(r) for r in rows]) == {"q0_c1": "accept"}


def test_unknown_question_404(served):
    base, _ = served
    with pytest.raises(urllib.error.HTTPError) as err:
        _post_json(f"{base}/api/review/ghost", {"decision": "accept", "reviewer": "r"})
    assert err.value.code == 404


def test_invalid_decision_400(served):
    base, _ = served
    with pytest.raises(urllib.error.HTTPError) as err:
        _post_json(f"{base}/api/review/q0_c1", {"decision": "maybe", "reviewer": "r"})
    assert err.value.code == 400


def test_fallback_page_served(served):
    base, _ = served
    with urllib.request.urlopen(f"{base}/") as resp:
        assert resp.status == 200
        assert b"Review" in resp.read()
