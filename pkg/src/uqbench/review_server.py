"""Embedded HTTP server for the human review gate.

Serves the review API consumed by the browser UI plus the UI's static
assets. Decisions append to ``decisions.jsonl``; appends are serialized, and
every other artifact is read-only here.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from .corpus import DatasetDir, read_jsonl
from .corruption import CorruptedRecord, record_from_dict
from .verification import ReviewDecision, active_decisions, decision_from_dict, decision_to_dict

logger = logging.getLogger(__name__)

_IMAGE_RE = re.compile(r"^/api/documents/([^/]+)/pages/(\d+)/image$")
_DECISION_RE = re.compile(r"^/api/review/([^/]+)$")

FALLBACK_PAGE = """<!doctype html>
<html><head><title>Review</title></head>
<body><h1>Review server is running</h1>
<p>No UI build found. The API is available under <code>/api/review/queue</code>.</p>
</body></html>
"""


class ReviewState:
    """Shared state behind the handlers; decision appends hold a lock."""

    def __init__(self, dataset: DatasetDir, verified_path: Path, decisions_path: Path):
        self.dataset = dataset
        self.decisions_path = decisions_path
        self.lock = threading.Lock()
        self.records: dict[str, CorruptedRecord] = {}
        self.order: list[str] = []
        for raw in read_jsonl(verified_path):
            rec = record_from_dict(raw)
            self.records[rec.id] = rec
            self.order.append(rec.id)

    def decisions(self) -> list[ReviewDecision]:
        if not self.decisions_path.exists():
            return []
        return [decision_from_dict(raw) for raw in read_jsonl(self.decisions_path)]

    def queue(self) -> dict:
        decided = active_decisions(self.decisions())
        items = []
        for qid in self.order:
            if qid in decided:
                continue
            rec = self.records[qid]
            doc = self.dataset.load_document(rec.document_id)
            items.append(
                {
                    "question_id": rec.id,
                    "original_text": rec.original_text,
                    "refined_text": rec.final_text,
                    "complexity": rec.complexity,
                    "replacements": [
                        {
                            "original": r.original_surface,
                            "substitute": r.substitute_surface,
                            "fine_type": r.substitute_fine_type,
                            "page": r.page,
                            "element_class": r.element_class.value,
                            "quadrant": r.quadrant.value,
                        }
                        for r in rec.replacements
                    ],
                    "pages": [
                        f"/api/documents/{rec.document_id}/pages/{p.index}/image"
                        for p in doc.pages
                    ],
                    "decision": None,
                }
            )
        return {
            "items": items,
            "counts": {
                "pending": len(items),
                "decided": len([q for q in self.order if q in decided]),
                "total": len(self.order),
            },
        }

    def submit(self, question_id: str, body: dict) -> None:
        if question_id not in self.records:
            raise KeyError(question_id)
        decision = ReviewDecision(
            question_id=question_id,
            reviewer=str(body.get("reviewer", "")).strip() or "anonymous",
            decision=body["decision"],
            note=str(body.get("note", "")),
            timestamp=time.time(),
        )
        with self.lock:
            with open(self.decisions_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(decision_to_dict(decision), sort_keys=True) + "\n")
                fh.flush()


class ReviewHandler(BaseHTTPRequestHandler):
    state: ReviewState
    static_dir: Optional[Path] = None

    def log_message(self, fmt, *args):  # route through logging, not stderr
        logger.debug("review-serve: " + fmt, *args)

    def _cors_headers(self) -> None:
        # Allows a UI served from a dev server on another port to call the API.
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors_headers()
        self.end_headers()

    def _send_json(self, payload: dict, status: int = 200) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self._cors_headers()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/api/review/queue":
            self._send_json(self.state.queue())
            return
        image = _IMAGE_RE.match(self.path)
        if image:
            self._serve_image(image.group(1), int(image.group(2)))
            return
        self._serve_static(self.path)

    def do_POST(self):
        match = _DECISION_RE.match(self.path)
        if not match:
            self._send_json({"error": "not found"}, status=404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
            if body.get("decision") not in ("accept", "reject"):
                raise ValueError(f"decision must be accept or reject: {body.get('decision')!r}")
            self.state.submit(match.group(1), body)
        except KeyError:
            self._send_json({"error": "unknown question"}, status=404)
            return
        except (ValueError, json.JSONDecodeError) as exc:
            self._send_json({"error": str(exc)}, status=400)
            return
        self.send_response(204)
        self._cors_headers()
        self.end_headers()

    def _serve_image(self, doc_id: str, page_index: int):
        try:
            doc = self.state.dataset.load_document(doc_id)
            page = doc.page(page_index)
            data = self.state.dataset.image_path(page.image_ref).read_bytes()
        except (FileNotFoundError, IndexError):
            self._send_json({"error": "image not found"}, status=404)
            return
        ctype = mimetypes.guess_type(page.image_ref)[0] or "application/octet-stream"
        self.send_response(200)
        self._cors_headers()
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _serve_static(self, path: str):
        name = "index.html" if path in ("/", "") else path.lstrip("/")
        if self.static_dir is not None:
            candidate = (self.static_dir / name).resolve()
            if candidate.is_file() and self.static_dir.resolve() in candidate.parents:
                data = candidate.read_bytes()
                ctype = mimetypes.guess_type(candidate.name)[0] or "application/octet-stream"
                self.send_response(200)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)
                return
        if name == "index.html":
            data = FALLBACK_PAGE.encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "text/html")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
            return
        self._send_json({"error": "not found"}, status=404)


def make_server(
    dataset: DatasetDir,
    verified_path: Path,
    decisions_path: Path,
    bind: str = "127.0.0.1:8765",
    static_dir: Optional[Path] = None,
) -> ThreadingHTTPServer:
    host, _, port = bind.partition(":")
    state = ReviewState(dataset, verified_path, decisions_path)
    handler = type(
        "BoundReviewHandler", (ReviewHandler,), {"state": state, "static_dir": static_dir}
    )
    return ThreadingHTTPServer((host, int(port or "8765")), handler)


def serve_forever(server: ThreadingHTTPServer) -> None:
    host, port = server.server_address[:2]
    logger.info("review server listening on http://%s:%s/", host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
