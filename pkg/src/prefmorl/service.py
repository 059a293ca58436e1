"""HTTP bridge for human preference labeling.

Exposes pending teacher queries and accepts labels over JSON endpoints,
so a browser frontend or an external script can act as the teacher while
a run is live:

    GET  /queries?limit=N   up to N oldest pending queries
    POST /labels            {"query_id": ..., "label": 0 | 0.5 | 1}
    GET  /status            run step, buffer sizes, latest metrics

The wire schema is documented in docs/FORMATS.md.  The service holds the
query queue and writes answered pairs into the shared preference buffer;
the trainer drains them at its own pace and never blocks on the service.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .core import PreferenceRecord, VALID_LABELS
from .errors import AlreadyAnswered, BadLabel, QueueFull, UnknownQuery
from .teacher import TeacherQuery

DEFAULT_CAPACITY = 10_000


@dataclass
class QueryEnvelope:
    """A queued query with everything a labeling client needs to render
    it: the weight, both segments as (state descriptor, action name)
    step lists, and grid coordinates where the task has them."""

    query_id: str
    env_name: str
    weight: list[float]
    first: list[dict]
    second: list[dict]
    created_at: int
    status: str = "pending"  # pending | answered | expired
    label: float | None = None

    def to_wire(self) -> dict:
        return {
            "query_id": self.query_id,
            "env": self.env_name,
            "weight": self.weight,
            "segments": [self.first, self.second],
            "created_at": self.created_at,
            "status": self.status,
        }


def render_segment(env, segment) -> list[dict]:
    steps = []
    for state, action in segment.steps:
        entry = dict(env.describe_state(state))
        entry["action"] = env.spec.action_names[int(action)]
        steps.append(entry)
    return steps


class PreferenceService:
    """Query queue plus label intake, shared between trainer and HTTP."""

    def __init__(
        self,
        env,
        preference_buffer,
        capacity: int = DEFAULT_CAPACITY,
        expiry_seconds: float | None = None,
    ):
        self.env = env
        self.preferences = preference_buffer
        self.capacity = capacity
        self.expiry_seconds = expiry_seconds
        self._lock = threading.RLock()
        self._queue: dict[str, QueryEnvelope] = {}
        self._queries: dict[str, TeacherQuery] = {}
        self._answered: list[tuple[TeacherQuery, float]] = []
        self._enqueued_at: dict[str, float] = {}
        self.status: dict = {"step": 0, "eu": None, "hv": None}

    # -- teacher interface (trainer side) --------------------------------

    def submit(self, queries: list[TeacherQuery]) -> None:
        for q in queries:
            self.enqueue_query(q)

    def harvest(self) -> list[tuple[TeacherQuery, float]]:
        with self._lock:
            out = self._answered
            self._answered = []
            return out

    # -- queue operations --------------------------------------------------

    def enqueue_query(self, q: TeacherQuery) -> str:
        with self._lock:
            pending = sum(1 for e in self._queue.values() if e.status == "pending")
            if pending >= self.capacity:
                raise QueueFull(f"queue holds {pending} pending queries")
            if q.query_id in self._queue:
                raise QueueFull(f"duplicate query id {q.query_id}")
            envelope = QueryEnvelope(
                query_id=q.query_id,
                env_name=self.env.spec.name,
                weight=[float(v) for v in q.weight.values],
                first=render_segment(self.env, q.first),
                second=render_segment(self.env, q.second),
                created_at=q.created_at,
            )
            self._queue[q.query_id] = envelope
            self._queries[q.query_id] = q
            self._enqueued_at[q.query_id] = time.monotonic()
            return q.query_id

    def expire_stale(self, now: float | None = None) -> int:
        """Mark pending queries older than the expiry window as expired
        so stale, far-from-policy segments are not labeled."""
        if self.expiry_seconds is None:
            return 0
        now = time.monotonic() if now is None else now
        expired = 0
        with self._lock:
            for qid, envelope in self._queue.items():
                if (
                    envelope.status == "pending"
                    and now - self._enqueued_at[qid] > self.expiry_seconds
                ):
                    envelope.status = "expired"
                    expired += 1
        return expired

    def fetch_pending(self, limit: int) -> list[dict]:
        self.expire_stale()
        with self._lock:
            pending = [e for e in self._queue.values() if e.status == "pending"]
            pending.sort(key=lambda e: e.created_at)
            return [e.to_wire() for e in pending[: max(0, limit)]]

    def submit_label(self, query_id: str, label) -> dict:
        try:
            label = float(label)
        except (TypeError, ValueError):
            raise BadLabel(f"label {label!r} is not a number")
        if label not in VALID_LABELS:
            raise BadLabel(f"label must be one of {VALID_LABELS}, got {label}")
        with self._lock:
            envelope = self._queue.get(query_id)
            if envelope is None:
                raise UnknownQuery(query_id)
            if envelope.status == "answered":
                if envelope.label == label:
                    return {"status": "ok", "query_id": query_id, "idempotent": True}
                raise AlreadyAnswered(
                    f"{query_id} already answered with {envelope.label}"
                )
            if envelope.status == "expired":
                raise UnknownQuery(f"{query_id} expired")
            envelope.status = "answered"
            envelope.label = label
            q = self._queries[query_id]
            self._answered.append((q, label))
            self.preferences.append(
                PreferenceRecord(q.first, q.second, q.weight, label)
            )
            return {"status": "ok", "query_id": query_id}

    def counts(self) -> dict:
        with self._lock:
            by_status: dict[str, int] = {"pending": 0, "answered": 0, "expired": 0}
            for e in self._queue.values():
                by_status[e.status] += 1
            return by_status


class _Handler(BaseHTTPRequestHandler):
    service: PreferenceService
    static_dir: Path | None = None

    def _send_json(self, payload, code: int = 200) -> None:
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args) -> None:  # quiet server
        pass

    def do_GET(self) -> None:
        url = urlparse(self.path)
        if url.path == "/queries":
            params = parse_qs(url.query)
            limit = int(params.get("limit", ["50"])[0])
            self._send_json(self.service.fetch_pending(limit))
        elif url.path == "/status":
            payload = dict(self.service.status)
            payload["queue"] = self.service.counts()
            payload["preference_count"] = len(self.service.preferences)
            self._send_json(payload)
        elif self.static_dir is not None:
            self._serve_static(url.path)
        else:
            self._send_json({"error": "not found"}, 404)

    def do_POST(self) -> None:
        url = urlparse(self.path)
        if url.path != "/labels":
            self._send_json({"error": "not found"}, 404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            payload = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            self._send_json({"error": "malformed JSON"}, 400)
            return
        try:
            result = self.service.submit_label(
                payload.get("query_id"), payload.get("label")
            )
            self._send_json(result)
        except BadLabel as exc:
            self._send_json({"error": str(exc)}, 400)
        except UnknownQuery as exc:
            self._send_json({"error": str(exc)}, 404)
        except AlreadyAnswered as exc:
            self._send_json({"error": str(exc)}, 409)

    def _serve_static(self, path: str) -> None:
        name = "index.html" if path == "/" else path.lstrip("/")
        target = (self.static_dir / name).resolve()
        if not str(target).startswith(str(self.static_dir.resolve())) or not target.is_file():
            self._send_json({"error": "not found"}, 404)
            return
        types = {
            ".html": "text/html",
            ".js": "text/javascript",
            ".css": "text/css",
            ".map": "application/json",
        }
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", types.get(target.suffix, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class ServiceServer:
    """Threaded HTTP server wrapper with clean startup and shutdown."""

    def __init__(
        self,
        service: PreferenceService,
        host: str = "127.0.0.1",
        port: int = 8710,
        static_dir: str | Path | None = None,
    ):
        handler = type(
            "BoundHandler",
            (_Handler,),
            {
                "service": service,
                "static_dir": Path(static_dir) if static_dir else None,
            },
        )
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def enqueue_query(service: PreferenceService, q: TeacherQuery) -> str:
    return service.enqueue_query(q)


def fetch_pending(service: PreferenceService, limit: int) -> list[dict]:
    return service.fetch_pending(limit)


def submit_label(service: PreferenceService, query_id: str, label) -> dict:
    return service.submit_label(query_id, label)
