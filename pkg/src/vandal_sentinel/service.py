"""Real-time scoring service.

Single and batch scoring endpoints over a persistent score cache, a
pre-caching worker that follows the revision stream, latency
instrumentation, and the small review surface the patrol frontend uses
(queue, labels, curve data).

The cache is sqlite, keyed (model_version, rev_id), bounded by an LRU byte
budget. Fresh computation runs under single-flight per key, so concurrent
requests for one revision compute it once. Scores are pure functions of
(model, revision), which makes cache and fresh paths bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import sqlite3
import statistics
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from .corpus import LABEL_CLASSES
from .diff import EntityDiff, PropertyRegistry, diff
from .entity import parse_entity
from .errors import (
    BatchTooLarge,
    CheckpointInvalid,
    MissingCurves,
    ModelUnavailable,
    NotFound,
    RevisionNotFound,
    Transport,
    UpstreamError,
    UpstreamUnavailable,
)
from .features import PatternConfig, default_pattern_config, default_property_registry, extract
from .forest import TrainedModel, predict_proba, serialize_model
from .ingestion import RevisionEnvelope, Source, checkpoint_token
from . import ingestion

DEFAULT_BYTE_BUDGET = 64 * 1024 * 1024
DEFAULT_MAX_BATCH = 50

_SECTIONS = ("labels", "descriptions", "aliases", "statements", "sitelinks")


def utc_iso(ts: Optional[float] = None) -> str:
    moment = datetime.fromtimestamp(ts if ts is not None else time.time(), tz=timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def model_version_of(model: TrainedModel) -> str:
    digest = hashlib.sha1(serialize_model(model).encode("utf-8")).hexdigest()
    return f"{model.format_version}-{digest[:12]}"


# ---------------------------------------------------------------------------
# Cache
# ---------------------------------------------------------------------------

class ScoreCache:
    """Persistent (model_version, rev_id) -> payload store with LRU bytes."""

    def __init__(self, path, byte_budget: int = DEFAULT_BYTE_BUDGET):
        self.path = str(path)
        self.byte_budget = byte_budget
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.execute(
            """
            CREATE TABLE IF NOT EXISTS scores (
                model_version TEXT NOT NULL,
                rev_id INTEGER NOT NULL,
                payload TEXT NOT NULL,
                nbytes INTEGER NOT NULL,
                created_at REAL NOT NULL,
                last_access REAL NOT NULL,
                PRIMARY KEY (model_version, rev_id)
            )
            """
        )
        self._conn.commit()

    def get(self, model_version: str, rev_id: int) -> Optional[dict]:
        with self._lock:
            row = self._conn.execute(
                "SELECT payload FROM scores WHERE model_version = ? AND rev_id = ?",
                (model_version, rev_id),
            ).fetchone()
            if row is None:
                return None
            self._conn.execute(
                "UPDATE scores SET last_access = ? WHERE model_version = ? AND rev_id = ?",
                (time.time(), model_version, rev_id),
            )
            self._conn.commit()
        return json.loads(row[0])

    def put(self, model_version: str, rev_id: int, payload: dict) -> None:
        text = json.dumps(payload, sort_keys=True)
        now = time.time()
        with self._lock:
            self._conn.execute(
                "INSERT OR IGNORE INTO scores VALUES (?, ?, ?, ?, ?, ?)",
                (model_version, rev_id, text, len(text.encode("utf-8")), now, now),
            )
            total = self._conn.execute("SELECT COALESCE(SUM(nbytes), 0) FROM scores").fetchone()[0]
            while total > self.byte_budget:
                victim = self._conn.execute(
                    "SELECT model_version, rev_id, nbytes FROM scores "
                    "ORDER BY last_access ASC, rev_id ASC LIMIT 1"
                ).fetchone()
                if victim is None or (victim[0] == model_version and victim[1] == rev_id):
                    break
                self._conn.execute(
                    "DELETE FROM scores WHERE model_version = ? AND rev_id = ?",
                    (victim[0], victim[1]),
                )
                total -= victim[2]
            self._conn.commit()

    def count(self) -> int:
        with self._lock:
            return self._conn.execute("SELECT COUNT(*) FROM scores").fetchone()[0]

    def close(self) -> None:
        with self._lock:
            self._conn.close()


# ---------------------------------------------------------------------------
# Latency instrumentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatencyRecord:
    mode: str  # single | batch | cached
    seconds: float
    batch_size: Optional[int] = None

    def per_revision(self) -> float:
        if self.mode == "batch" and self.batch_size:
            return self.seconds / self.batch_size
        return self.seconds


class LatencyLog:
    def __init__(self) -> None:
        self._records: list[LatencyRecord] = []
        self._lock = threading.Lock()

    def record(self, mode: str, seconds: float, batch_size: Optional[int] = None) -> None:
        with self._lock:
            self._records.append(LatencyRecord(mode=mode, seconds=seconds, batch_size=batch_size))

    def records(self) -> list[LatencyRecord]:
        with self._lock:
            return list(self._records)

    def report(self) -> dict:
        out: dict = {}
        for mode in ("single", "batch", "cached"):
            samples = [r.per_revision() for r in self.records() if r.mode == mode]
            if not samples:
                out[mode] = {"count": 0}
                continue
            ordered = sorted(samples)
            out[mode] = {
                "count": len(samples),
                "mean": statistics.fmean(samples),
                "median": statistics.median(samples),
                "p95": ordered[int(0.95 * (len(ordered) - 1))],
            }
        return out

    def to_csv(self) -> str:
        lines = ["mode,seconds,batch_size,per_revision_seconds"]
        for record in self.records():
            size = "" if record.batch_size is None else str(record.batch_size)
            lines.append(f"{record.mode},{record.seconds:.9f},{size},{record.per_revision():.9f}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Queue and labels (review surface)
# ---------------------------------------------------------------------------

def diff_summary(entity_diff: EntityDiff) -> dict:
    sections = {}
    for section in _SECTIONS:
        entry = {}
        for op in ("added", "removed", "changed"):
            name = f"{section}_{op}"
            if hasattr(entity_diff, name):
                entry[op] = getattr(entity_diff, name)
        sections[section] = entry
    return {
        "sections": sections,
        "changed_properties": sorted(entity_diff.changed_properties),
    }


class QueueStore:
    """In-memory review queue, filled as revisions get scored."""

    def __init__(self) -> None:
        self._items: dict[int, dict] = {}
        self._lock = threading.Lock()

    def put(self, item: dict) -> None:
        with self._lock:
            self._items.setdefault(item["rev_id"], item)

    def get(self, rev_id: int) -> Optional[dict]:
        with self._lock:
            return self._items.get(rev_id)

    def page(self, min_score: float, page: int, page_size: int, labels: "LabelStore") -> dict:
        with self._lock:
            items = [dict(item) for item in self._items.values()]
        for item in items:
            state = labels.state_of(item["rev_id"])
            item["label_state"] = state["label_state"]
            item["labeled_by"] = state["labeled_by"]
            item["labeled_at"] = state["labeled_at"]
            item["label_revision"] = state["label_revision"]
        items = [i for i in items if i["probability_true"] >= min_score]
        items.sort(key=lambda i: (-i["probability_true"], i["rev_id"]))
        start = page * page_size
        chunk = items[start : start + page_size]
        return {
            "items": chunk,
            "page": page,
            "page_size": page_size,
            "total": len(items),
            "has_more": start + page_size < len(items),
        }

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)


class LabelStore:
    """Append-only label event log, durable as JSONL under the cache dir."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._events: list[dict] = []
        self._by_rev: dict[int, list[dict]] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._index(json.loads(line))

    def _index(self, event: dict) -> None:
        self._events.append(event)
        self._by_rev.setdefault(event["rev_id"], []).append(event)

    def state_of(self, rev_id: int) -> dict:
        with self._lock:
            events = self._by_rev.get(rev_id, [])
            if not events:
                return {
                    "label_state": "unlabeled",
                    "labeled_by": None,
                    "labeled_at": None,
                    "label_revision": 0,
                }
            latest = events[-1]
            return {
                "label_state": latest["class"],
                "labeled_by": latest["reviewer"],
                "labeled_at": latest["labeled_at"],
                "label_revision": len(events),
            }

    def append(self, rev_id: int, cls: str, reviewer: str, expected_revision: Optional[int]) -> dict:
        """Record one label event with optimistic concurrency.

        expected_revision is how many events the writer believed existed; a
        mismatch means another reviewer got there first and the caller must
        confirm against the fresh state.
        """
        if cls not in LABEL_CLASSES:
            raise ValueError(f"unknown label class {cls!r}")
        with self._lock:
            current = len(self._by_rev.get(rev_id, []))
            if expected_revision is not None and expected_revision != current:
                return {
                    "conflict": True,
                    "current_revision": current,
                    "current_class": self._by_rev[rev_id][-1]["class"] if current else None,
                }
            event = {
                "seq": len(self._events) + 1,
                "rev_id": rev_id,
                "class": cls,
                "reviewer": reviewer,
                "labeled_at": utc_iso(),
            }
            self._index(event)
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(event, sort_keys=True) + "\n")
            return {"conflict": False, "event": event, "current_revision": current + 1}

    def export_jsonl(self) -> str:
        with self._lock:
            return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self._events)


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

class ScoringEngine:
    """Fetch, extract, predict, cache. All service endpoints sit on this."""

    def __init__(
        self,
        model: TrainedModel,
        source: Source,
        cache: ScoreCache,
        threshold: float = 0.5,
        max_batch: int = DEFAULT_MAX_BATCH,
        pattern_cfg: Optional[PatternConfig] = None,
        registry: Optional[PropertyRegistry] = None,
    ):
        self.model = model
        self.model_version = model_version_of(model)
        self.source = source
        self.cache = cache
        self.threshold = threshold
        self.max_batch = max_batch
        self.pattern_cfg = pattern_cfg or default_pattern_config()
        self.registry = registry or default_property_registry()
        self.latency = LatencyLog()
        self.queue = QueueStore()
        self._inflight: dict[int, threading.Event] = {}
        self._flight_lock = threading.Lock()

    # -- scoring ------------------------------------------------------------

    def _entry(self, payload: dict, source: str) -> dict:
        probability = payload["probability_true"]
        return {
            "rev_id": payload["rev_id"],
            "probability": {"true": probability, "false": 1.0 - probability},
            "prediction": probability >= self.threshold,
            "model_version": self.model_version,
            "computed_at": payload["computed_at"],
            "source": source,
        }

    def _compute_from_envelope(self, envelope: RevisionEnvelope) -> dict:
        meta = envelope.meta
        child = parse_entity(envelope.child_json, rev_id=meta.rev_id, timestamp=meta.timestamp)
        parent = parse_entity(envelope.parent_json) if envelope.parent_json is not None else None
        entity_diff = diff(parent, child, self.registry)
        vector = extract(entity_diff, child, meta, self.registry, self.pattern_cfg)
        probability = float(
            predict_proba(self.model, self.model.select(np.array(vector.values)))[0]
        )
        payload = {
            "rev_id": meta.rev_id,
            "probability_true": probability,
            "computed_at": utc_iso(),
        }
        self.queue.put(
            {
                "rev_id": meta.rev_id,
                "item_id": child.item_id,
                "probability_true": probability,
                "diff": diff_summary(entity_diff),
                "user": {
                    "name": meta.user.name,
                    "is_anonymous": meta.user.is_anonymous,
                    "is_bot": meta.user.is_bot,
                    "is_admin": bool(meta.user.groups & self.pattern_cfg.admin_groups),
                    "is_curator": bool(meta.user.groups & self.pattern_cfg.curator_groups),
                    "has_advanced_rights": bool(meta.user.groups & self.pattern_cfg.advanced_groups),
                },
                "comment": meta.comment,
                "timestamp": utc_iso(meta.timestamp),
            }
        )
        return payload

    def _get_or_compute(self, rev_id: int, envelope: Optional[RevisionEnvelope] = None) -> dict:
        """Single-flight get-or-compute; returns a response entry dict."""
        for _ in range(3):
            cached = self.cache.get(self.model_version, rev_id)
            if cached is not None:
                return self._entry(cached, "cache")
            with self._flight_lock:
                waiter = self._inflight.get(rev_id)
                if waiter is None:
                    self._inflight[rev_id] = threading.Event()
                    owner = True
                else:
                    owner = False
            if not owner:
                waiter.wait(timeout=60)
                continue
            try:
                if envelope is None:
                    envelope = self._fetch(rev_id)
                payload = self._compute_from_envelope(envelope)
                self.cache.put(self.model_version, rev_id, payload)
                return self._entry(payload, "fresh")
            finally:
                with self._flight_lock:
                    event = self._inflight.pop(rev_id, None)
                if event is not None:
                    event.set()
        raise UpstreamUnavailable(f"gave up waiting on concurrent computation of {rev_id}")

    def _fetch(self, rev_id: int) -> RevisionEnvelope:
        try:
            return self.source.fetch_revision(rev_id)
        except NotFound as exc:
            raise RevisionNotFound(str(exc)) from exc
        except (Transport, UpstreamError) as exc:
            raise UpstreamUnavailable(str(exc)) from exc

    def score_single(self, rev_id: int) -> dict:
        start = time.perf_counter()
        entry = self._get_or_compute(rev_id)
        elapsed = time.perf_counter() - start
        self.latency.record("cached" if entry["source"] == "cache" else "single", elapsed)
        return entry

    def score_batch(self, rev_ids: list[int]) -> dict:
        if not rev_ids:
            raise BatchTooLarge("rev_ids must not be empty")
        if len(rev_ids) > self.max_batch:
            raise BatchTooLarge(f"batch of {len(rev_ids)} exceeds limit {self.max_batch}")
        start = time.perf_counter()
        entries: dict[str, dict] = {}
        missing: list[int] = []
        for rev_id in rev_ids:
            cached = self.cache.get(self.model_version, rev_id)
            if cached is not None:
                entries[str(rev_id)] = self._entry(cached, "cache")
            else:
                missing.append(rev_id)
        if missing:
            try:
                found, errors = self.source.fetch_revisions_partial(missing)
            except (Transport, UpstreamError) as exc:
                found, errors = {}, {rid: exc for rid in missing}
            for rev_id in missing:
                if rev_id in found:
                    entries[str(rev_id)] = self._get_or_compute(rev_id, envelope=found[rev_id])
                else:
                    error = errors.get(rev_id)
                    name = "RevisionNotFound" if isinstance(error, NotFound) else "UpstreamUnavailable"
                    entries[str(rev_id)] = {"error": name, "detail": str(error)}
        elapsed = time.perf_counter() - start
        self.latency.record("batch", elapsed, batch_size=len(rev_ids))
        return {"scores": entries}


# ---------------------------------------------------------------------------
# Precache worker
# ---------------------------------------------------------------------------

class PrecacheWorker:
    """Background consumer that scores the stream as revisions arrive."""

    def __init__(self, engine: ScoringEngine, checkpoint_path=None, from_ts: int = 0):
        self.engine = engine
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        self.from_ts = from_ts
        self.state = "idle"
        self.errors = 0
        self.processed = 0
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _load_checkpoint(self) -> Optional[str]:
        if self.checkpoint_path and self.checkpoint_path.exists():
            return self.checkpoint_path.read_text(encoding="utf-8").strip() or None
        return None

    def _save_checkpoint(self, envelope: RevisionEnvelope) -> None:
        if self.checkpoint_path:
            token = checkpoint_token(envelope.meta.timestamp, envelope.meta.rev_id)
            self.checkpoint_path.write_text(token + "\n", encoding="utf-8")

    def run_once(self) -> int:
        """Consume the stream to exhaustion synchronously (fixture replay)."""
        checkpoint = self._load_checkpoint()
        self.state = "running"
        try:
            stream = self.engine.source.stream_recent(self.from_ts, checkpoint)
            for envelope in stream:
                if self._stop.is_set():
                    break
                try:
                    self.engine._get_or_compute(envelope.meta.rev_id, envelope=envelope)
                    self.processed += 1
                except CheckpointInvalid:
                    raise
                except Exception:
                    self.errors += 1
                self._save_checkpoint(envelope)
        except CheckpointInvalid:
            self.state = "halted"
            raise
        self.state = "stopped"
        return self.processed

    def start(self) -> None:
        def _run():
            try:
                self.run_once()
            except CheckpointInvalid:
                pass

        self._thread = threading.Thread(target=_run, name="precache", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=30)


# ---------------------------------------------------------------------------
# HTTP app
# ---------------------------------------------------------------------------

def _error_response(name: str, detail: str, status: int) -> JSONResponse:
    return JSONResponse({"error": name, "detail": detail}, status_code=status)


def create_app(
    engine: ScoringEngine,
    label_store: Optional[LabelStore] = None,
    curves_path=None,
    worker: Optional[PrecacheWorker] = None,
) -> FastAPI:
    app = FastAPI(title="vandal-sentinel scoring service", docs_url=None, redoc_url=None)
    labels = label_store or LabelStore(Path(engine.cache.path).parent / "labels.jsonl")

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "model_version": engine.model_version,
            "cache_entries": engine.cache.count(),
            "queue_size": len(engine.queue),
            "precache": worker.state if worker else "disabled",
        }

    @app.get("/v1/scores/{rev_id}")
    def score_single(rev_id: int):
        try:
            return engine.score_single(rev_id)
        except RevisionNotFound as exc:
            return _error_response("RevisionNotFound", str(exc), 404)
        except UpstreamUnavailable as exc:
            return _error_response("UpstreamUnavailable", str(exc), 502)
        except ModelUnavailable as exc:
            return _error_response("ModelUnavailable", str(exc), 503)

    @app.post("/v1/scores")
    async def score_batch(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error_response("BadRequest", "body must be JSON", 400)
        rev_ids = body.get("rev_ids") if isinstance(body, dict) else None
        if not isinstance(rev_ids, list) or not all(isinstance(r, int) for r in rev_ids):
            return _error_response("BadRequest", "body needs integer rev_ids list", 400)
        try:
            return engine.score_batch(rev_ids)
        except BatchTooLarge as exc:
            return _error_response("BatchTooLarge", str(exc), 400)
        except ModelUnavailable as exc:
            return _error_response("ModelUnavailable", str(exc), 503)

    @app.get("/v1/latency")
    def latency(format: str = Query(default="json")):
        if format == "csv":
            return PlainTextResponse(engine.latency.to_csv(), media_type="text/csv")
        return engine.latency.report()

    @app.get("/v1/ui/queue")
    def ui_queue(
        min_score: float = Query(default=0.0),
        page: int = Query(default=0, ge=0),
        page_size: int = Query(default=50, ge=1, le=500),
    ):
        return engine.queue.page(min_score, page, page_size, labels)

    @app.post("/v1/labels")
    async def submit_label(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error_response("BadRequest", "body must be JSON", 400)
        try:
            rev_id = int(body["rev_id"])
            cls = body["class"]
            reviewer = str(body.get("reviewer", "anonymous"))
        except (KeyError, TypeError, ValueError):
            return _error_response("BadRequest", "need rev_id and class", 400)
        if engine.queue.get(rev_id) is None:
            return _error_response("UnknownRevision", f"rev {rev_id} not in review queue", 404)
        expected = body.get("expected_revision")
        try:
            result = labels.append(rev_id, cls, reviewer, expected)
        except ValueError as exc:
            return _error_response("BadRequest", str(exc), 400)
        if result["conflict"]:
            return JSONResponse(
                {
                    "error": "ConflictingConcurrentLabel",
                    "current_revision": result["current_revision"],
                    "current_class": result["current_class"],
                },
                status_code=409,
            )
        return result["event"]

    @app.get("/v1/labels/export")
    def export_labels():
        return PlainTextResponse(labels.export_jsonl(), media_type="application/x-ndjson")

    @app.get("/v1/curves")
    def curves():
        if curves_path is None or not Path(curves_path).exists():
            return _error_response("MissingCurves", "no curve CSV exported", 404)
        return PlainTextResponse(Path(curves_path).read_text(encoding="utf-8"), media_type="text/csv")

    return app


def build_service(
    model_path,
    source_spec: str,
    cache_dir,
    threshold: float = 0.5,
    max_batch: int = DEFAULT_MAX_BATCH,
    curves_path=None,
    precache: bool = False,
    byte_budget: int = DEFAULT_BYTE_BUDGET,
) -> tuple[FastAPI, ScoringEngine, Optional[PrecacheWorker]]:
    """Wire a full service from file-level configuration."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    try:
        model = TrainedModel.load(model_path)
    except FileNotFoundError as exc:
        raise ModelUnavailable(f"model file {model_path} missing") from exc
    source = Source(ingestion.parse_source_spec(source_spec))
    cache = ScoreCache(cache_dir / "scores.sqlite", byte_budget=byte_budget)
    engine = ScoringEngine(model, source, cache, threshold=threshold, max_batch=max_batch)
    worker = None
    if precache:
        worker = PrecacheWorker(engine, checkpoint_path=cache_dir / "precache.checkpoint")
    label_store = LabelStore(cache_dir / "labels.jsonl")
    app = create_app(engine, label_store=label_store, curves_path=curves_path, worker=worker)
    return app, engine, worker
