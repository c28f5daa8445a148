"""Revision, entity content and user-info acquisition.

Two source modes behind one interface: ``live`` talks to a MediaWiki-style
Action API with rate limiting and retry, ``fixture`` replays a directory of
canned revisions (one ``<rev_id>.json`` per revision plus ``manifest.txt``
ordering). Everything downstream is source-agnostic, so the corpus builder
and the scoring service run byte-deterministically on fixtures.
"""

from __future__ import annotations

import ipaddress
import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator, Optional

import requests

from .entity import EditMeta, UserInfo
from .errors import CheckpointInvalid, ConfigError, Malformed, NotFound, Transport

DEFAULT_USER_AGENT = "vandal-sentinel/0.1 (patrol tooling)"


def ts_parse(text: str) -> int:
    """MediaWiki ISO-8601 UTC timestamp -> epoch seconds."""
    return int(datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc).timestamp())


def ts_format(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def is_ip_name(name: str) -> bool:
    try:
        ipaddress.ip_address(name)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------------------
# Envelope (de)serialization
# ---------------------------------------------------------------------------

def user_to_dict(user: UserInfo) -> dict:
    return {
        "name": user.name,
        "is_anonymous": user.is_anonymous,
        "is_bot": user.is_bot,
        "groups": sorted(user.groups),
        "registration": user.registration,
    }


def user_from_dict(data: dict) -> UserInfo:
    return UserInfo(
        name=data["name"],
        is_anonymous=bool(data.get("is_anonymous", False)),
        is_bot=bool(data.get("is_bot", False)),
        groups=frozenset(data.get("groups", ())),
        registration=data.get("registration"),
    )


def meta_to_dict(meta: EditMeta) -> dict:
    return {
        "rev_id": meta.rev_id,
        "parent_rev_id": meta.parent_rev_id,
        "user": user_to_dict(meta.user),
        "comment": meta.comment,
        "timestamp": meta.timestamp,
    }


def meta_from_dict(data: dict) -> EditMeta:
    return EditMeta(
        rev_id=data["rev_id"],
        parent_rev_id=data["parent_rev_id"],
        user=user_from_dict(data["user"]),
        comment=data.get("comment", ""),
        timestamp=data["timestamp"],
    )


@dataclass(frozen=True)
class RevisionEnvelope:
    """One revision plus its parent content, ready for diffing."""

    meta: EditMeta
    child_json: str
    parent_json: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.parent_json is None) != (self.meta.parent_rev_id == 0):
            raise ValueError("parent_json must be absent exactly when parent_rev_id is 0")

    def to_json_dict(self) -> dict:
        return {"meta": meta_to_dict(self.meta), "parent_json": self.parent_json, "child_json": self.child_json}

    @classmethod
    def from_json_dict(cls, data: dict) -> "RevisionEnvelope":
        return cls(
            meta=meta_from_dict(data["meta"]),
            parent_json=data.get("parent_json"),
            child_json=data["child_json"],
        )


@dataclass(frozen=True)
class RetryConfig:
    max_attempts: int = 3
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class SourceConfig:
    """Where revisions come from. Exactly one of api_url / fixture_dir."""

    mode: str  # "live" | "fixture"
    api_url: str = ""
    fixture_dir: str = ""
    rate_limit: float = 4.0  # requests per second, live mode
    user_agent: str = ""
    retry: RetryConfig = field(default_factory=RetryConfig)

    def __post_init__(self) -> None:
        if self.mode not in ("live", "fixture"):
            raise ConfigError(f"unknown source mode {self.mode!r}")
        if self.mode == "live" and not self.api_url:
            raise ConfigError("live source needs an api_url")
        if self.mode == "fixture" and not self.fixture_dir:
            raise ConfigError("fixture source needs a directory")
        if self.rate_limit <= 0:
            raise ConfigError("rate_limit must be positive")


def parse_source_spec(spec: str, retry: Optional[RetryConfig] = None, rate_limit: float = 4.0) -> SourceConfig:
    """Parse the CLI form ``live:<url>`` / ``fixture:<dir>``."""
    kind, sep, rest = spec.partition(":")
    if not sep or not rest:
        raise ConfigError(f"source spec must look like live:<url> or fixture:<dir>, got {spec!r}")
    if kind == "live":
        return SourceConfig(mode="live", api_url=rest, rate_limit=rate_limit, retry=retry or RetryConfig())
    if kind == "fixture":
        return SourceConfig(mode="fixture", fixture_dir=rest, retry=retry or RetryConfig())
    raise ConfigError(f"unknown source kind {kind!r}")


class _RateLimiter:
    """Sliding one-second window limiter; serializes outbound requests."""

    def __init__(self, per_second: float):
        self.per_second = per_second
        self._sent: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            while True:
                now = time.monotonic()
                while self._sent and now - self._sent[0] >= 1.0:
                    self._sent.popleft()
                if len(self._sent) < self.per_second:
                    self._sent.append(now)
                    return
                time.sleep(self._sent[0] + 1.0 - now)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def checkpoint_token(timestamp: int, rev_id: int) -> str:
    return f"{timestamp}:{rev_id}"


def parse_checkpoint(token: str) -> tuple[int, int]:
    try:
        ts_text, rev_text = token.strip().split(":")
        return int(ts_text), int(rev_text)
    except (ValueError, AttributeError) as exc:
        raise CheckpointInvalid(f"bad checkpoint token {token!r}") from exc


class Source:
    """One configured revision source with a per-run user-info cache."""

    def __init__(self, config: SourceConfig):
        self.config = config
        self._user_cache: dict[str, UserInfo] = {}
        if config.mode == "live":
            self._limiter = _RateLimiter(config.rate_limit)
            self._session = requests.Session()
            agent = os.environ.get("VS_USER_AGENT") or config.user_agent or DEFAULT_USER_AGENT
            self._session.headers["User-Agent"] = agent

    # -- shared plumbing ----------------------------------------------------

    def _api_get(self, params: dict) -> dict:
        retry = self.config.retry
        last_error: Optional[Exception] = None
        for attempt in range(retry.max_attempts):
            if attempt:
                time.sleep(retry.backoff_base * (2 ** (attempt - 1)))
            self._limiter.acquire()
            try:
                response = self._session.get(self.config.api_url, params=params, timeout=30)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = Transport(f"HTTP {response.status_code} from {self.config.api_url}")
                continue
            if response.status_code != 200:
                raise Transport(f"HTTP {response.status_code} from {self.config.api_url}")
            try:
                return response.json()
            except ValueError as exc:
                raise Malformed(f"non-JSON API response: {exc}") from exc
        raise Transport(f"retries exhausted against {self.config.api_url}: {last_error}")

    def _fixture_path(self, rev_id: int) -> Path:
        return Path(self.config.fixture_dir) / f"{rev_id}.json"

    def _read_fixture(self, rev_id: int) -> RevisionEnvelope:
        path = self._fixture_path(rev_id)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise NotFound(f"revision {rev_id} not in fixture directory")
        except json.JSONDecodeError as exc:
            raise Malformed(f"fixture {path.name}: {exc}") from exc
        try:
            return RevisionEnvelope.from_json_dict(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise Malformed(f"fixture {path.name}: {exc}") from exc

    # -- revisions ----------------------------------------------------------

    def fetch_revision(self, rev_id: int) -> RevisionEnvelope:
        if rev_id <= 0:
            raise NotFound(f"rev_id must be positive, got {rev_id}")
        if self.config.mode == "fixture":
            return self._read_fixture(rev_id)
        return self._fetch_live_revisions([rev_id])[rev_id]

    def fetch_revisions(self, rev_ids: list[int]) -> dict[int, RevisionEnvelope]:
        """Batch fetch; raises on the first missing revision."""
        if self.config.mode == "fixture":
            return {rid: self._read_fixture(rid) for rid in rev_ids}
        return self._fetch_live_revisions(rev_ids)

    def fetch_revisions_partial(
        self, rev_ids: list[int]
    ) -> tuple[dict[int, RevisionEnvelope], dict[int, Exception]]:
        """Batch fetch where individual failures do not fail the batch."""
        found: dict[int, RevisionEnvelope] = {}
        errors: dict[int, Exception] = {}
        if self.config.mode == "fixture":
            for rid in rev_ids:
                try:
                    found[rid] = self._read_fixture(rid)
                except (NotFound, Malformed) as exc:
                    errors[rid] = exc
            return found, errors
        for chunk_start in range(0, len(rev_ids), 50):
            chunk = rev_ids[chunk_start : chunk_start + 50]
            try:
                fetched = self._fetch_live_revisions(chunk)
            except NotFound:
                # Re-fetch one by one so only the missing ids fail.
                fetched = {}
                for rid in chunk:
                    try:
                        fetched[rid] = self.fetch_revision(rid)
                    except (NotFound, Malformed) as exc:
                        errors[rid] = exc
            found.update(fetched)
        return found, errors

    def _fetch_live_revisions(self, rev_ids: list[int]) -> dict[int, RevisionEnvelope]:
        data = self._api_get(
            {
                "action": "query",
                "format": "json",
                "formatversion": "2",
                "prop": "revisions",
                "revids": "|".join(str(r) for r in rev_ids),
                "rvprop": "ids|timestamp|comment|user|content",
                "rvslots": "main",
            }
        )
        revisions: dict[int, dict] = {}
        try:
            for page in data.get("query", {}).get("pages", []):
                for rev in page.get("revisions", []):
                    revisions[rev["revid"]] = rev
        except (TypeError, KeyError) as exc:
            raise Malformed(f"unexpected revisions response shape: {exc}") from exc

        parents_needed = sorted(
            {rev["parentid"] for rev in revisions.values() if rev.get("parentid")}
        )
        parent_content: dict[int, str] = {}
        if parents_needed:
            parent_data = self._api_get(
                {
                    "action": "query",
                    "format": "json",
                    "formatversion": "2",
                    "prop": "revisions",
                    "revids": "|".join(str(r) for r in parents_needed),
                    "rvprop": "ids|content",
                    "rvslots": "main",
                }
            )
            for page in parent_data.get("query", {}).get("pages", []):
                for rev in page.get("revisions", []):
                    parent_content[rev["revid"]] = rev["slots"]["main"]["content"]

        out: dict[int, RevisionEnvelope] = {}
        for rid in rev_ids:
            rev = revisions.get(rid)
            if rev is None:
                raise NotFound(f"revision {rid} not found upstream")
            try:
                user = self.fetch_user(rev["user"])
                meta = EditMeta(
                    rev_id=rev["revid"],
                    parent_rev_id=rev.get("parentid", 0),
                    user=user,
                    comment=rev.get("comment", ""),
                    timestamp=ts_parse(rev["timestamp"]),
                )
                child = rev["slots"]["main"]["content"]
            except (KeyError, TypeError, ValueError) as exc:
                raise Malformed(f"revision {rid}: unexpected shape: {exc}") from exc
            parent_id = rev.get("parentid", 0)
            parent = parent_content.get(parent_id) if parent_id else None
            if parent_id and parent is None:
                raise NotFound(f"parent revision {parent_id} of {rid} not found upstream")
            out[rid] = RevisionEnvelope(meta=meta, child_json=child, parent_json=parent)
        return out

    # -- users ----------------------------------------------------------------

    def fetch_user(self, name: str) -> UserInfo:
        if is_ip_name(name):
            return UserInfo(name=name, is_anonymous=True)
        cached = self._user_cache.get(name)
        if cached is not None:
            return cached
        if self.config.mode == "fixture":
            user = self._fixture_user(name)
        else:
            user = self._live_user(name)
        self._user_cache[name] = user
        return user

    def _fixture_user(self, name: str) -> UserInfo:
        path = Path(self.config.fixture_dir) / "users.json"
        try:
            table = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise NotFound(f"no users.json in fixture directory, cannot resolve {name!r}")
        except json.JSONDecodeError as exc:
            raise Malformed(f"users.json: {exc}") from exc
        if name not in table:
            raise NotFound(f"user {name!r} not in fixture users.json")
        record = dict(table[name])
        record.setdefault("name", name)
        return user_from_dict(record)

    def _live_user(self, name: str) -> UserInfo:
        data = self._api_get(
            {
                "action": "query",
                "format": "json",
                "formatversion": "2",
                "list": "users",
                "ususers": name,
                "usprop": "groups|registration",
            }
        )
        try:
            users = data["query"]["users"]
            record = users[0]
        except (KeyError, IndexError, TypeError) as exc:
            raise Malformed(f"unexpected users response shape: {exc}") from exc
        if record.get("missing") or record.get("invalid"):
            raise NotFound(f"user {name!r} not found upstream")
        groups = frozenset(g for g in record.get("groups", ()) if g != "*")
        registration = ts_parse(record["registration"]) if record.get("registration") else None
        return UserInfo(
            name=name,
            is_anonymous=False,
            is_bot="bot" in groups,
            groups=groups,
            registration=registration,
        )

    # -- streaming ------------------------------------------------------------

    def stream_recent(
        self, from_ts: int = 0, checkpoint: Optional[str] = None
    ) -> Iterator[RevisionEnvelope]:
        """Yield envelopes in non-decreasing timestamp order, starting after
        the checkpoint when one is given."""
        resume_after: Optional[tuple[int, int]] = None
        if checkpoint is not None:
            resume_after = parse_checkpoint(checkpoint)
        if self.config.mode == "fixture":
            yield from self._stream_fixture(from_ts, resume_after)
        else:
            yield from self._stream_live(from_ts, resume_after)

    def _manifest_order(self) -> list[int]:
        path = Path(self.config.fixture_dir) / "manifest.txt"
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except FileNotFoundError:
            return []
        order = []
        for line in lines:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                order.append(int(line))
            except ValueError as exc:
                raise Malformed(f"manifest.txt: bad rev id line {line!r}") from exc
        return order

    def _stream_fixture(self, from_ts, resume_after) -> Iterator[RevisionEnvelope]:
        previous_ts = None
        for rev_id in self._manifest_order():
            envelope = self._read_fixture(rev_id)
            ts = envelope.meta.timestamp
            if previous_ts is not None and ts < previous_ts:
                raise Malformed(f"manifest.txt not in timestamp order at rev {rev_id}")
            previous_ts = ts
            if ts < from_ts:
                continue
            if resume_after is not None and (ts, rev_id) <= resume_after:
                continue
            yield envelope

    def _stream_live(self, from_ts, resume_after) -> Iterator[RevisionEnvelope]:
        params = {
            "action": "query",
            "format": "json",
            "formatversion": "2",
            "list": "recentchanges",
            "rcprop": "ids|timestamp",
            "rcdir": "newer",
            "rclimit": "50",
        }
        if from_ts:
            params["rcstart"] = ts_format(from_ts)
        while True:
            data = self._api_get(params)
            changes = data.get("query", {}).get("recentchanges", [])
            for change in changes:
                rev_id = change.get("revid")
                if not rev_id:
                    continue
                ts = ts_parse(change["timestamp"])
                if resume_after is not None and (ts, rev_id) <= resume_after:
                    continue
                try:
                    yield self.fetch_revision(rev_id)
                except NotFound:
                    continue
            cont = data.get("continue", {}).get("rccontinue")
            if not cont:
                return
            params["rccontinue"] = cont


# Thin functional wrappers for one-shot use.

def fetch_revision(src: SourceConfig, rev_id: int) -> RevisionEnvelope:
    return Source(src).fetch_revision(rev_id)


def stream_recent(src: SourceConfig, from_ts: int = 0, checkpoint: Optional[str] = None):
    return Source(src).stream_recent(from_ts, checkpoint)


def fetch_user(src: SourceConfig, name: str) -> UserInfo:
    return Source(src).fetch_user(name)


# ---------------------------------------------------------------------------
# Fixture writing (used by the synthetic generator and tests)
# ---------------------------------------------------------------------------

def write_fixture(directory, envelopes, users: Optional[dict[str, UserInfo]] = None) -> None:
    """Write envelopes + manifest (+ users.json) as a fixture directory.

    Envelopes are manifest-ordered as given; callers must pass them in
    non-decreasing timestamp order.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for envelope in envelopes:
        rid = envelope.meta.rev_id
        path = directory / f"{rid}.json"
        path.write_text(
            json.dumps(envelope.to_json_dict(), sort_keys=True, ensure_ascii=False), encoding="utf-8"
        )
        names.append(str(rid))
    (directory / "manifest.txt").write_text("\n".join(names) + ("\n" if names else ""), encoding="utf-8")
    if users is not None:
        table = {name: user_to_dict(user) for name, user in sorted(users.items())}
        (directory / "users.json").write_text(json.dumps(table, indent=1, sort_keys=True), encoding="utf-8")
