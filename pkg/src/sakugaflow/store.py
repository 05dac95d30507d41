"""Durable persistence: content-addressed blobs plus an append-only event log.

Layout, one directory per project:

    <data_dir>/<project_id>/
        events.log      magic "SKGF1", then length-prefixed canonical JSON records
        blobs/ab/abcd…  blob bytes, sharded by the first two hex digits
        snapshots/<seq>.json   folded state, written every snapshot_interval events

The event log is the single source of truth: `replay` folds it back into the
exact live state. Records are immutable and sequence numbers are dense.
"""

from __future__ import annotations

import json
import os
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from .errors import InvalidInputError, LogCorruptError, UnknownIdError
from .model import (
    GenerationParams,
    NodeStatus,
    Project,
    VersionNode,
    canonical_json,
    sha256_hex,
)

LOG_MAGIC = b"SKGF1"
LEN_PREFIX = struct.Struct(">I")
DEFAULT_SNAPSHOT_INTERVAL = 256

EVENT_KINDS = frozenset(
    {
        "project_created",
        "node_created",
        "control_attached",
        "job_queued",
        "job_started",
        "node_completed",
        "node_failed",
        "activated",
        "node_labeled",
        "tutor_asked",
    }
)


@dataclass(frozen=True)
class EventRecord:
    seq: int
    kind: str
    payload: dict
    at: float

    def to_doc(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "at": self.at, "payload": self.payload}

    @classmethod
    def from_doc(cls, doc: dict) -> "EventRecord":
        return cls(seq=doc["seq"], kind=doc["kind"], payload=doc["payload"], at=doc["at"])


@dataclass
class ProjectState:
    """Everything replay can reconstruct: the project, its nodes, tutor exchanges."""

    project: Optional[Project] = None
    nodes: dict = field(default_factory=dict)
    exchanges: list = field(default_factory=list)

    def to_doc(self) -> dict:
        return {
            "project": self.project.to_doc() if self.project else None,
            "nodes": [n.to_doc() for n in self.nodes.values()],
            "exchanges": list(self.exchanges),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ProjectState":
        state = cls()
        if doc.get("project"):
            state.project = Project.from_doc(doc["project"])
        for node_doc in doc.get("nodes", []):
            node = VersionNode.from_doc(node_doc)
            state.nodes[node.id] = node
        state.exchanges = list(doc.get("exchanges", []))
        return state


def apply_event(state: ProjectState, record: EventRecord) -> None:
    """Fold one record into the state. Shared by the live engine and replay."""
    kind, payload = record.kind, record.payload
    if kind == "project_created":
        state.project = Project.from_doc(payload)
    elif kind == "node_created":
        node = VersionNode.from_doc(payload)
        state.nodes[node.id] = node
    elif kind == "control_attached":
        node = state.nodes[payload["node_id"]]
        node.control_image = payload["digest"]
        node.params = GenerationParams.from_doc(payload["params"])
    elif kind == "job_queued":
        state.nodes[payload["node_id"]].status = NodeStatus.PENDING
    elif kind == "job_started":
        pass
    elif kind == "node_completed":
        node = state.nodes[payload["node_id"]]
        node.image = payload["image"]
        node.status = NodeStatus.COMPLETED
    elif kind == "node_failed":
        state.nodes[payload["node_id"]].status = NodeStatus.FAILED
    elif kind == "activated":
        state.project.active_node = payload["node_id"]
    elif kind == "node_labeled":
        state.nodes[payload["node_id"]].label = payload["label"]
    elif kind == "tutor_asked":
        state.exchanges.append(payload)
    else:
        raise InvalidInputError(f"unknown event kind {kind!r}")


class ProjectStore:
    """Single-writer event log and blob store for one project."""

    def __init__(self, directory: Path, snapshot_interval: int = DEFAULT_SNAPSHOT_INTERVAL):
        self.dir = Path(directory)
        self.snapshot_interval = snapshot_interval
        self._lock = threading.Lock()
        self._events: list[EventRecord] = []
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "blobs").mkdir(exist_ok=True)
        (self.dir / "snapshots").mkdir(exist_ok=True)
        self._log_path = self.dir / "events.log"
        if self._log_path.exists():
            self._events = list(self._read_log())
        else:
            with open(self._log_path, "wb") as fh:
                fh.write(LOG_MAGIC)
                fh.flush()
                os.fsync(fh.fileno())
        self._log_fh = open(self._log_path, "ab")

    # -- event log -----------------------------------------------------------

    def append(self, kind: str, payload: dict, at: float) -> EventRecord:
        """Assign the next seq and durably write the record before returning."""
        if kind not in EVENT_KINDS:
            raise InvalidInputError(f"unknown event kind {kind!r}")
        with self._lock:
            record = EventRecord(seq=len(self._events), kind=kind, payload=payload, at=at)
            data = canonical_json(record.to_doc())
            self._log_fh.write(LEN_PREFIX.pack(len(data)))
            self._log_fh.write(data)
            self._log_fh.flush()
            os.fsync(self._log_fh.fileno())
            self._events.append(record)
            return record

    def events(self, from_seq: int = 0) -> list[EventRecord]:
        with self._lock:
            return self._events[from_seq:]

    def next_seq(self) -> int:
        with self._lock:
            return len(self._events)

    def _read_log(self) -> Iterator[EventRecord]:
        with open(self._log_path, "rb") as fh:
            magic = fh.read(len(LOG_MAGIC))
            if magic != LOG_MAGIC:
                raise LogCorruptError("bad log magic", last_valid_seq=-1)
            seq = -1
            while True:
                prefix = fh.read(LEN_PREFIX.size)
                if not prefix:
                    return
                if len(prefix) < LEN_PREFIX.size:
                    raise LogCorruptError(
                        f"truncated length prefix after seq {seq}", last_valid_seq=seq
                    )
                (length,) = LEN_PREFIX.unpack(prefix)
                data = fh.read(length)
                if len(data) < length:
                    raise LogCorruptError(
                        f"truncated record after seq {seq}", last_valid_seq=seq
                    )
                try:
                    record = EventRecord.from_doc(json.loads(data))
                except (ValueError, KeyError):
                    raise LogCorruptError(
                        f"undecodable record after seq {seq}", last_valid_seq=seq
                    )
                if record.seq != seq + 1:
                    raise LogCorruptError(
                        f"non-dense seq {record.seq} after {seq}", last_valid_seq=seq
                    )
                seq = record.seq
                yield record

    # -- blobs ---------------------------------------------------------------

    def _blob_path(self, digest: str) -> Path:
        return self.dir / "blobs" / digest[:2] / digest

    def put_blob(self, data: bytes) -> str:
        """Idempotent content-addressed write; returns the hex digest."""
        if not data:
            raise InvalidInputError("empty blob")
        digest = sha256_hex(data)
        path = self._blob_path(digest)
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            tmp.replace(path)
        return digest

    def get_blob(self, digest: str) -> bytes:
        path = self._blob_path(digest)
        if not path.exists():
            raise UnknownIdError(f"unknown blob {digest}")
        return path.read_bytes()

    def has_blob(self, digest: str) -> bool:
        return self._blob_path(digest).exists()

    # -- snapshots -----------------------------------------------------------

    def write_snapshot(self, seq: int, state_doc: dict) -> None:
        path = self.dir / "snapshots" / f"{seq:08d}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(canonical_json({"seq": seq, "state": state_doc}))
        tmp.replace(path)

    def latest_snapshot(self) -> Optional[tuple[int, dict]]:
        snaps = sorted((self.dir / "snapshots").glob("*.json"))
        if not snaps:
            return None
        doc = json.loads(snaps[-1].read_bytes())
        return doc["seq"], doc["state"]

    def close(self) -> None:
        self._log_fh.close()


def replay(pstore: ProjectStore, use_snapshot: bool = True) -> ProjectState:
    """Rebuild project state by folding the log (optionally from a snapshot)."""
    state = ProjectState()
    start = 0
    if use_snapshot:
        snap = pstore.latest_snapshot()
        if snap is not None:
            seq, doc = snap
            state = ProjectState.from_doc(doc)
            start = seq + 1
    for record in pstore.events(from_seq=start):
        apply_event(state, record)
    return state


class Store:
    """Root data directory holding one ProjectStore per project."""

    def __init__(self, data_dir, snapshot_interval: int = DEFAULT_SNAPSHOT_INTERVAL):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.snapshot_interval = snapshot_interval
        self._projects: dict[str, ProjectStore] = {}
        self._lock = threading.Lock()

    def project(self, project_id: str, create: bool = False) -> ProjectStore:
        with self._lock:
            if project_id in self._projects:
                return self._projects[project_id]
            path = self.data_dir / project_id
            if not path.exists() and not create:
                raise UnknownIdError(f"unknown project {project_id!r}")
            pstore = ProjectStore(path, snapshot_interval=self.snapshot_interval)
            self._projects[project_id] = pstore
            return pstore

    def list_projects(self) -> list[str]:
        return sorted(
            p.name for p in self.data_dir.iterdir() if (p / "events.log").exists()
        )

    def find_blob(self, digest: str) -> bytes:
        """Look up a blob across all projects."""
        for pid in list(self._projects) + self.list_projects():
            try:
                pstore = self.project(pid)
            except UnknownIdError:
                continue
            if pstore.has_blob(digest):
                return pstore.get_blob(digest)
        raise UnknownIdError(f"unknown blob {digest}")
