"""Pipeline engine: project lifecycle, stage progression, branching, and jobs.

All writes for a project funnel through one lock and are recorded as events
before being applied, so the in-memory state is always exactly what `replay`
of the log produces. Generation runs on a small worker pool; completions
re-enter through the same single-writer path.
"""

from __future__ import annotations

import dataclasses
import queue
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .backends import Backend, MockBackend
from .errors import IllegalStateError, InvalidInputError, UnknownIdError
from .model import (
    GenerationParams,
    GenerationRequest,
    ImageBlob,
    MaskRegion,
    NodeStatus,
    Project,
    StageKind,
    VersionNode,
    lineage,
    next_stage,
    params_diff,
    prompt_token_diff,
    validate_child,
)
from .store import EventRecord, ProjectState, Store, apply_event

STAGE_TEMPLATES = {
    StageKind.ROUGH: "rough sketch of {subject}",
    StageKind.LINE: "clean line art of {subject}",
    StageKind.COLOR: "flat colored illustration of {subject}",
    StageKind.FINISH: "polished final illustration of {subject}",
}

_STAGE_PREFIXES = {
    stage: template[: template.index("{")] for stage, template in STAGE_TEMPLATES.items()
}


def stage_prompt(stage: StageKind, subject: str) -> str:
    return STAGE_TEMPLATES[stage].format(subject=subject)


def extract_subject(node: VersionNode) -> str:
    """Recover the subject text from a node's templated prompt."""
    prefix = _STAGE_PREFIXES[node.stage]
    if node.prompt.startswith(prefix):
        return node.prompt[len(prefix) :]
    return node.prompt


def merge_subject(parent_subject: str, delta: str) -> str:
    delta = delta.strip()
    if not delta:
        return parent_subject
    return f"{parent_subject}, {delta}"


_JOB_TRANSITIONS = {
    "queued": {"running"},
    "running": {"done", "failed"},
    "done": set(),
    "failed": set(),
}


@dataclass
class Job:
    id: str
    node_id: str
    request: GenerationRequest
    state: str = "queued"
    error: Optional[str] = None
    submitted_at: float = 0.0
    finished_at: Optional[float] = None
    _done: threading.Event = field(default_factory=threading.Event, repr=False)

    def wait(self, timeout: Optional[float] = None) -> bool:
        return self._done.wait(timeout)

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "node_id": self.node_id,
            "state": self.state,
            "error": self.error,
            "submitted_at": self.submitted_at,
            "finished_at": self.finished_at,
        }


@dataclass(frozen=True)
class ComparisonReport:
    node_a: str
    node_b: str
    digest_a: str
    digest_b: str
    prompt_a: str
    prompt_b: str
    params_changed: dict
    prompt_diff: dict
    lca: str
    pixel_diff_count: int

    def to_doc(self) -> dict:
        return {
            "node_a": self.node_a,
            "node_b": self.node_b,
            "digest_a": self.digest_a,
            "digest_b": self.digest_b,
            "prompt_a": self.prompt_a,
            "prompt_b": self.prompt_b,
            "params_changed": self.params_changed,
            "prompt_diff": self.prompt_diff,
            "lca": self.lca,
            "pixel_diff_count": self.pixel_diff_count,
        }


class _ResultCache:
    """Bounded LRU from canonical-request digest to completed image digest."""

    def __init__(self, capacity: int = 256):
        self.capacity = capacity
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()

    def get(self, key: str) -> Optional[str]:
        with self._lock:
            if key not in self._entries:
                return None
            value = self._entries.pop(key)
            self._entries[key] = value
            return value

    def put(self, key: str, value: str) -> None:
        with self._lock:
            self._entries.pop(key, None)
            self._entries[key] = value
            while len(self._entries) > self.capacity:
                self._entries.pop(next(iter(self._entries)))


class PipelineEngine:
    """Drives the staged workflow against a store and a generation backend."""

    def __init__(
        self,
        store: Store,
        backend: Optional[Backend] = None,
        tutor=None,
        clock=time.time,
        rng: Optional[random.Random] = None,
        parallel_jobs: int = 2,
        cache_enabled: bool = True,
        cache_size: int = 256,
    ):
        self.store = store
        self.backend = backend or MockBackend(store.find_blob)
        self.tutor = tutor
        self.clock = clock
        self.rng = rng or random.Random()
        self._executor = ThreadPoolExecutor(max_workers=parallel_jobs)
        self._cache = _ResultCache(cache_size) if cache_enabled else None
        self._states: dict[str, ProjectState] = {}
        self._node_index: dict[str, str] = {}
        self._jobs: dict[str, Job] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._registry_lock = threading.Lock()
        self._subscribers: dict[str, list[queue.Queue]] = {}
        self._counters = {"p": 0, "n": 0, "j": 0, "t": 0}
        self._load_existing()

    # -- bookkeeping ---------------------------------------------------------

    def _load_existing(self) -> None:
        from .store import replay

        for pid in self.store.list_projects():
            state = replay(self.store.project(pid))
            self._states[pid] = state
            self._bump_counter(pid)
            for nid in state.nodes:
                self._node_index[nid] = pid
                self._bump_counter(nid)
            for exchange in state.exchanges:
                self._bump_counter(exchange["id"])

    def _bump_counter(self, ident: str) -> None:
        prefix, digits = ident[:1], ident[1:]
        if prefix in self._counters and digits.isdigit():
            self._counters[prefix] = max(self._counters[prefix], int(digits))

    def _fresh_id(self, prefix: str) -> str:
        with self._registry_lock:
            self._counters[prefix] += 1
            return f"{prefix}{self._counters[prefix]}"

    def _lock_for(self, project_id: str) -> threading.RLock:
        with self._registry_lock:
            return self._locks.setdefault(project_id, threading.RLock())

    def _state(self, project_id: str) -> ProjectState:
        try:
            return self._states[project_id]
        except KeyError:
            raise UnknownIdError(f"unknown project {project_id!r}")

    def _project_of(self, node_id: str) -> str:
        try:
            return self._node_index[node_id]
        except KeyError:
            raise UnknownIdError(f"unknown node {node_id!r}")

    def _emit(self, project_id: str, kind: str, payload: dict) -> EventRecord:
        """Append to the durable log, fold into live state, notify streams."""
        pstore = self.store.project(project_id)
        state = self._state(project_id)
        record = pstore.append(kind, payload, at=self.clock())
        apply_event(state, record)
        if (record.seq + 1) % pstore.snapshot_interval == 0:
            pstore.write_snapshot(record.seq, state.to_doc())
        with self._registry_lock:
            subscribers = list(self._subscribers.get(project_id, ()))
        for q in subscribers:
            q.put(record)
        return record

    # -- queries -------------------------------------------------------------

    def get_project(self, project_id: str) -> Project:
        # copies keep callers from mutating live state behind the writer lock
        return dataclasses.replace(self._state(project_id).project)

    def get_node(self, node_id: str) -> VersionNode:
        return dataclasses.replace(self._state(self._project_of(node_id)).nodes[node_id])

    def get_job(self, job_id: str) -> Job:
        try:
            return self._jobs[job_id]
        except KeyError:
            raise UnknownIdError(f"unknown job {job_id!r}")

    def list_projects(self) -> list[str]:
        return sorted(self._states)

    def lineage(self, node_id: str) -> list[str]:
        state = self._state(self._project_of(node_id))
        return lineage(state.nodes, node_id)

    def events_since(self, project_id: str, after_seq: int = -1) -> list[EventRecord]:
        self._state(project_id)
        return self.store.project(project_id).events(from_seq=after_seq + 1)

    def subscribe(self, project_id: str) -> queue.Queue:
        self._state(project_id)
        q: queue.Queue = queue.Queue()
        with self._registry_lock:
            self._subscribers.setdefault(project_id, []).append(q)
        return q

    def unsubscribe(self, project_id: str, q: queue.Queue) -> None:
        with self._registry_lock:
            subs = self._subscribers.get(project_id, [])
            if q in subs:
                subs.remove(q)

    def export_tree(self, project_id: str) -> dict:
        """Nodes, edges, stages, digests, and the active pointer, stably ordered."""
        with self._lock_for(project_id):
            state = self._state(project_id)
            nodes = list(state.nodes.values())
            return {
                "project": state.project.to_doc(),
                "nodes": [n.to_doc() for n in nodes],
                "edges": [[n.parent, n.id] for n in nodes if n.parent is not None],
                "active": state.project.active_node,
            }

    def get_blob(self, digest: str) -> bytes:
        return self.store.find_blob(digest)

    # -- operations ----------------------------------------------------------

    def create_project(
        self,
        theme: str,
        width: int = 512,
        height: int = 512,
        seed: Optional[int] = None,
    ) -> Project:
        theme = theme.strip()
        if not theme:
            raise InvalidInputError("empty theme")
        if width <= 0 or height <= 0:
            raise InvalidInputError("canvas dimensions must be positive")
        project_id = self._fresh_id("p")
        node_id = self._fresh_id("n")
        now = self.clock()
        project = Project(
            id=project_id, theme=theme, width=width, height=height,
            created_at=now, root_node=node_id, active_node=node_id,
        )
        root = VersionNode(
            id=node_id, project_id=project_id, parent=None, stage=StageKind.ROUGH,
            prompt=stage_prompt(StageKind.ROUGH, theme),
            seed=seed if seed is not None else self.rng.getrandbits(64),
            params=GenerationParams(), created_at=now,
        )
        self.store.project(project_id, create=True)
        self._states[project_id] = ProjectState()
        self._node_index[node_id] = project_id
        with self._lock_for(project_id):
            self._emit(project_id, "project_created", project.to_doc())
            self._emit(project_id, "node_created", root.to_doc())
        return self.get_project(project_id)

    def _create_child(
        self,
        parent: VersionNode,
        stage: StageKind,
        prompt: str,
        seed: int,
        params: GenerationParams,
        mask_digest: Optional[str] = None,
    ) -> VersionNode:
        violation = validate_child(parent, stage, has_mask=mask_digest is not None)
        if violation:
            raise IllegalStateError(violation)
        node = VersionNode(
            id=self._fresh_id("n"), project_id=parent.project_id, parent=parent.id,
            stage=stage, prompt=prompt, seed=seed, params=params,
            mask=mask_digest, created_at=self.clock(),
        )
        self._node_index[node.id] = parent.project_id
        self._emit(parent.project_id, "node_created", node.to_doc())
        return self.get_node(node.id)

    def _require_completed(self, node: VersionNode) -> None:
        if node.status is not NodeStatus.COMPLETED:
            raise IllegalStateError(
                f"node {node.id} is {node.status.value}, not completed",
                code="not_completed",
            )

    def advance_stage(
        self,
        node_id: str,
        prompt_delta: str = "",
        seed: Optional[int] = None,
        params: Optional[GenerationParams] = None,
    ) -> VersionNode:
        with self._lock_for(self._project_of(node_id)):
            node = self.get_node(node_id)
            self._require_completed(node)
            nxt = next_stage(node.stage)
            if nxt is None:
                raise IllegalStateError("no next stage", code="no_next_stage")
            subject = merge_subject(extract_subject(node), prompt_delta)
            return self._create_child(
                node, nxt, stage_prompt(nxt, subject),
                seed=seed if seed is not None else node.seed,
                params=params or node.params,
            )

    def regenerate(
        self,
        node_id: str,
        new_prompt: Optional[str] = None,
        new_seed: Optional[int] = None,
        new_params: Optional[GenerationParams] = None,
    ) -> VersionNode:
        with self._lock_for(self._project_of(node_id)):
            node = self.get_node(node_id)
            self._require_completed(node)
            return self._create_child(
                node, node.stage,
                prompt=new_prompt if new_prompt is not None else node.prompt,
                seed=new_seed if new_seed is not None else self.rng.getrandbits(64),
                params=new_params or node.params,
            )

    def inpaint(self, node_id: str, mask: MaskRegion, region_prompt: str = "") -> VersionNode:
        project_id = self._project_of(node_id)
        with self._lock_for(project_id):
            node = self.get_node(node_id)
            self._require_completed(node)
            project = self.get_project(project_id)
            if (mask.width, mask.height) != (project.width, project.height):
                raise InvalidInputError(
                    f"mask is {mask.width}x{mask.height}, canvas is "
                    f"{project.width}x{project.height}"
                )
            if mask.count_set() == 0:
                raise InvalidInputError("empty selection")
            mask_digest = self.store.project(project_id).put_blob(mask.to_png())
            region_prompt = region_prompt.strip()
            prompt = f"{node.prompt}, {region_prompt}" if region_prompt else node.prompt
            return self._create_child(
                node, node.stage, prompt, seed=node.seed, params=node.params,
                mask_digest=mask_digest,
            )

    def attach_control_image(self, node_id: str, image_bytes: bytes) -> VersionNode:
        project_id = self._project_of(node_id)
        with self._lock_for(project_id):
            node = self.get_node(node_id)
            if node.status is not NodeStatus.DRAFT:
                raise IllegalStateError(
                    f"control image only attaches to draft nodes, not {node.status.value}"
                )
            blob = ImageBlob.from_encoded(image_bytes)
            project = self.get_project(project_id)
            params = node.params
            if (blob.width, blob.height) != (project.width, project.height):
                blob = _rescale(blob, project.width, project.height)
                if "control-rescaled" not in params.style_tags:
                    params = GenerationParams(
                        strength=params.strength,
                        control_strength=params.control_strength,
                        palette_hint=params.palette_hint,
                        style_tags=params.style_tags + ("control-rescaled",),
                    )
            digest = self.store.project(project_id).put_blob(blob.data)
            self._emit(
                project_id,
                "control_attached",
                {"node_id": node_id, "digest": digest, "params": params.to_doc()},
            )
            return self.get_node(node_id)

    def set_label(self, node_id: str, label: str) -> VersionNode:
        project_id = self._project_of(node_id)
        with self._lock_for(project_id):
            self._emit(project_id, "node_labeled", {"node_id": node_id, "label": label})
            return self.get_node(node_id)

    def activate(self, project_id: str, node_id: str) -> Project:
        with self._lock_for(project_id):
            self._state(project_id)
            owner = self._project_of(node_id)
            if owner != project_id:
                raise InvalidInputError(
                    f"node {node_id} belongs to project {owner}, not {project_id}"
                )
            self._emit(project_id, "activated", {"node_id": node_id})
            return self.get_project(project_id)

    # -- generation ----------------------------------------------------------

    def _build_request(self, project: Project, node: VersionNode, state: ProjectState) -> GenerationRequest:
        parent = state.nodes.get(node.parent) if node.parent else None
        base = None
        if parent is not None and parent.image is not None:
            if node.stage is not StageKind.ROUGH or node.control_image is not None:
                base = parent.image
            elif node.mask is not None:
                base = parent.image
        return GenerationRequest(
            stage=node.stage, prompt=node.prompt, seed=node.seed, params=node.params,
            width=project.width, height=project.height,
            base_image=base, mask=node.mask, control_image=node.control_image,
        )

    def generate(self, node_id: str, wait: bool = False, timeout: Optional[float] = None) -> Job:
        project_id = self._project_of(node_id)
        with self._lock_for(project_id):
            node = self.get_node(node_id)
            if node.status is NodeStatus.PENDING:
                raise IllegalStateError(
                    f"node {node_id} already has a pending job", code="already_pending"
                )
            if node.status is NodeStatus.COMPLETED:
                raise IllegalStateError(
                    f"node {node_id} is already completed", code="already_completed"
                )
            state = self._state(project_id)
            request = self._build_request(self.get_project(project_id), node, state)
            job = Job(
                id=self._fresh_id("j"), node_id=node_id, request=request,
                submitted_at=self.clock(),
            )
            self._jobs[job.id] = job
            self._emit(
                project_id,
                "job_queued",
                {"job_id": job.id, "node_id": node_id, "request_digest": request.digest()},
            )
        self._executor.submit(self._run_job, project_id, job)
        if wait:
            if not job.wait(timeout):
                raise IllegalStateError(f"job {job.id} did not finish in time")
        return job

    def _set_job_state(self, job: Job, state: str) -> None:
        assert state in _JOB_TRANSITIONS[job.state], (
            f"illegal job transition {job.state} -> {state}"
        )
        job.state = state

    def _run_job(self, project_id: str, job: Job) -> None:
        with self._lock_for(project_id):
            self._set_job_state(job, "running")
            self._emit(
                project_id, "job_started", {"job_id": job.id, "node_id": job.node_id}
            )
        pstore = self.store.project(project_id)
        try:
            key = job.request.digest()
            image_digest = None
            if self._cache is not None:
                cached = self._cache.get(key)
                if cached is not None and pstore.has_blob(cached):
                    image_digest = cached
            if image_digest is None:
                handle = self.backend.submit(job.request)
                blob = handle.result()
                image_digest = pstore.put_blob(blob.data)
                if self._cache is not None:
                    self._cache.put(key, image_digest)
        except Exception as exc:
            with self._lock_for(project_id):
                job.error = str(exc) or exc.__class__.__name__
                self._set_job_state(job, "failed")
                job.finished_at = self.clock()
                self._emit(
                    project_id,
                    "node_failed",
                    {"node_id": job.node_id, "job_id": job.id, "error": job.error},
                )
            job._done.set()
            return
        with self._lock_for(project_id):
            self._emit(
                project_id,
                "node_completed",
                {"node_id": job.node_id, "job_id": job.id, "image": image_digest},
            )
            self._set_job_state(job, "done")
            job.finished_at = self.clock()
        job._done.set()

    # -- comparison ----------------------------------------------------------

    def compare(self, node_a: str, node_b: str) -> ComparisonReport:
        a, b = self.get_node(node_a), self.get_node(node_b)
        if a.project_id != b.project_id:
            raise InvalidInputError("nodes belong to different projects")
        self._require_completed(a)
        self._require_completed(b)
        state = self._state(a.project_id)
        la, lb = lineage(state.nodes, node_a), lineage(state.nodes, node_b)
        # LCA = last entry of the common prefix of the two root-to-node paths
        lca = la[0]
        for x, y in zip(la, lb):
            if x != y:
                break
            lca = x
        pixels_a = ImageBlob.from_encoded(self.get_blob(a.image)).pixels()
        pixels_b = ImageBlob.from_encoded(self.get_blob(b.image)).pixels()
        diff = sum(
            1
            for i in range(0, min(len(pixels_a), len(pixels_b)), 4)
            if pixels_a[i : i + 4] != pixels_b[i : i + 4]
        )
        diff += abs(len(pixels_a) - len(pixels_b)) // 4
        return ComparisonReport(
            node_a=node_a, node_b=node_b, digest_a=a.image, digest_b=b.image,
            prompt_a=a.prompt, prompt_b=b.prompt,
            params_changed=params_diff(a.params, b.params),
            prompt_diff=prompt_token_diff(a.prompt, b.prompt),
            lca=lca, pixel_diff_count=diff,
        )

    # -- tutoring ------------------------------------------------------------

    def ask_tutor(self, node_id: str, question: str) -> dict:
        """Answer a question in the context of a node; persists the exchange."""
        from .tutor import assemble_context

        if self.tutor is None:
            raise IllegalStateError("no tutor configured")
        project_id = self._project_of(node_id)
        with self._lock_for(project_id):
            node = self.get_node(node_id)
            project = self.get_project(project_id)
            ctx = assemble_context(
                project, node, question, self.events_since(project_id)
            )
        answer, source = self.tutor.answer(ctx)
        exchange = {
            "id": self._fresh_id("t"),
            "node_id": node_id,
            "context": ctx.to_doc(),
            "answer": answer,
            "source": source,
            "created_at": self.clock(),
        }
        with self._lock_for(project_id):
            self._emit(project_id, "tutor_asked", exchange)
        return exchange

    def shutdown(self) -> None:
        self._executor.shutdown(wait=True)


def _rescale(blob: ImageBlob, width: int, height: int) -> ImageBlob:
    import io

    from PIL import Image

    img = Image.open(io.BytesIO(blob.data)).convert("RGBA")
    img = img.resize((width, height), Image.NEAREST)
    return ImageBlob.from_pixels(img.tobytes(), width, height)
