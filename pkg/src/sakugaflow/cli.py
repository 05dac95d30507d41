"""Headless driver: run scripted sessions, export trees, serve the HTTP API.

Script format, one command per line (# starts a comment):

    project <theme> [canvas=WxH] [seed=N]
    generate
    advance <prompt delta>
    regenerate [seed=N] [prompt=<text>]
    inpaint <mask-file> <region prompt>
    control <image-file>
    activate <label-or-node-id>
    ask <question>
    label <text>

`generate` runs the current node's job and waits for it; `advance`,
`regenerate`, and `inpaint` create a child and make it current. Runs use a
fixed clock and RNG so identical scripts produce byte-identical artifacts.
"""

from __future__ import annotations

import json
import random
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from .backends import MockBackend, RemoteDiffusionBackend
from .engine import PipelineEngine
from .errors import SakugaError
from .model import MaskRegion, NodeStatus, canonical_json
from .store import Store
from .tutor import OfflineTutor, RemoteTutor


@dataclass(frozen=True)
class ScriptStep:
    line_no: int
    command: str
    args: str


class ScriptError(Exception):
    def __init__(self, message: str, line_no: int, column: int = 1):
        super().__init__(f"line {line_no}, column {column}: {message}")
        self.line_no = line_no
        self.column = column


COMMANDS = {
    "project", "generate", "advance", "regenerate", "inpaint",
    "control", "activate", "ask", "label",
}


def parse_script(text: str) -> list[ScriptStep]:
    steps = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        command, _, args = line.strip().partition(" ")
        if command not in COMMANDS:
            column = raw.index(command) + 1
            raise ScriptError(f"unknown command {command!r}", line_no, column)
        steps.append(ScriptStep(line_no, command, args.strip()))
    return steps


def _parse_kv(args: str, line_no: int) -> dict:
    out = {}
    for token in args.split():
        key, sep, value = token.partition("=")
        if not sep:
            raise ScriptError(f"expected key=value, got {token!r}", line_no)
        out[key] = value
    return out


class _StepClock:
    """Deterministic clock: one tick per call, so runs are reproducible."""

    def __init__(self):
        self.t = 0.0

    def __call__(self) -> float:
        self.t += 1.0
        return self.t


def build_engine(
    data_dir,
    backend: str = "mock",
    backend_endpoint: str | None = None,
    tutor_endpoint: str | None = None,
    tutor_fallback: bool = True,
    parallel_jobs: int = 2,
    deterministic: bool = False,
) -> PipelineEngine:
    store = Store(data_dir)
    if backend == "remote":
        if not backend_endpoint:
            raise click.UsageError("--backend remote requires --backend-endpoint")
        backend_obj = RemoteDiffusionBackend(backend_endpoint, store.find_blob)
    else:
        backend_obj = MockBackend(store.find_blob)
    tutor = (
        RemoteTutor(tutor_endpoint, fallback=tutor_fallback)
        if tutor_endpoint
        else OfflineTutor()
    )
    kwargs = {}
    if deterministic:
        kwargs = {"clock": _StepClock(), "rng": random.Random(0)}
    return PipelineEngine(
        store, backend_obj, tutor=tutor, parallel_jobs=parallel_jobs, **kwargs
    )


class ScriptRunner:
    def __init__(self, engine: PipelineEngine, script_dir: Path):
        self.engine = engine
        self.script_dir = script_dir
        self.project_id: str | None = None
        self.cursor: str | None = None

    def _require_project(self, step: ScriptStep) -> None:
        if self.project_id is None:
            raise ScriptError(f"{step.command!r} before 'project'", step.line_no)

    def run_step(self, step: ScriptStep) -> None:
        handler = getattr(self, f"_cmd_{step.command}")
        if step.command != "project":
            self._require_project(step)
        handler(step)

    def _cmd_project(self, step: ScriptStep) -> None:
        tokens = step.args.split()
        width = height = 512
        seed = None
        theme_tokens = []
        for token in tokens:
            if token.startswith("canvas="):
                w, _, h = token[len("canvas=") :].partition("x")
                width, height = int(w), int(h)
            elif token.startswith("seed="):
                seed = int(token[len("seed=") :])
            else:
                theme_tokens.append(token)
        project = self.engine.create_project(
            " ".join(theme_tokens), width=width, height=height, seed=seed
        )
        self.project_id = project.id
        self.cursor = project.root_node

    def _cmd_generate(self, step: ScriptStep) -> None:
        job = self.engine.generate(self.cursor, wait=True, timeout=120.0)
        if job.state != "done":
            raise ScriptError(f"generation failed: {job.error}", step.line_no)

    def _cmd_advance(self, step: ScriptStep) -> None:
        node = self.engine.advance_stage(self.cursor, step.args)
        self.cursor = node.id

    def _cmd_regenerate(self, step: ScriptStep) -> None:
        kv = _parse_kv(step.args, step.line_no)
        node = self.engine.regenerate(
            self.cursor,
            new_prompt=kv.get("prompt"),
            new_seed=int(kv["seed"]) if "seed" in kv else None,
        )
        self.cursor = node.id

    def _cmd_inpaint(self, step: ScriptStep) -> None:
        mask_file, _, prompt = step.args.partition(" ")
        if not mask_file:
            raise ScriptError("inpaint needs a mask file", step.line_no)
        mask = MaskRegion.from_png((self.script_dir / mask_file).read_bytes())
        node = self.engine.inpaint(self.cursor, mask, prompt.strip())
        self.cursor = node.id

    def _cmd_control(self, step: ScriptStep) -> None:
        if not step.args:
            raise ScriptError("control needs an image file", step.line_no)
        data = (self.script_dir / step.args).read_bytes()
        self.engine.attach_control_image(self.cursor, data)

    def _cmd_activate(self, step: ScriptStep) -> None:
        target = step.args
        state_nodes = self.engine.export_tree(self.project_id)["nodes"]
        by_label = [n["id"] for n in state_nodes if n["label"] == target]
        node_id = by_label[0] if by_label else target
        self.engine.activate(self.project_id, node_id)
        self.cursor = node_id

    def _cmd_ask(self, step: ScriptStep) -> None:
        if not step.args:
            raise ScriptError("ask needs a question", step.line_no)
        self.engine.ask_tutor(self.cursor, step.args)

    def _cmd_label(self, step: ScriptStep) -> None:
        self.engine.set_label(self.cursor, step.args)


def run_script(
    script_path,
    out_dir,
    backend: str = "mock",
    backend_endpoint: str | None = None,
) -> int:
    """Execute a script, write artifacts under out_dir, return an exit status."""
    script_path = Path(script_path)
    out_dir = Path(out_dir)
    try:
        steps = parse_script(script_path.read_text())
    except ScriptError as exc:
        click.echo(f"parse error: {exc}", err=True)
        return 2
    engine = build_engine(
        out_dir / "store",
        backend=backend,
        backend_endpoint=backend_endpoint,
        deterministic=True,
    )
    runner = ScriptRunner(engine, script_path.parent)
    try:
        for step in steps:
            try:
                runner.run_step(step)
            except SakugaError as exc:
                click.echo(f"step failed at line {step.line_no}: {exc}", err=True)
                return 1
    except ScriptError as exc:
        click.echo(f"step failed: {exc}", err=True)
        return 1
    finally:
        engine.shutdown()

    if runner.project_id is not None:
        tree = engine.export_tree(runner.project_id)
        images = out_dir / "images"
        images.mkdir(parents=True, exist_ok=True)
        for node in tree["nodes"]:
            if node["status"] == NodeStatus.COMPLETED.value:
                data = engine.get_blob(node["image"])
                (images / f"{node['id']}_{node['stage']}.png").write_bytes(data)
        (out_dir / "tree.json").write_bytes(canonical_json(tree))
    return 0


def export_tree_from_dir(project_dir) -> dict:
    """Load a project directory (or a data dir with one project) and export it."""
    path = Path(project_dir)
    if (path / "events.log").exists():
        data_dir, project_id = path.parent, path.name
    else:
        store = Store(path)
        projects = store.list_projects()
        if len(projects) != 1:
            raise click.UsageError(
                f"{path} holds {len(projects)} projects; point at one project directory"
            )
        data_dir, project_id = path, projects[0]
    engine = build_engine(data_dir)
    try:
        return engine.export_tree(project_id)
    finally:
        engine.shutdown()


@click.group()
def main():
    """Staged illustration pipeline driver."""


@main.command("run")
@click.argument("script", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--backend", type=click.Choice(["mock", "remote"]), default="mock")
@click.option("--backend-endpoint", default=None)
def run_cmd(script, out, backend, backend_endpoint):
    """Execute a session script and write images plus a tree summary."""
    sys.exit(run_script(script, out, backend=backend, backend_endpoint=backend_endpoint))


@main.command("export")
@click.argument("project_dir", type=click.Path(exists=True, file_okay=False))
def export_cmd(project_dir):
    """Print a project's tree document (nodes, edges, digests, active pointer)."""
    try:
        tree = export_tree_from_dir(project_dir)
    except SakugaError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    click.echo(json.dumps(tree, indent=2))


@main.command("serve")
@click.option("--data-dir", default="./data", type=click.Path(file_okay=False))
@click.option("--listen", default="127.0.0.1:8000")
@click.option("--backend", type=click.Choice(["mock", "remote"]), default="mock")
@click.option("--backend-endpoint", default=None)
@click.option("--tutor-endpoint", default=None)
@click.option("--tutor-fallback", type=click.Choice(["on", "off"]), default="on")
@click.option("--parallel-jobs", default=2, type=int)
@click.option("--frontend-dir", default=None, type=click.Path(file_okay=False))
def serve_cmd(
    data_dir, listen, backend, backend_endpoint, tutor_endpoint,
    tutor_fallback, parallel_jobs, frontend_dir,
):
    """Serve the HTTP API (and the web UI when --frontend-dir is given)."""
    import uvicorn

    from .api import create_app

    engine = build_engine(
        data_dir,
        backend=backend,
        backend_endpoint=backend_endpoint,
        tutor_endpoint=tutor_endpoint,
        tutor_fallback=tutor_fallback == "on",
        parallel_jobs=parallel_jobs,
    )
    app = create_app(engine, frontend_dir=frontend_dir)
    host, _, port = listen.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))


if __name__ == "__main__":
    main()
