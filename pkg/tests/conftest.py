import random

import pytest

from sakugaflow.engine import PipelineEngine
from sakugaflow.store import Store
from sakugaflow.tutor import OfflineTutor


def make_engine(tmp_path, **kwargs) -> PipelineEngine:
    store = Store(tmp_path / "data", snapshot_interval=kwargs.pop("snapshot_interval", 256))
    kwargs.setdefault("tutor", OfflineTutor())
    kwargs.setdefault("rng", random.Random(0))
    return PipelineEngine(store, **kwargs)


@pytest.fixture
def engine(tmp_path):
    eng = make_engine(tmp_path)
    yield eng
    eng.shutdown()


def completed(engine, node_id):
    job = engine.generate(node_id, wait=True, timeout=30.0)
    assert job.state == "done", job.error
    return engine.get_node(node_id)


def build_four_stage(engine, theme="fantasy character", size=64, seed=7):
    """Rough -> Line -> Color -> Finish, all completed; returns the four nodes."""
    project = engine.create_project(theme, width=size, height=size, seed=seed)
    rough = completed(engine, project.root_node)
    line = engine.advance_stage(rough.id, "clean contour lines")
    line = completed(engine, line.id)
    color = engine.advance_stage(line.id, "flat colors")
    color = completed(engine, color.id)
    finish = engine.advance_stage(color.id, "final lighting")
    finish = completed(engine, finish.id)
    return project, [rough, line, color, finish]
