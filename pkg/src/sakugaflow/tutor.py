"""Stage-aware tutoring: context assembly, an offline rule-based tutor, and a
remote chat-completion client with offline fallback.

Tutor answers are advisory only; they never mutate project state.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Optional

import httpx

from .errors import BackendError, InvalidInputError
from .model import Project, StageKind, VersionNode
from .store import EventRecord

DEFAULT_ACTION_WINDOW = 5
RENDER_ACTION_LIMIT = 10

TUTOR_PERSONA = (
    "You are a patient drawing tutor. You explain art fundamentals (anatomy, "
    "composition, line quality, color theory, lighting) in plain language and "
    "always relate advice to the stage the student is working in."
)

# One entry per stage; each answer names its topic and carries the stage's
# normative tip verbatim so tests can key on it.
STAGE_TIPS = {
    StageKind.ROUGH: (
        "Pose and composition: at the rough stage, focus on the big shapes. "
        "Try adjusting pose or composition before any detail work; check the "
        "silhouette reads clearly from a distance."
    ),
    StageKind.LINE: (
        "Line weight: ask yourself, why add line thickness here? Thicker lines "
        "suggest shadow, weight, and nearness; keep interior detail lines lighter "
        "than the outer contour."
    ),
    StageKind.COLOR: (
        "Color theory: look at warm vs. cool contrast. Placing a warm focal area "
        "against cooler surroundings draws the eye; keep your palette to a few "
        "related hues."
    ),
    StageKind.FINISH: (
        "Lighting consistency: where is the light source? Check that every "
        "highlight and cast shadow agrees with it before calling the piece done."
    ),
}


@dataclass(frozen=True)
class TutorContext:
    project_theme: str
    stage: StageKind
    node_prompt: str
    recent_actions: tuple
    question: str

    def to_doc(self) -> dict:
        return {
            "project_theme": self.project_theme,
            "stage": self.stage.label,
            "node_prompt": self.node_prompt,
            "recent_actions": list(self.recent_actions),
            "question": self.question,
        }


def summarize_action(record: EventRecord) -> Optional[str]:
    """One-line summary of an event, or None for events that are not user-visible
    actions (the root node's creation is part of project creation)."""
    kind, payload = record.kind, record.payload
    if kind == "project_created":
        return "project_created"
    if kind == "node_created":
        if payload.get("parent") is None:
            return None
        return f"node_created:{payload['stage']}"
    if kind in ("job_queued", "job_started", "node_completed", "node_failed"):
        return f"{kind}:{payload['node_id']}"
    if kind == "control_attached":
        return f"control_attached:{payload['node_id']}"
    if kind == "activated":
        return f"activated:{payload['node_id']}"
    if kind == "node_labeled":
        return f"labeled:{payload['node_id']}"
    if kind == "tutor_asked":
        return "tutor_asked"
    return None


def assemble_context(
    project: Project,
    node: VersionNode,
    question: str,
    events: list[EventRecord],
    window: int = DEFAULT_ACTION_WINDOW,
) -> TutorContext:
    """Deterministic context snapshot: theme, stage, prompt, last `window` actions."""
    question = question.strip()
    if not question:
        raise InvalidInputError("empty question")
    actions = [s for s in (summarize_action(r) for r in events) if s is not None]
    return TutorContext(
        project_theme=project.theme,
        stage=node.stage,
        node_prompt=node.prompt,
        recent_actions=tuple(actions[-window:]),
        question=question,
    )


def offline_answer(ctx: TutorContext) -> str:
    """Total, deterministic rule-table answer for the context's stage."""
    tip = STAGE_TIPS[ctx.stage]
    return f"[{ctx.stage.label}] {tip}"


def render_message(ctx: TutorContext, action_limit: int = RENDER_ACTION_LIMIT) -> str:
    """Fill the versioned prompt template; oldest actions are dropped first."""
    template = (
        resources.files("sakugaflow").joinpath("assets/tutor_prompt_v1.txt").read_text()
    )
    actions = ctx.recent_actions[-action_limit:]
    lines = "\n".join(f"  - {a}" for a in actions) or "  (none)"
    return template.format(
        theme=ctx.project_theme,
        stage=ctx.stage.label,
        node_prompt=ctx.node_prompt,
        actions=lines,
        question=ctx.question,
    )


class OfflineTutor:
    """Rule-table tutor; needs no network."""

    def answer(self, ctx: TutorContext) -> tuple[str, str]:
        return offline_answer(ctx), "offline"


class RemoteTutor:
    """Chat-completion client; falls back to the offline tutor when enabled."""

    def __init__(
        self,
        endpoint: str,
        fallback: bool = True,
        client: Optional[httpx.Client] = None,
        action_limit: int = RENDER_ACTION_LIMIT,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.fallback = fallback
        self.action_limit = action_limit
        self._client = client or httpx.Client(timeout=30.0)

    def answer(self, ctx: TutorContext) -> tuple[str, str]:
        try:
            resp = self._client.post(
                f"{self.endpoint}/v1/chat",
                json={
                    "system": TUTOR_PERSONA,
                    "messages": [
                        {"role": "user", "content": render_message(ctx, self.action_limit)}
                    ],
                },
            )
            resp.raise_for_status()
            return resp.json()["content"], "remote_llm"
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            if self.fallback:
                return offline_answer(ctx), "offline"
            raise BackendError(f"tutor endpoint failed: {exc}")
