"""Staged illustration pipeline: four-phase workflow, branching version tree,
deterministic generation backends, event-sourced persistence, and tutoring."""

from .model import (
    GenerationParams,
    GenerationRequest,
    ImageBlob,
    MaskRegion,
    NodeStatus,
    Project,
    StageKind,
    VersionNode,
    next_stage,
    validate_child,
)

__all__ = [
    "GenerationParams",
    "GenerationRequest",
    "ImageBlob",
    "MaskRegion",
    "NodeStatus",
    "Project",
    "StageKind",
    "VersionNode",
    "next_stage",
    "validate_child",
]

__version__ = "0.1.0"
