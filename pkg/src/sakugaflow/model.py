"""Core value types: the four-stage taxonomy, version nodes, masks, and image blobs.

Everything here is a plain value. Nodes become immutable once Completed; all
mutation flows through the engine's event-sourced write path.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Mapping, Optional, Sequence

from PIL import Image

from .errors import InvalidInputError, UnknownIdError

MAX_PALETTE_COLORS = 8
MASK_THRESHOLD = 128  # grayscale value at or above which a mask pixel is "regenerate"


class StageKind(IntEnum):
    """The four drawing phases, in fixed pedagogical order."""

    ROUGH = 0
    LINE = 1
    COLOR = 2
    FINISH = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "StageKind":
        try:
            return cls[label.upper()]
        except KeyError:
            raise InvalidInputError(f"unknown stage {label!r}")


def next_stage(stage: StageKind) -> Optional[StageKind]:
    """Successor in the fixed order, or None for the terminal stage."""
    if stage is StageKind.FINISH:
        return None
    return StageKind(stage + 1)


class NodeStatus(str, Enum):
    DRAFT = "draft"
    PENDING = "pending"
    COMPLETED = "completed"
    FAILED = "failed"


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def canonical_json(doc) -> bytes:
    """Compact UTF-8 JSON with the dict's own (fixed) key order preserved."""
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass(frozen=True)
class GenerationParams:
    """Knobs a backend honors; strengths are clamped to [0, 1] on construction."""

    strength: float = 0.75
    control_strength: float = 1.0
    palette_hint: tuple = ()
    style_tags: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "strength", min(1.0, max(0.0, float(self.strength))))
        object.__setattr__(
            self, "control_strength", min(1.0, max(0.0, float(self.control_strength)))
        )
        palette = tuple(tuple(int(c) for c in color) for color in self.palette_hint)
        if len(palette) > MAX_PALETTE_COLORS:
            raise InvalidInputError(
                f"palette_hint holds at most {MAX_PALETTE_COLORS} colors"
            )
        object.__setattr__(self, "palette_hint", palette)
        object.__setattr__(self, "style_tags", tuple(str(t) for t in self.style_tags))

    def to_doc(self) -> dict:
        return {
            "strength": self.strength,
            "control_strength": self.control_strength,
            "palette_hint": [list(c) for c in self.palette_hint],
            "style_tags": list(self.style_tags),
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "GenerationParams":
        return cls(
            strength=doc["strength"],
            control_strength=doc["control_strength"],
            palette_hint=tuple(tuple(c) for c in doc.get("palette_hint", [])),
            style_tags=tuple(doc.get("style_tags", [])),
        )


@dataclass
class Project:
    id: str
    theme: str
    width: int
    height: int
    created_at: float
    root_node: str
    active_node: str

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "theme": self.theme,
            "width": self.width,
            "height": self.height,
            "created_at": self.created_at,
            "root_node": self.root_node,
            "active_node": self.active_node,
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "Project":
        return cls(
            id=doc["id"],
            theme=doc["theme"],
            width=doc["width"],
            height=doc["height"],
            created_at=doc["created_at"],
            root_node=doc["root_node"],
            active_node=doc["active_node"],
        )


@dataclass
class VersionNode:
    """One state in a project's branching history.

    Parent links form a tree: at most one parent per node, exactly one root.
    Once status is Completed the generation fields never change again.
    """

    id: str
    project_id: str
    parent: Optional[str]
    stage: StageKind
    prompt: str
    seed: int
    params: GenerationParams
    created_at: float
    image: Optional[str] = None
    control_image: Optional[str] = None
    mask: Optional[str] = None
    status: NodeStatus = NodeStatus.DRAFT
    label: Optional[str] = None

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "project_id": self.project_id,
            "parent": self.parent,
            "stage": self.stage.label,
            "prompt": self.prompt,
            "seed": self.seed,
            "params": self.params.to_doc(),
            "image": self.image,
            "control_image": self.control_image,
            "mask": self.mask,
            "status": self.status.value,
            "created_at": self.created_at,
            "label": self.label,
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "VersionNode":
        return cls(
            id=doc["id"],
            project_id=doc["project_id"],
            parent=doc["parent"],
            stage=StageKind.from_label(doc["stage"]),
            prompt=doc["prompt"],
            seed=doc["seed"],
            params=GenerationParams.from_doc(doc["params"]),
            image=doc.get("image"),
            control_image=doc.get("control_image"),
            mask=doc.get("mask"),
            status=NodeStatus(doc["status"]),
            created_at=doc["created_at"],
            label=doc.get("label"),
        )


def validate_child(
    parent: VersionNode, child_stage: StageKind, has_mask: bool
) -> Optional[str]:
    """Check the stage-monotonicity rule for a prospective child.

    Returns None when the child is legal, otherwise a short description of
    the violated rule. Same-stage children (revise/branch/inpaint) are always
    allowed; advancing one stage is allowed only without a mask.
    """
    if child_stage == parent.stage:
        return None
    if child_stage == next_stage(parent.stage):
        if has_mask:
            return "inpaint must stay at the parent's stage"
        return None
    if child_stage > parent.stage:
        return "stage skip"
    return "backward stage child"


def lineage(nodes: Mapping[str, VersionNode], node_id: str) -> list[str]:
    """Root-to-node path of ids, following parent links."""
    if node_id not in nodes:
        raise UnknownIdError(f"unknown node {node_id!r}")
    path = []
    current: Optional[str] = node_id
    while current is not None:
        path.append(current)
        current = nodes[current].parent
    path.reverse()
    return path


@dataclass(frozen=True)
class ImageBlob:
    """Content-addressed encoded raster: PNG, 8-bit RGBA."""

    digest: str
    data: bytes
    width: int
    height: int

    @classmethod
    def from_pixels(cls, rgba: bytes, width: int, height: int) -> "ImageBlob":
        if len(rgba) != width * height * 4:
            raise InvalidInputError("pixel buffer does not match dimensions")
        img = Image.frombytes("RGBA", (width, height), rgba)
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        data = buf.getvalue()
        return cls(digest=sha256_hex(data), data=data, width=width, height=height)

    @classmethod
    def from_encoded(cls, data: bytes) -> "ImageBlob":
        try:
            img = Image.open(io.BytesIO(data))
            img.load()
        except Exception as exc:
            raise InvalidInputError(f"undecodable image: {exc}")
        return cls(digest=sha256_hex(data), data=data, width=img.width, height=img.height)

    def pixels(self) -> bytes:
        img = Image.open(io.BytesIO(self.data)).convert("RGBA")
        return img.tobytes()


@dataclass(frozen=True)
class MaskRegion:
    """One bit per pixel, row-major, bit 1 = regenerate this pixel.

    Bits are packed MSB-first. The serialized wire form is an 8-bit grayscale
    PNG where values >= MASK_THRESHOLD decode to bit 1.
    """

    width: int
    height: int
    bits: bytes

    def __post_init__(self):
        expected = (self.width * self.height + 7) // 8
        if len(self.bits) != expected:
            raise InvalidInputError(
                f"mask bitmap has {len(self.bits)} bytes, expected {expected}"
            )

    @classmethod
    def from_bools(cls, width: int, height: int, flags: Sequence[bool]) -> "MaskRegion":
        if len(flags) != width * height:
            raise InvalidInputError("flag count does not match dimensions")
        packed = bytearray((width * height + 7) // 8)
        for i, on in enumerate(flags):
            if on:
                packed[i >> 3] |= 0x80 >> (i & 7)
        return cls(width, height, bytes(packed))

    @classmethod
    def full(cls, width: int, height: int) -> "MaskRegion":
        return cls.from_bools(width, height, [True] * (width * height))

    def get(self, x: int, y: int) -> bool:
        i = y * self.width + x
        return bool(self.bits[i >> 3] & (0x80 >> (i & 7)))

    def count_set(self) -> int:
        return sum(bin(b).count("1") for b in self.bits)

    def to_png(self) -> bytes:
        gray = bytes(
            255 if self.get(x, y) else 0
            for y in range(self.height)
            for x in range(self.width)
        )
        img = Image.frombytes("L", (self.width, self.height), gray)
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png(cls, data: bytes) -> "MaskRegion":
        try:
            img = Image.open(io.BytesIO(data)).convert("L")
        except Exception as exc:
            raise InvalidInputError(f"undecodable mask: {exc}")
        gray = img.tobytes()
        flags = [v >= MASK_THRESHOLD for v in gray]
        return cls.from_bools(img.width, img.height, flags)


@dataclass(frozen=True)
class GenerationRequest:
    """Everything a backend needs for one image; canonical bytes key the cache.

    Field values are digests, never raw pixels; backends resolve digests
    through the blob store.
    """

    stage: StageKind
    prompt: str
    seed: int
    params: GenerationParams
    width: int
    height: int
    negative_prompt: Optional[str] = None
    base_image: Optional[str] = None
    mask: Optional[str] = None
    control_image: Optional[str] = None

    def __post_init__(self):
        if self.mask is not None and self.base_image is None:
            raise InvalidInputError("mask requires a base image")
        if (
            self.stage is StageKind.ROUGH
            and self.base_image is not None
            and self.control_image is None
            and self.mask is None
        ):
            raise InvalidInputError(
                "rough stage takes no base image unless a control image is attached"
            )

    def canonical_bytes(self) -> bytes:
        """Injective serialization: fixed key order, compact, hex digests."""
        doc = {
            "stage": self.stage.label,
            "prompt": self.prompt,
            "negative_prompt": self.negative_prompt,
            "base_image": self.base_image,
            "mask": self.mask,
            "control_image": self.control_image,
            "seed": self.seed,
            "strength": self.params.strength,
            "control_strength": self.params.control_strength,
            "palette_hint": [list(c) for c in self.params.palette_hint],
            "style_tags": list(self.params.style_tags),
            "width": self.width,
            "height": self.height,
        }
        return canonical_json(doc)

    def digest(self) -> str:
        return sha256_hex(self.canonical_bytes())


def params_diff(a: GenerationParams, b: GenerationParams) -> dict:
    """Field name -> (a value, b value) for fields that differ."""
    da, db = a.to_doc(), b.to_doc()
    return {k: (da[k], db[k]) for k in da if da[k] != db[k]}


def prompt_token_diff(a: str, b: str) -> dict:
    """Tokens removed from `a` and added in `b`, comparing comma/space tokens."""

    def tokens(text: str) -> list[str]:
        return [t for t in text.replace(",", " ").split() if t]

    ta, tb = tokens(a), tokens(b)
    removed = [t for t in ta if t not in tb]
    added = [t for t in tb if t not in ta]
    return {"removed": removed, "added": added}
