"""Temporal information of annotated video frames.

Objects are axis-aligned boxes (or bare areas) in pixel units. Every quantity
is built from area ratios ``R(X) = area(X) / area(frame)``:

* between frames, each object tracked by ``object_id`` contributes
  ``R(A_prev & A_next) / R(A_prev)``;
* within a frame, each unordered pair of overlapping objects contributes
  ``R(A&B) * ln(R(A&B) / (R(A) R(B)))`` and each disjoint pair contributes
  ``ln(R(A|B) * ln(R(A|B) / (R(A) R(B))))`` with ``R(A|B) = R(A) + R(B)``.

Logs are natural. Pairs are unordered and never include an object with itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable

SCHEMA_VERSION = 1


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    width: float
    height: float

    @property
    def area(self) -> float:
        return self.width * self.height

    def intersect(self, other: "Box") -> float:
        w = min(self.x + self.width, other.x + other.width) - max(self.x, other.x)
        h = min(self.y + self.height, other.y + other.height) - max(self.y, other.y)
        if w <= 0 or h <= 0:
            return 0.0
        return w * h

    def shifted(self, dx: float, dy: float) -> "Box":
        return Box(self.x + dx, self.y + dy, self.width, self.height)

    def scaled(self, k: float) -> "Box":
        return Box(self.x * k, self.y * k, self.width * k, self.height * k)


@dataclass(frozen=True)
class FrameObject:
    object_id: str
    label: str = ""
    box: Box | None = None
    area_px: float | None = None  # used only when no box is given

    @property
    def area(self) -> float:
        if self.box is not None:
            return self.box.area
        if self.area_px is None:
            raise AnnotationError(f"object {self.object_id!r} has neither box nor area")
        return self.area_px


@dataclass(frozen=True)
class FrameScene:
    frame_width: float
    frame_height: float
    objects: tuple[FrameObject, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.frame_width <= 0 or self.frame_height <= 0:
            raise AnnotationError("zero frame area")
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise AnnotationError(f"duplicate object ids in frame: {ids}")
        for o in self.objects:
            if o.area <= 0:
                raise AnnotationError(f"object {o.object_id!r} has non-positive area")
            b = o.box
            if b is not None and (
                b.x < 0 or b.y < 0
                or b.x + b.width > self.frame_width
                or b.y + b.height > self.frame_height
            ):
                raise AnnotationError(f"object {o.object_id!r} box {b} leaves the frame")
            if b is None and o.area > self.area:
                raise AnnotationError(f"object {o.object_id!r} is larger than the frame")

    @property
    def area(self) -> float:
        return self.frame_width * self.frame_height

    def by_id(self) -> dict[str, FrameObject]:
        return {o.object_id: o for o in self.objects}


@dataclass(frozen=True)
class TemporalInfoReport:
    t_between: float
    t_within_overlap: float
    t_within_disjoint: float
    t_within: float
    t_total: float


def area_ratio(obj: FrameObject, scene: FrameScene) -> float:
    return obj.area / scene.area


def between_frame_object(prev_ratio: float, overlap_ratio: float) -> float:
    """Share of an object's previous-frame area still covered in the next frame."""
    if prev_ratio <= 0:
        raise ValueError("zero prev_ratio")
    if overlap_ratio < 0:
        raise ValueError("negative overlap_ratio")
    # relative slack absorbs float noise from ratio arithmetic
    if overlap_ratio > prev_ratio * (1 + 1e-12):
        raise ValueError(f"overlap_exceeds_prev: {overlap_ratio} > {prev_ratio}")
    return min(overlap_ratio / prev_ratio, 1.0)


def _require_box(obj: FrameObject) -> Box:
    if obj.box is None:
        raise AnnotationError(f"object {obj.object_id!r} needs a box for overlap geometry")
    return obj.box


def between_frames(prev: FrameScene, nxt: FrameScene) -> float:
    if (prev.frame_width, prev.frame_height) != (nxt.frame_width, nxt.frame_height):
        raise AnnotationError(
            f"dimension mismatch: {prev.frame_width}x{prev.frame_height} "
            f"vs {nxt.frame_width}x{nxt.frame_height}"
        )
    after = nxt.by_id()
    total = 0.0
    for a in prev.objects:
        b = after.get(a.object_id)
        if b is None:
            continue
        overlap = _require_box(a).intersect(_require_box(b)) / prev.area
        total += between_frame_object(area_ratio(a, prev), overlap)
    return total


def overlap_pair_term(ra: float, rb: float, rab: float) -> float:
    if rab <= 0:
        return 0.0  # 0 * log 0 := 0
    return rab * math.log(rab / (ra * rb))


def disjoint_pair_term(ra: float, rb: float) -> float:
    union = ra + rb
    if not (ra > 0 and rb > 0 and union <= 1.0 + 1e-12):
        raise ValueError(f"ratios R(A)={ra}, R(B)={rb} cannot be disjoint in one frame")
    inner = union * math.log(union / (ra * rb))
    if not inner > 0:
        raise ValueError(f"non_positive_inner: R(A)={ra}, R(B)={rb} gives {inner}")
    return math.log(inner)


def _pairs(scene: FrameScene) -> Iterable[tuple[float, float, float]]:
    for a, b in combinations(scene.objects, 2):
        rab = _require_box(a).intersect(_require_box(b)) / scene.area
        yield area_ratio(a, scene), area_ratio(b, scene), rab


def within_frame_overlapping(scene: FrameScene) -> float:
    return sum(overlap_pair_term(ra, rb, rab) for ra, rb, rab in _pairs(scene) if rab > 0)


def within_frame_disjoint(scene: FrameScene) -> float:
    return sum(disjoint_pair_term(ra, rb) for ra, rb, rab in _pairs(scene) if rab == 0)


def within_frame(scene: FrameScene) -> float:
    return within_frame_overlapping(scene) + within_frame_disjoint(scene)


def total_temporal_info(prev: FrameScene, nxt: FrameScene) -> TemporalInfoReport:
    """Between-frame term for ``prev -> nxt`` plus the within-frame term of ``nxt``."""
    t_bf = between_frames(prev, nxt)
    overlap = within_frame_overlapping(nxt)
    disjoint = within_frame_disjoint(nxt)
    t_wf = overlap + disjoint
    return TemporalInfoReport(
        t_between=t_bf,
        t_within_overlap=overlap,
        t_within_disjoint=disjoint,
        t_within=t_wf,
        t_total=t_bf + t_wf,
    )


# -- annotation files -------------------------------------------------------
#
# {
#   "version": 1,
#   "frames": [
#     {"width": 320, "height": 240,
#      "objects": [{"object_id": "p1", "label": "person", "box": [x, y, w, h]},
#                  {"object_id": "s", "label": "sky", "area": 1200.0}]},
#     ...
#   ]
# }


def scene_from_dict(d: dict) -> FrameScene:
    objs = []
    for o in d.get("objects", []):
        box = o.get("box")
        objs.append(
            FrameObject(
                object_id=str(o["object_id"]),
                label=str(o.get("label", "")),
                box=Box(*map(float, box)) if box is not None else None,
                area_px=float(o["area"]) if "area" in o else None,
            )
        )
    return FrameScene(float(d["width"]), float(d["height"]), tuple(objs))


def scene_to_dict(scene: FrameScene) -> dict:
    objs = []
    for o in scene.objects:
        entry: dict = {"object_id": o.object_id, "label": o.label}
        if o.box is not None:
            entry["box"] = [o.box.x, o.box.y, o.box.width, o.box.height]
        else:
            entry["area"] = o.area_px
        objs.append(entry)
    return {"width": scene.frame_width, "height": scene.frame_height, "objects": objs}


def load_annotations(path: str | Path) -> list[FrameScene]:
    doc = json.loads(Path(path).read_text())
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise AnnotationError(f"unsupported annotation version {version}")
    return [scene_from_dict(f) for f in doc["frames"]]


def save_annotations(scenes: list[FrameScene], path: str | Path) -> None:
    doc = {"version": SCHEMA_VERSION, "frames": [scene_to_dict(s) for s in scenes]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
