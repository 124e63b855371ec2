"""Dataset loading, synthetic scene generation, answer vocabulary, and
training-time augmentation.

The on-disk dataset format is one JSON object per scene (see
docs/dataset_format.md):

    {"scene_id": str, "scene_type": str, "description": str,
     "points": [[x, y, z], ...],
     "objects": [{"center": [...], "size": [...], "class": "<name>",
                  "color": "<name>"   # optional
                 }, ...],
     "qa": [{"question": str, "answers": [str, ...],
             "object_ids": [int, ...]}, ...]}

A dataset file is a JSON array of such objects; a dataset directory holds
one ``<scene_id>.json`` per scene.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    CLASS_INDEX,
    CLASS_NAMES,
    AxisAlignedBox,
    LabeledBox,
    PointCloud,
    box_corners,
    box_from_corners,
    rotation_matrix,
)

# Which classes each synthetic scene type may contain.
SCENE_TYPE_CLASSES = {
    "kitchen": ("cabinet", "chair", "table", "counter", "refrigerator",
                "sink", "garbagebin"),
    "office": ("chair", "table", "door", "window", "bookshelf", "picture",
               "desk", "garbagebin"),
    "bathroom": ("door", "curtain", "shower_curtain", "toilet", "sink",
                 "bathtub", "cabinet"),
}

COLOR_RGB = {
    "red": (0.9, 0.1, 0.1),
    "blue": (0.1, 0.2, 0.9),
    "green": (0.1, 0.8, 0.2),
    "yellow": (0.9, 0.9, 0.1),
    "white": (0.95, 0.95, 0.95),
    "black": (0.05, 0.05, 0.05),
    "brown": (0.55, 0.27, 0.07),
    "gray": (0.5, 0.5, 0.5),
}
COLOR_NAMES = tuple(COLOR_RGB)

NUMBER_WORDS = ("zero", "one", "two", "three", "four", "five", "six",
                "seven", "eight", "nine", "ten")

# Object extents in meters, (low, high) per axis range.
_SIZE_RANGES = {
    "bed": ((1.4, 2.0), (1.8, 2.2), (0.5, 0.7)),
    "sofa": ((1.4, 2.2), (0.8, 1.1), (0.7, 0.9)),
    "bathtub": ((1.4, 1.8), (0.7, 0.9), (0.5, 0.7)),
    "refrigerator": ((0.6, 0.9), (0.6, 0.9), (1.6, 2.0)),
    "door": ((0.9, 1.1), (0.12, 0.2), (1.9, 2.1)),
    "bookshelf": ((0.8, 1.2), (0.3, 0.45), (1.6, 2.0)),
}
_DEFAULT_SIZE_RANGE = ((0.4, 0.9), (0.4, 0.9), (0.4, 1.0))

_POINTS_PER_OBJECT = 120
_BACKGROUND_FRACTION = 0.2   # of the total point count


@dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    cloud: PointCloud
    objects: tuple
    scene_type: str
    description: str
    object_colors: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        lo = self.cloud.points.min(axis=0) - 0.5
        hi = self.cloud.points.max(axis=0) + 0.5
        for i, obj in enumerate(self.objects):
            if np.any(obj.box.min_corner < lo) or np.any(obj.box.max_corner > hi):
                raise ValueError(
                    f"object {i} of scene {self.scene_id} lies outside the "
                    "cloud region (+0.5 m margin)")
        if self.object_colors is not None and \
                len(self.object_colors) != len(self.objects):
            raise ValueError("object_colors must parallel objects")


@dataclass(frozen=True)
class QARecord:
    scene_id: str
    question: str
    answers: tuple
    gt_boxes: tuple = ()
    related_classes: frozenset = frozenset()
    object_ids: tuple = ()
    question_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "answers", tuple(self.answers))
        object.__setattr__(self, "gt_boxes", tuple(self.gt_boxes))
        object.__setattr__(self, "related_classes", frozenset(self.related_classes))
        object.__setattr__(self, "object_ids", tuple(self.object_ids))
        if not self.answers:
            raise ValueError(f"QA record {self.question_id or self.question!r} "
                             "has an empty answers list")
        for gb in self.gt_boxes:
            if gb.class_id not in self.related_classes:
                raise ValueError(
                    f"gt box class {gb.class_name} not in related_classes")


@dataclass(frozen=True)
class AnswerVocabulary:
    answers: tuple
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        answers = tuple(self.answers)
        if len(set(answers)) != len(answers):
            raise ValueError("answer vocabulary contains duplicates")
        object.__setattr__(self, "answers", answers)
        object.__setattr__(self, "index", {a: i for i, a in enumerate(answers)})

    def __len__(self):
        return len(self.answers)


@dataclass(frozen=True)
class AugmentConfig:
    max_rot_deg: float = 5.0
    max_trans_m: float = 0.5
    cuboid_min_fraction: float = 0.8
    crop_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.max_rot_deg < 0 or self.max_trans_m < 0:
            raise ValueError("max_rot_deg and max_trans_m must be >= 0")
        if not 0 < self.cuboid_min_fraction <= 1:
            raise ValueError("cuboid_min_fraction must be in (0, 1]")


def build_answer_vocab(records) -> AnswerVocabulary:
    """Lexicographically sorted vocabulary of every distinct answer string."""
    records = list(records)
    if not records:
        raise ValueError("cannot build a vocabulary from zero records")
    answers = sorted({a for r in records for a in r.answers})
    return AnswerVocabulary(answers=tuple(answers))


def _stable_seed(*parts) -> int:
    h = hashlib.sha256("\x00".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def _place_objects(rng, classes, half_x, half_y):
    placed = []
    for cls in classes:
        ranges = _SIZE_RANGES.get(cls, _DEFAULT_SIZE_RANGE)
        size = np.array([rng.uniform(lo, hi) for lo, hi in ranges])
        for _ in range(30):
            cx = rng.uniform(-half_x + size[0] / 2, half_x - size[0] / 2)
            cy = rng.uniform(-half_y + size[1] / 2, half_y - size[1] / 2)
            # keep object centers apart so objectness labels are unambiguous
            if all(np.hypot(cx - p[0], cy - p[1]) >= 1.0 for p in placed):
                break
        else:
            continue
        placed.append((cx, cy, size, cls))
    return placed


def generate_synthetic_scene(seed: int, scene_type: str):
    """Deterministic synthetic scene plus its templated QA records.

    Places 3-8 box-shaped point clusters with classes from the scene type's
    allowed subset over a 20% uniform background, and emits color / count /
    location questions with exact answers.
    """
    if scene_type not in SCENE_TYPE_CLASSES:
        raise ValueError(f"unknown scene_type {scene_type!r}; known: "
                         f"{sorted(SCENE_TYPE_CLASSES)}")
    rng = np.random.default_rng(_stable_seed("scene", seed, scene_type))
    scene_id = f"{scene_type}_{seed:06d}"
    half_x = rng.uniform(1.8, 2.8)
    half_y = rng.uniform(1.8, 2.8)

    allowed = SCENE_TYPE_CLASSES[scene_type]
    n_obj = int(rng.integers(3, 9))
    classes = [allowed[int(rng.integers(len(allowed)))] for _ in range(n_obj)]
    placed = _place_objects(rng, classes, half_x, half_y)

    objects, colors, chunks, phrases = [], [], [], []
    for cx, cy, size, cls in placed:
        box = AxisAlignedBox(center=(cx, cy, size[2] / 2), size=size)
        objects.append(LabeledBox(box=box, class_id=CLASS_INDEX[cls]))
        color = COLOR_NAMES[int(rng.integers(len(COLOR_NAMES)))]
        colors.append(color)
        pts = rng.uniform(box.min_corner, box.max_corner,
                          size=(_POINTS_PER_OBJECT, 3))
        rgb = np.tile(COLOR_RGB[color], (_POINTS_PER_OBJECT, 1))
        chunks.append((pts, rgb))
        phrases.append(f"a {color} {cls.replace('_', ' ')}")

    n_bg = int(round(_POINTS_PER_OBJECT * len(objects)
                     * _BACKGROUND_FRACTION / (1 - _BACKGROUND_FRACTION)))
    bg = rng.uniform([-half_x, -half_y, 0.0], [half_x, half_y, 2.5],
                     size=(n_bg, 3))
    chunks.append((bg, np.tile(COLOR_RGB["gray"], (n_bg, 1))))

    points = np.concatenate([c[0] for c in chunks])
    rgb = np.concatenate([c[1] for c in chunks])
    extra = np.concatenate([rgb, points[:, 2:3]], axis=1)  # r, g, b, height
    cloud = PointCloud(points=points, extra=extra)
    description = f"a {scene_type} scene with " + ", ".join(phrases)
    scene = SceneRecord(scene_id=scene_id, cloud=cloud, objects=tuple(objects),
                        scene_type=scene_type, description=description,
                        object_colors=tuple(colors))

    qa = []
    by_class = {}
    for i, obj in enumerate(objects):
        by_class.setdefault(obj.class_id, []).append(i)
    qn = 0
    for class_id in sorted(by_class):
        ids = by_class[class_id]
        cls = CLASS_NAMES[class_id].replace("_", " ")
        count = len(ids)

        def _record(question, answers, object_ids):
            nonlocal qn
            rec = QARecord(
                scene_id=scene_id, question=question, answers=tuple(answers),
                gt_boxes=tuple(objects[i] for i in object_ids),
                related_classes=frozenset({class_id}),
                object_ids=tuple(object_ids),
                question_id=f"{scene_id}_q{qn}")
            qn += 1
            return rec

        qa.append(_record(f"how many {cls} are there",
                          [NUMBER_WORDS[count], str(count)], ids))
        if count == 1:
            i = ids[0]
            qa.append(_record(f"what color is the {cls}", [colors[i]], [i]))
            cx = objects[i].box.center[0]
            if cx < -half_x / 3:
                where = "on the left side"
            elif cx > half_x / 3:
                where = "on the right side"
            else:
                where = "in the middle"
            qa.append(_record(f"where is the {cls}", [where], [i]))
    return scene, qa


# ---------------------------------------------------------------------------
# serialization

def scene_to_json(scene: SceneRecord, qa) -> dict:
    obj = {
        "scene_id": scene.scene_id,
        "scene_type": scene.scene_type,
        "description": scene.description,
        "points": [[float(v) for v in row] for row in scene.cloud.points],
        "objects": [],
        "qa": [],
    }
    for i, lb in enumerate(scene.objects):
        entry = {"center": [float(v) for v in lb.box.center],
                 "size": [float(v) for v in lb.box.size],
                 "class": lb.class_name}
        if scene.object_colors is not None:
            entry["color"] = scene.object_colors[i]
        obj["objects"].append(entry)
    for rec in qa:
        obj["qa"].append({"question": rec.question,
                          "answers": list(rec.answers),
                          "object_ids": list(rec.object_ids)})
    return obj


def _parse_labeled_box(entry, where):
    try:
        cls = entry["class"]
        if cls not in CLASS_INDEX:
            raise ValueError(f"unknown class name {cls!r}")
        box = AxisAlignedBox(center=entry["center"], size=entry["size"])
        return LabeledBox(box=box, class_id=CLASS_INDEX[cls])
    except (KeyError, ValueError, TypeError) as exc:
        raise ValueError(f"{where}: {exc}") from exc


def scene_from_json(obj):
    """Parse one scene object; returns (SceneRecord, [QARecord])."""
    sid = obj.get("scene_id", "<missing scene_id>")
    for key in ("scene_id", "scene_type", "description", "points",
                "objects", "qa"):
        if key not in obj:
            raise ValueError(f"scene {sid}: missing field {key!r}")
    objects = [_parse_labeled_box(e, f"scene {sid}, object {i}")
               for i, e in enumerate(obj["objects"])]
    colors = None
    if obj["objects"] and all("color" in e for e in obj["objects"]):
        colors = tuple(e["color"] for e in obj["objects"])
    pts = np.asarray(obj["points"], dtype=np.float64)
    cloud = PointCloud(points=pts, extra=pts[:, 2:3].copy())
    scene = SceneRecord(scene_id=sid, cloud=cloud, objects=tuple(objects),
                        scene_type=obj["scene_type"],
                        description=obj["description"], object_colors=colors)
    qa = []
    for i, q in enumerate(obj["qa"]):
        where = f"scene {sid}, qa record {i}"
        for key in ("question", "answers", "object_ids"):
            if key not in q:
                raise ValueError(f"{where}: missing field {key!r}")
        try:
            ids = tuple(int(j) for j in q["object_ids"])
            gt = tuple(objects[j] for j in ids)
        except IndexError as exc:
            raise ValueError(f"{where}: object id out of range") from exc
        try:
            qa.append(QARecord(
                scene_id=sid, question=q["question"],
                answers=tuple(q["answers"]), gt_boxes=gt,
                related_classes=frozenset(b.class_id for b in gt),
                object_ids=ids, question_id=f"{sid}_q{i}"))
        except ValueError as exc:
            raise ValueError(f"{where}: {exc}") from exc
    return scene, qa


def _iter_scene_objects(path):
    if os.path.isdir(path):
        names = sorted(n for n in os.listdir(path) if n.endswith(".json"))
        if not names:
            raise ValueError(f"no .json scene files under {path}")
        for name in names:
            with open(os.path.join(path, name), encoding="utf-8") as f:
                yield json.load(f)
    else:
        with open(path, encoding="utf-8") as f:
            content = json.load(f)
        if isinstance(content, dict):
            content = [content]
        yield from content


def load_dataset(path):
    """Load scenes and QA records from a dataset file or directory."""
    scenes, qa = [], []
    for obj in _iter_scene_objects(path):
        scene, recs = scene_from_json(obj)
        scenes.append(scene)
        qa.extend(recs)
    return scenes, qa


def qa_to_json(rec: QARecord) -> dict:
    return {"scene_id": rec.scene_id,
            "question_id": rec.question_id,
            "question": rec.question,
            "answers": list(rec.answers),
            "object_ids": list(rec.object_ids),
            "gt_boxes": [{"center": [float(v) for v in b.box.center],
                          "size": [float(v) for v in b.box.size],
                          "class": b.class_name} for b in rec.gt_boxes]}


def _qa_from_flat_json(obj, index):
    where = f"qa record {index}"
    for key in ("scene_id", "question", "answers"):
        if key not in obj:
            raise ValueError(f"{where}: missing field {key!r}")
    gt = tuple(_parse_labeled_box(e, f"{where}, gt box {i}")
               for i, e in enumerate(obj.get("gt_boxes", [])))
    try:
        return QARecord(
            scene_id=obj["scene_id"], question=obj["question"],
            answers=tuple(obj["answers"]), gt_boxes=gt,
            related_classes=frozenset(b.class_id for b in gt),
            object_ids=tuple(obj.get("object_ids", [])),
            question_id=obj.get("question_id", f"q{index}"))
    except ValueError as exc:
        raise ValueError(f"{where}: {exc}") from exc


def load_qa_dataset(path):
    """Load and validate QA records.

    Accepts a scene dataset (file or directory, QA embedded per scene) or a
    flattened QA file: a JSON array of
    {scene_id, question_id, question, answers, object_ids, gt_boxes}.
    """
    if not os.path.isdir(path):
        with open(path, encoding="utf-8") as f:
            content = json.load(f)
        if isinstance(content, list) and content and "question" in content[0]:
            return [_qa_from_flat_json(obj, i) for i, obj in enumerate(content)]
    return load_dataset(path)[1]


def save_dataset(out_dir, scenes_with_qa, force=False):
    """Write one <scene_id>.json file per scene under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    for scene, qa in scenes_with_qa:
        target = os.path.join(out_dir, f"{scene.scene_id}.json")
        if os.path.exists(target) and not force:
            raise FileExistsError(f"{target} exists (use force to overwrite)")
        with open(target, "w", encoding="utf-8") as f:
            json.dump(scene_to_json(scene, qa), f)


# ---------------------------------------------------------------------------
# augmentation

def _transform_box(box, rot, pivot, trans):
    corners = (box_corners(box) - pivot) @ rot.T + pivot + trans
    return box_from_corners(corners)


def augment_with_map(scene: SceneRecord, cfg: AugmentConfig, rng=None):
    """Augmented scene plus the surviving objects' original indices.

    Applies, in order: random per-axis rotation within ±max_rot_deg about the
    cloud centroid, random translation within ±max_trans_m per axis, then
    with probability crop_probability a random cuboid crop retaining at least
    cuboid_min_fraction of the points. Ground-truth boxes get the same rigid
    transform (corners transformed, then re-fit axis-aligned); boxes whose
    centers fall outside the crop are dropped.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    max_rot = np.deg2rad(cfg.max_rot_deg)
    angles = rng.uniform(-max_rot, max_rot, size=3)
    trans = rng.uniform(-cfg.max_trans_m, cfg.max_trans_m, size=3)
    rot = rotation_matrix(angles)
    pivot = scene.cloud.points.mean(axis=0)

    points = (scene.cloud.points - pivot) @ rot.T + pivot + trans
    extra = scene.cloud.extra
    boxes = [replace(lb, box=_transform_box(lb.box, rot, pivot, trans))
             for lb in scene.objects]
    keep_ids = list(range(len(boxes)))

    if rng.uniform() < cfg.crop_probability:
        lo, hi = points.min(axis=0), points.max(axis=0)
        extent = hi - lo
        for _ in range(10):
            frac = rng.uniform(cfg.cuboid_min_fraction ** (1 / 3), 1.0, size=3)
            csize = extent * frac
            clo = lo + rng.uniform(0, 1, size=3) * (extent - csize)
            chi = clo + csize
            mask = np.all((points >= clo) & (points <= chi), axis=1)
            if mask.sum() >= cfg.cuboid_min_fraction * points.shape[0]:
                points = points[mask]
                if extra is not None:
                    extra = extra[mask]
                kept = [(i, b) for i, b in zip(keep_ids, boxes)
                        if np.all(b.box.center >= clo) and np.all(b.box.center <= chi)]
                keep_ids = [i for i, _ in kept]
                boxes = [b for _, b in kept]
                break

    cloud = PointCloud(points=points, extra=extra)
    # a crop can leave a kept box poking out past the record's +0.5 m margin;
    # such boxes are dropped along with the center-outside ones
    lo, hi = points.min(axis=0) - 0.5, points.max(axis=0) + 0.5
    kept = [(i, b) for i, b in zip(keep_ids, boxes)
            if np.all(b.box.min_corner >= lo) and np.all(b.box.max_corner <= hi)]
    keep_ids = [i for i, _ in kept]
    boxes = [b for _, b in kept]
    colors = None
    if scene.object_colors is not None:
        colors = tuple(scene.object_colors[i] for i in keep_ids)
    out = SceneRecord(scene_id=scene.scene_id, cloud=cloud,
                      objects=tuple(boxes), scene_type=scene.scene_type,
                      description=scene.description, object_colors=colors)
    return out, keep_ids


def augment(scene: SceneRecord, cfg: AugmentConfig, rng=None) -> SceneRecord:
    return augment_with_map(scene, cfg, rng)[0]
