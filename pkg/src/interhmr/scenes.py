"""Synthetic multi-person scenes with objects and interaction labels."""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .body_model import forward, BodyParams
from .camera import CameraParams, clamp_boxes
from .errors import ConfigError
from .metrics import pairwise_iou
from .persons import PersonSet, derive_persons, empty_person_set

HUMAN_VERBS = ("hug", "talk_to", "handshake", "carry", "push", "look_at")
OBJECT_VERBS = ("hold", "ride", "sit_on", "carry", "lift", "kick", "throw", "lean_on")
N_CATEGORIES = 20


@dataclass(eq=False)
class ScenePerson:
    params: BodyParams
    cam: CameraParams
    labels: list
    box: np.ndarray = None


@dataclass(eq=False)
class SceneObject:
    box: np.ndarray
    category: int


@dataclass(eq=False)
class SceneSpec:
    """Ground-truth scene. ``interactions`` entries are dicts with keys
    ``human``, ``kind`` ("person" | "object"), ``index`` and ``label``."""

    seed: int
    persons: list
    objects: list
    interactions: list = field(default_factory=list)
    truth: PersonSet = None

    def label_lookup(self):
        return {(e["human"], e["kind"], e["index"]): e["label"] for e in self.interactions}

    def ground_truth(self):
        return self.truth

    def to_dict(self):
        return {
            "seed": int(self.seed),
            "persons": [
                {"params": p.params.to_dict(), "cam": p.cam.as_array().tolist(), "labels": list(p.labels)}
                for p in self.persons
            ],
            "objects": [{"box": o.box.tolist(), "category": int(o.category)} for o in self.objects],
            "interactions": self.interactions,
            "truth": self.truth.to_dict(),
        }

    @classmethod
    def from_dict(cls, d, model):
        persons = [
            ScenePerson(BodyParams.from_dict(p["params"]), CameraParams.from_array(p["cam"]), list(p["labels"]))
            for p in d["persons"]
        ]
        objects = [SceneObject(np.asarray(o["box"], dtype=np.float64), int(o["category"])) for o in d["objects"]]
        truth = PersonSet.from_dict(d["truth"], model.joint_count, model.shape_count, model.vertex_count)
        for p, box in zip(persons, truth.boxes):
            p.box = box
        for k, e in enumerate(d.get("interactions", [])):
            n_other = len(persons) if e.get("kind") == "person" else len(objects)
            if not (0 <= e.get("human", -1) < len(persons) and 0 <= e.get("index", -1) < n_other):
                raise ConfigError(f"interactions[{k}]: index out of range")
        return cls(int(d["seed"]), persons, objects, list(d.get("interactions", [])), truth)


def build_scene(seed, persons, objects, interactions, model, focal, img_extent):
    """Attach derived ground truth (joints, mesh, keypoints, boxes) to a scene."""
    if persons:
        truth = derive_persons(
            model,
            np.stack([p.params.pose for p in persons]),
            np.stack([p.params.shape for p in persons]),
            np.stack([p.cam.as_array() for p in persons]),
            None, focal, img_extent,
        )
    else:
        truth = empty_person_set(model.joint_count, model.shape_count, model.vertex_count)
    for p, box in zip(persons, truth.boxes):
        p.box = box
    return SceneSpec(int(seed), persons, objects, interactions, truth)


def _root_orientation(rng):
    # flip the y-up body frame to image y-down, then a random heading
    yaw = rng.uniform(-np.pi, np.pi)
    r = Rotation.from_rotvec([np.pi, 0.0, 0.0]) * Rotation.from_rotvec([0.0, yaw, 0.0])
    return r.as_rotvec()


def _sample_scene(seed, config, model):
    sp = config.scene
    rng = np.random.default_rng(seed)
    K, B = model.joint_count, model.shape_count
    n_persons = int(rng.integers(sp.persons[0], sp.persons[1] + 1))
    n_objects = int(rng.integers(sp.objects[0], sp.objects[1] + 1))
    cluster = rng.uniform(0.3, 0.7, size=2)
    persons = []
    for _ in range(n_persons):
        pose = np.clip(rng.normal(0.0, sp.pose_std, size=(K, 3)), -3 * sp.pose_std, 3 * sp.pose_std)
        pose[0] = _root_orientation(rng)
        shape = np.clip(rng.normal(size=B), -2.0, 2.0)
        s = rng.uniform(*sp.scale_range)
        spread = rng.uniform(0.15, 0.85, size=2)
        target = (1 - sp.crowding) * spread + sp.crowding * (cluster + rng.normal(0.0, 0.03, size=2))
        params = BodyParams(pose, shape)
        verts, _ = forward(model, params)
        p2d = s * verts[:, :2]
        center = (p2d.min(axis=0) + p2d.max(axis=0)) / 2
        t = target - center
        persons.append(ScenePerson(params, CameraParams(float(s), float(t[0]), float(t[1])), []))

    scene = build_scene(seed, persons, [], [], model, config.focal, config.img_extent)
    objects = []
    for _ in range(n_objects):
        if persons and rng.uniform() < sp.object_overlap:
            anchor = scene.truth.boxes[int(rng.integers(len(persons)))]
            center = anchor[:2] + rng.uniform(-0.5, 0.5, size=2) * anchor[2:]
            size = anchor[2:] * rng.uniform(0.3, 0.8, size=2)
        else:
            center = rng.uniform(0.1, 0.9, size=2)
            size = rng.uniform(0.05, 0.25, size=2)
        box = clamp_boxes(np.concatenate([center, size]))
        objects.append(SceneObject(box, int(rng.integers(N_CATEGORIES))))

    interactions = []
    person_boxes = scene.truth.boxes
    if objects:
        obj_iou = pairwise_iou(person_boxes, np.stack([o.box for o in objects]))
        for i in range(len(persons)):
            for j in range(len(objects)):
                if obj_iou[i, j] > 0:
                    interactions.append({"human": i, "kind": "object", "index": j,
                                         "label": str(rng.choice(OBJECT_VERBS))})
    if len(persons) > 1:
        hh = pairwise_iou(person_boxes, person_boxes)
        for i in range(len(persons)):
            for j in range(i + 1, len(persons)):
                if hh[i, j] > 0:
                    label = str(rng.choice(HUMAN_VERBS))
                    interactions.append({"human": i, "kind": "person", "index": j, "label": label})
                    interactions.append({"human": j, "kind": "person", "index": i, "label": label})
    for e in interactions:
        persons[e["human"]].labels.append(e["label"])
    scene.objects = objects
    scene.interactions = interactions
    return scene


def gen_scenes(config, count, model):
    """Deterministic list of ``count`` scenes from ``config.seed``."""
    if not isinstance(count, int) or count < 1:
        raise ConfigError(f"scene count must be >= 1, got {count}")
    seeds = np.random.default_rng(config.seed).integers(0, 2**31 - 1, size=count)
    return [_sample_scene(int(s), config, model) for s in seeds]


def scenes_to_json(scenes):
    return json.dumps([s.to_dict() for s in scenes], sort_keys=True)


def load_scenes(path, model):
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenes {path}: {exc}") from exc
    if isinstance(raw, dict):
        raw = [raw]
    try:
        return [SceneSpec.from_dict(d, model) for d in raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: invalid scene file ({exc})") from exc
