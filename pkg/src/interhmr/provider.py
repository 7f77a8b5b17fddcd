"""Synthetic interaction-feature and object-box providers.

These stand in for a pretrained HOI detector and object detector. Features
are deterministic functions of the scene and the two boxes of a pair.
"""
import json
import zlib
from dataclasses import asdict, dataclass

import numpy as np

from .camera import clamp_boxes
from .errors import ConfigError, ShapeError
from .metrics import giou, iou, pairwise_iou

MODES = ("geometric", "labeled", "zero")
LABEL_IOU_FLOOR = 0.3
# every feature component lies in [-FEATURE_BOUND, FEATURE_BOUND]
FEATURE_BOUND = 1.0
GEOMETRY_WIDTH = 6  # dx, dy, log w ratio, log h ratio, IoU, GIoU
_FREQS = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0)


@dataclass(frozen=True)
class ProviderConfig:
    feature_dim: int = 768
    mode: str = "geometric"

    def __post_init__(self):
        if not isinstance(self.feature_dim, int) or self.feature_dim <= 0:
            raise ConfigError(f"feature_dim must be a positive integer, got {self.feature_dim}")
        if self.mode not in MODES:
            raise ConfigError(f"provider mode must be one of {MODES}, got {self.mode!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def pair_geometry(bh, be):
    """Relative geometry of environment box(es) ``be`` w.r.t. human box(es) ``bh``.

    Columns: center offset (x, y) in units of the human box size, log width
    ratio, log height ratio, IoU, GIoU.
    """
    bh = np.asarray(bh, dtype=np.float64).reshape(-1, 4)
    be = np.asarray(be, dtype=np.float64).reshape(-1, 4)
    if bh.shape != be.shape:
        raise ShapeError(f"pair_geometry: {bh.shape} vs {be.shape}")
    off = (be[:, :2] - bh[:, :2]) / bh[:, 2:]
    logs = np.log(be[:, 2:] / bh[:, 2:])
    return np.column_stack([off, logs, iou(bh, be), giou(bh, be)])


def lift(geometry, dim):
    """Fixed sinusoidal lifting of geometry rows to ``dim`` components.

    Component j uses geometry column j % 6, frequency _FREQS[(j // 12) % 6]
    and sin for even (j // 6), cos otherwise.
    """
    g = np.asarray(geometry, dtype=np.float64).reshape(-1, GEOMETRY_WIDTH)
    j = np.arange(dim)
    col = j % GEOMETRY_WIDTH
    freq = np.asarray(_FREQS)[(j // (2 * GEOMETRY_WIDTH)) % len(_FREQS)]
    use_sin = (j // GEOMETRY_WIDTH) % 2 == 0
    angle = g[:, col] * freq * (np.pi / 2)
    return np.where(use_sin, np.sin(angle), np.cos(angle))


def label_embedding(label, dim):
    """Fixed pseudo-random embedding in [-1, 1]^dim keyed by a hash of the label."""
    key = zlib.crc32(str(label).encode("utf-8"))
    return np.random.default_rng(key).uniform(-1.0, 1.0, size=dim)


def _entity_boxes(scene):
    """Boxes of all scene entities, persons first, with their (kind, index) ids."""
    boxes = [p.box for p in scene.persons] + [o.box for o in scene.objects]
    ids = [("person", i) for i in range(len(scene.persons))]
    ids += [("object", i) for i in range(len(scene.objects))]
    return np.asarray(boxes, dtype=np.float64).reshape(-1, 4), ids


def _match_entities(boxes, entity_boxes, floor=LABEL_IOU_FLOOR, restrict=None):
    """Greatest-IoU entity for each box, or -1 below the IoU floor."""
    if entity_boxes.shape[0] == 0:
        return np.full(boxes.shape[0], -1)
    ious = pairwise_iou(boxes, entity_boxes)
    if restrict is not None:
        ious = np.where(restrict[None, :], ious, -1.0)
    best = ious.argmax(axis=1)
    return np.where(ious[np.arange(len(best)), best] >= floor, best, -1)


def extract_batch(scene, bh, be, cfg):
    """Features for many pairs at once; rows correspond to (bh[k], be[k])."""
    bh = np.asarray(bh, dtype=np.float64).reshape(-1, 4)
    be = np.asarray(be, dtype=np.float64).reshape(-1, 4)
    if cfg.mode == "zero":
        return np.zeros((bh.shape[0], cfg.feature_dim))
    feats = lift(pair_geometry(bh, be), cfg.feature_dim)
    if cfg.mode == "labeled" and bh.shape[0]:
        entity_boxes, ids = _entity_boxes(scene)
        is_person = np.array([kind == "person" for kind, _ in ids], dtype=bool)
        hi = _match_entities(bh, entity_boxes, restrict=is_person)
        ei = _match_entities(be, entity_boxes)
        labels = scene.label_lookup()
        for k in range(bh.shape[0]):
            if hi[k] < 0 or ei[k] < 0 or hi[k] == ei[k]:
                continue
            label = labels.get((ids[hi[k]][1],) + ids[ei[k]])
            if label is not None:
                feats[k] = 0.5 * (feats[k] + label_embedding(label, cfg.feature_dim))
    return feats


def extract(scene, bh, be, cfg):
    """Interaction feature vector for a single (human box, environment box) pair."""
    return extract_batch(scene, bh, be, cfg)[0]


def detect_objects(scene, noise, max_out):
    """Ground-truth object boxes jittered by seeded uniform noise, clamped, truncated."""
    if noise < 0:
        raise ConfigError(f"detector noise must be >= 0, got {noise}")
    boxes = np.asarray([o.box for o in scene.objects], dtype=np.float64).reshape(-1, 4)
    if noise > 0 and boxes.shape[0]:
        rng = np.random.default_rng([scene.seed, 0xD7EC7])
        boxes = boxes + rng.uniform(-noise, noise, size=boxes.shape)
    boxes = clamp_boxes(boxes)
    return boxes[:max(0, int(max_out))]


class SceneInteractionSource:
    """Binds a scene, detected object boxes and a provider config for the decoder."""

    def __init__(self, scene, cfg, object_boxes):
        self.scene = scene
        self.cfg = cfg
        self.object_boxes = np.asarray(object_boxes, dtype=np.float64).reshape(-1, 4)

    def features(self, bh, be):
        return extract_batch(self.scene, bh, be, self.cfg)


class FeatureDumpSource:
    """Features read from a per-image JSON dump of {human_box, env_box, feature} triples.

    Lookup is by exact box match after rounding; unknown pairs get zeros.
    """

    def __init__(self, path, feature_dim, object_boxes=()):
        with open(path) as f:
            entries = json.load(f)
        self.feature_dim = feature_dim
        self.object_boxes = np.asarray(object_boxes, dtype=np.float64).reshape(-1, 4)
        self._table = {}
        for k, e in enumerate(entries):
            feat = np.asarray(e["feature"], dtype=np.float64)
            if feat.shape != (feature_dim,):
                raise ConfigError(f"{path}[{k}].feature: expected length {feature_dim}")
            self._table[self._key(e["human_box"], e["env_box"])] = feat

    @staticmethod
    def _key(bh, be):
        return tuple(np.round(np.concatenate([bh, be]), 6).tolist())

    def features(self, bh, be):
        out = np.zeros((len(bh), self.feature_dim))
        for k, (h, e) in enumerate(zip(bh, be)):
            feat = self._table.get(self._key(h, e))
            if feat is not None:
                out[k] = feat
        return out
