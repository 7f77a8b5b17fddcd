"""Set-prediction training losses (forward evaluation only).

Every L1 term is a mean over its elements, then a mean over matched pairs.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .matching import CostWeights, clamp_conf, cost_matrix, hungarian
from .metrics import giou

FOCAL_ALPHA = 0.25
TERMS = ("depth", "pose", "shape", "j3ds", "j2ds", "box", "det")


@dataclass(frozen=True)
class LossWeights:
    # scale-map weight is kept only for format compatibility; its term needs
    # the image encoder, which is not part of this package
    map: float = 0.0
    depth: float = 0.5
    pose: float = 5.0
    shape: float = 3.0
    j3ds: float = 8.0
    j2ds: float = 40.0
    box: float = 2.0
    det: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise ConfigError(f"loss weight {name} must be >= 0, got {value}")
        if self.map != 0:
            raise ConfigError("loss weight 'map' must be 0: the scale-map term needs the image encoder")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class LossBreakdown:
    terms: dict
    weighted: dict
    total: float
    per_pair: list = field(default_factory=list)
    pairs: list = field(default_factory=list)

    def to_dict(self):
        return {"terms": self.terms, "weighted": self.weighted, "total": self.total,
                "pairs": [list(p) for p in self.pairs], "per_pair": self.per_pair}


def _l1(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"L1 between {a.shape} and {b.shape}")
    return float(np.abs(a - b).mean()) if a.size else 0.0


def term_losses(pred, gt, i=0, j=0):
    """Per-term losses between prediction ``i`` of ``pred`` and ground truth ``j`` of ``gt``."""
    pj = pred.joints[i] - pred.joints[i][0]
    gj = gt.joints[j] - gt.joints[j][0]
    return {
        "depth": abs(float(pred.depth[i]) - float(gt.depth[j])),
        "pose": _l1(pred.pose[i], gt.pose[j]),
        "shape": _l1(pred.shape[i], gt.shape[j]),
        "j3ds": _l1(pj, gj),
        "j2ds": _l1(pred.kpts[i], gt.kpts[j]),
        "box": _l1(pred.boxes[i], gt.boxes[j]) + (1.0 - float(giou(pred.boxes[i], gt.boxes[j]))),
    }


def detection_loss(conf, assignment, gamma=2.0, alpha=FOCAL_ALPHA):
    """Binary focal loss; matched predictions are positives. Mean over queries."""
    p, _ = clamp_conf(conf)
    p = np.atleast_1d(p)
    if p.size == 0:
        return 0.0
    positive = np.zeros(p.shape[0], dtype=bool)
    for i, _ in assignment.pairs:
        positive[i] = True
    pos = -alpha * (1 - p) ** gamma * np.log(p)
    neg = -(1 - alpha) * p ** gamma * np.log1p(-p)
    return float(np.where(positive, pos, neg).mean())


def match_sets(pred, gt, cost_weights=CostWeights()):
    c = cost_matrix(pred.conf, pred.boxes, pred.kpts, gt.boxes, gt.kpts, cost_weights)
    return hungarian(c)


def total_loss(pred, gt, weights=LossWeights(), cost_weights=CostWeights()):
    """Match predictions to ground truth, then combine all weighted terms."""
    assignment = match_sets(pred, gt, cost_weights)
    per_pair = [term_losses(pred, gt, i, j) for i, j in assignment.pairs]
    terms = {}
    for name in TERMS[:-1]:
        terms[name] = float(np.mean([t[name] for t in per_pair])) if per_pair else 0.0
    terms["det"] = detection_loss(pred.conf, assignment, cost_weights.gamma)
    weighted = {name: getattr(weights, name) * terms[name] for name in TERMS}
    total = 0.0
    for name in TERMS:
        total += weighted[name]
    return LossBreakdown(terms, weighted, total, per_pair, assignment.pairs)
