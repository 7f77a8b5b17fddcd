import math

import numpy as np
import pytest

from interhmr.errors import ConfigError
from interhmr.losses import LossWeights, detection_loss, term_losses, total_loss
from interhmr.matching import Assignment
from interhmr.metrics import giou
from interhmr.persons import derive_persons


def people(model, rng, n, conf=None):
    pose = rng.normal(scale=0.2, size=(n, 24, 3))
    cam = np.column_stack([rng.uniform(0.2, 0.3, n), rng.uniform(0.3, 0.7, n), rng.uniform(0.3, 0.7, n)])
    return derive_persons(model, pose, rng.normal(size=(n, 10)), cam, conf)


def test_default_weights():
    assert LossWeights().to_dict() == {"map": 0.0, "depth": 0.5, "pose": 5.0, "shape": 3.0,
                                       "j3ds": 8.0, "j2ds": 40.0, "box": 2.0, "det": 1.0}
    with pytest.raises(ConfigError):
        LossWeights(map=0.1)
    with pytest.raises(ConfigError):
        LossWeights(pose=-1.0)


def test_detection_loss_spot_values():
    empty = Assignment([], [0], [])
    # unmatched query at 0.5: 0.75 * 0.25 * ln 2
    assert detection_loss([0.5], empty) == pytest.approx(0.75 * 0.25 * math.log(2.0), abs=1e-15)
    matched = Assignment([(0, 0)], [], [])
    assert detection_loss([0.5], matched) == pytest.approx(0.25 * 0.25 * math.log(2.0), abs=1e-15)
    assert detection_loss([], empty) == 0.0


def test_perfect_prediction_has_zero_regression_terms(toy_model, rng):
    gt = people(toy_model, rng, 2)
    terms = term_losses(gt, gt, 1, 1)
    assert terms["depth"] == terms["pose"] == terms["shape"] == terms["j3ds"] == terms["j2ds"] == 0.0
    assert terms["box"] == pytest.approx(0.0, abs=1e-12)


def test_term_losses_hand_checked(toy_model, rng):
    a, b = people(toy_model, rng, 1), people(toy_model, rng, 1)
    t = term_losses(a, b)
    assert t["pose"] == pytest.approx(np.abs(a.pose[0] - b.pose[0]).mean())
    assert t["depth"] == pytest.approx(abs(a.depth[0] - b.depth[0]))
    assert t["box"] == pytest.approx(np.abs(a.boxes[0] - b.boxes[0]).mean() + 1 - giou(a.boxes[0], b.boxes[0]))


def test_total_loss_combines_weighted_terms(toy_model, rng):
    gt = people(toy_model, rng, 2)
    pred = people(toy_model, rng, 3, conf=np.array([0.9, 0.2, 0.6]))
    out = total_loss(pred, gt)
    assert len(out.pairs) == 2
    w = LossWeights()
    assert out.total == pytest.approx(sum(getattr(w, k) * v for k, v in out.terms.items()))
    assert out.weighted["det"] == out.terms["det"]


def test_total_loss_without_ground_truth(toy_model, rng):
    pred = people(toy_model, rng, 2, conf=np.array([0.5, 0.5]))
    gt = pred.subset([])
    out = total_loss(pred, gt)
    assert out.pairs == [] and out.terms["pose"] == 0.0
    assert out.total == pytest.approx(0.75 * 0.25 * math.log(2.0))
