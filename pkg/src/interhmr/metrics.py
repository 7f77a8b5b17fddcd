"""3-D pose/mesh evaluation metrics and generalized IoU.

Point arrays are in meters; MPJPE-style errors are reported in millimeters.
"""
from dataclasses import dataclass

import numpy as np

from .camera import cxcywh_to_xyxy
from .errors import AlignmentError, ShapeError

DEFAULT_PCK_THRESHOLD_MM = 150.0


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points):
        return self.scale * np.asarray(points) @ self.rotation.T + self.translation


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise ShapeError(f"point sets must both be (N, 3), got {pred.shape} and {gt.shape}")
    return pred, gt


def mpjpe(pred, gt):
    pred, gt = _pair(pred, gt)
    return float(np.linalg.norm(pred - gt, axis=1).mean() * 1000.0)


def pve(pred_verts, gt_verts):
    return mpjpe(pred_verts, gt_verts)


def procrustes_align(pred, gt):
    """Least-squares similarity transform taking ``pred`` onto ``gt``.

    Orthogonal Procrustes via SVD of the cross-covariance, with the sign of
    the last singular direction flipped when needed so det(R) = +1.
    Returns ``(transform, aligned_pred)``.
    """
    pred, gt = _pair(pred, gt)
    if pred.shape[0] < 3:
        raise AlignmentError("Procrustes alignment needs at least 3 points")
    mu_p = pred.mean(axis=0)
    mu_g = gt.mean(axis=0)
    x = pred - mu_p
    y = gt - mu_g
    sx = np.linalg.svd(x, compute_uv=False)
    sy = np.linalg.svd(y, compute_uv=False)
    tol = 1e-10
    if sx[1] <= tol * max(sx[0], 1.0) or sy[1] <= tol * max(sy[0], 1.0):
        raise AlignmentError("point sets are degenerate (rank < 2 after centering)")
    cov = y.T @ x
    U, S, Vt = np.linalg.svd(cov)
    d = np.ones(3)
    if np.linalg.det(U @ Vt) < 0:
        d[2] = -1.0
    R = U @ np.diag(d) @ Vt
    scale = float((S * d).sum() / (x * x).sum())
    t = mu_g - scale * R @ mu_p
    transform = SimilarityTransform(scale, R, t)
    return transform, transform.apply(pred)


def pa_mpjpe(pred, gt):
    _, aligned = procrustes_align(pred, gt)
    return mpjpe(aligned, gt)


def joint_errors_mm(pred, gt):
    pred, gt = _pair(pred, gt)
    return np.linalg.norm(pred - gt, axis=1) * 1000.0


def pck3d(pred, gt, thresh_mm=DEFAULT_PCK_THRESHOLD_MM):
    """Fraction of joints whose error is within ``thresh_mm``."""
    return float((joint_errors_mm(pred, gt) <= thresh_mm).mean())


def box_area(boxes):
    b = np.asarray(boxes, dtype=np.float64)
    return b[..., 2] * b[..., 3]


def _overlap(a, b):
    """Intersection, union and enclosing-hull areas.

    All areas come from the same corner coordinates, so a box compared with
    itself gives intersection == union == hull exactly.
    """
    a_xy = cxcywh_to_xyxy(a)
    b_xy = cxcywh_to_xyxy(b)
    area_a = (a_xy[..., 2] - a_xy[..., 0]) * (a_xy[..., 3] - a_xy[..., 1])
    area_b = (b_xy[..., 2] - b_xy[..., 0]) * (b_xy[..., 3] - b_xy[..., 1])
    lo = np.maximum(a_xy[..., :2], b_xy[..., :2])
    hi = np.minimum(a_xy[..., 2:], b_xy[..., 2:])
    wh = np.clip(hi - lo, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    union = area_a + area_b - inter
    hull_wh = np.maximum(a_xy[..., 2:], b_xy[..., 2:]) - np.minimum(a_xy[..., :2], b_xy[..., :2])
    return inter, union, hull_wh[..., 0] * hull_wh[..., 1]


def iou(a, b):
    inter, union, _ = _overlap(a, b)
    return inter / union


def giou(a, b):
    """Generalized IoU of ``(cx, cy, w, h)`` boxes; broadcasts over leading dims."""
    inter, union, hull = _overlap(a, b)
    out = inter / union - (hull - union) / hull
    return out if np.ndim(out) else float(out)


def pairwise_giou(a, b):
    """(N, 4) x (M, 4) -> (N, M) generalized IoU matrix."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    return np.asarray(giou(a[:, None, :], b[None, :, :])).reshape(a.shape[0], b.shape[0])


def pairwise_iou(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    return np.asarray(iou(a[:, None, :], b[None, :, :])).reshape(a.shape[0], b.shape[0])
