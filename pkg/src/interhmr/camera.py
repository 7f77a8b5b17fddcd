"""Weak-perspective camera, depth conversion and 2-D box helpers.

Image coordinates are normalized to [0, 1] along each axis. Boxes are stored
as ``(cx, cy, w, h)`` arrays of shape (4,) or (N, 4).
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

MIN_BOX_SIDE = 1e-4
# Longer image side after resizing; depth conversion works in these units.
DEFAULT_IMG_EXTENT = 1288.0
DEFAULT_FOCAL = 1288.0


@dataclass(frozen=True)
class CameraParams:
    s: float
    tx: float
    ty: float

    def __post_init__(self):
        if not all(np.isfinite([self.s, self.tx, self.ty])):
            raise DomainError("camera parameters must be finite")
        if self.s <= 0:
            raise DomainError(f"camera scale must be positive, got {self.s}")

    def as_array(self):
        return np.array([self.s, self.tx, self.ty])

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]), float(a[2]))


def project(points3d, cam):
    """Orthographic projection scaled by ``s`` and shifted by ``(tx, ty)``."""
    pts = np.asarray(points3d, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeError(f"project expects (N, 3) points, got {pts.shape}")
    return cam.s * pts[:, :2] + np.array([cam.tx, cam.ty])


def scale_to_depth(s, focal=DEFAULT_FOCAL, img_extent=DEFAULT_IMG_EXTENT):
    if not s > 0:
        raise DomainError(f"scale must be positive, got {s}")
    if not focal > 0:
        raise DomainError(f"focal must be positive, got {focal}")
    return 2.0 * focal / (s * img_extent)


def depth_to_scale(depth, focal=DEFAULT_FOCAL, img_extent=DEFAULT_IMG_EXTENT):
    if not depth > 0:
        raise DomainError(f"depth must be positive, got {depth}")
    return 2.0 * focal / (depth * img_extent)


def camera_translation(cam, focal=DEFAULT_FOCAL, img_extent=DEFAULT_IMG_EXTENT):
    """Camera-space translation (meters) of the body frame.

    x/y come from the image-plane offset from the image center divided by the
    scale (normalized units per meter); z is the converted depth.
    """
    depth = scale_to_depth(cam.s, focal, img_extent)
    return np.array([(cam.tx - 0.5) / cam.s, (cam.ty - 0.5) / cam.s, depth])


def clamp_boxes(boxes):
    """Clamp centers to [0, 1] and sides to [MIN_BOX_SIDE, 1]."""
    b = np.array(boxes, dtype=np.float64)
    b[..., :2] = np.clip(b[..., :2], 0.0, 1.0)
    b[..., 2:] = np.clip(b[..., 2:], MIN_BOX_SIDE, 1.0)
    return b


def is_valid_box(box):
    b = np.asarray(box, dtype=np.float64)
    return bool(
        np.isfinite(b).all()
        and (b[..., :2] >= 0).all() and (b[..., :2] <= 1).all()
        and (b[..., 2:] > 0).all() and (b[..., 2:] <= 1).all()
    )


def box_from_points(p2d):
    p = np.asarray(p2d, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2:
        raise ShapeError(f"box_from_points expects (N, 2), got {p.shape}")
    if p.shape[0] == 0:
        raise DomainError("box_from_points needs at least one point")
    lo = p.min(axis=0)
    hi = p.max(axis=0)
    box = np.concatenate([(lo + hi) / 2.0, hi - lo])
    return clamp_boxes(box)


def cxcywh_to_xyxy(boxes):
    b = np.asarray(boxes, dtype=np.float64)
    half = b[..., 2:] / 2.0
    return np.concatenate([b[..., :2] - half, b[..., :2] + half], axis=-1)
