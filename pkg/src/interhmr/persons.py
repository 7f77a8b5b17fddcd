"""Per-person prediction / ground-truth records and their derived geometry."""
from dataclasses import dataclass, fields

import numpy as np

from . import body_model as bm
from .camera import (
    DEFAULT_FOCAL,
    DEFAULT_IMG_EXTENT,
    CameraParams,
    box_from_points,
    camera_translation,
    project,
    scale_to_depth,
)


@dataclass(eq=False)
class PersonSet:
    """A set of N people with body/camera parameters and derived geometry.

    ``joints`` and ``vertices`` live in the body frame (meters);
    ``transl`` moves them to camera space. ``kpts`` and ``boxes`` are in
    normalized image coordinates.
    """

    conf: np.ndarray      # (N,)
    pose: np.ndarray      # (N, K, 3)
    shape: np.ndarray     # (N, B)
    cam: np.ndarray       # (N, 3) as (s, tx, ty)
    depth: np.ndarray     # (N,)
    transl: np.ndarray    # (N, 3)
    joints: np.ndarray    # (N, K, 3)
    vertices: np.ndarray  # (N, V, 3)
    kpts: np.ndarray      # (N, K, 2)
    boxes: np.ndarray     # (N, 4)

    def __len__(self):
        return self.conf.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return PersonSet(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})

    def root_positions(self):
        """Camera-space location of the root joint of each person."""
        return self.joints[:, 0, :] + self.transl

    def params(self, i):
        return bm.BodyParams(self.pose[i], self.shape[i])

    def to_dict(self):
        return {f.name: getattr(self, f.name).tolist() for f in fields(self)}

    @classmethod
    def from_dict(cls, d, joint_count=None, shape_count=None, vertex_count=None):
        # empty sets lose their trailing dims in JSON
        if len(d["conf"]) == 0 and joint_count is not None:
            return empty_person_set(joint_count, shape_count, vertex_count)
        return cls(**{f.name: np.asarray(d[f.name], dtype=np.float64) for f in fields(cls)})


def empty_person_set(joint_count, shape_count, vertex_count):
    K, B, V = joint_count, shape_count, vertex_count
    return PersonSet(
        conf=np.zeros(0), pose=np.zeros((0, K, 3)), shape=np.zeros((0, B)),
        cam=np.zeros((0, 3)), depth=np.zeros(0), transl=np.zeros((0, 3)),
        joints=np.zeros((0, K, 3)), vertices=np.zeros((0, V, 3)),
        kpts=np.zeros((0, K, 2)), boxes=np.zeros((0, 4)),
    )


def derive_persons(model, pose, shape, cam, conf=None,
                   focal=DEFAULT_FOCAL, img_extent=DEFAULT_IMG_EXTENT):
    """Run the body model and camera for every person and collect the results."""
    pose = np.asarray(pose, dtype=np.float64).reshape(-1, model.joint_count, 3)
    shape = np.asarray(shape, dtype=np.float64).reshape(-1, model.shape_count)
    cam = np.asarray(cam, dtype=np.float64).reshape(-1, 3)
    n = pose.shape[0]
    if n == 0:
        return empty_person_set(model.joint_count, model.shape_count, model.vertex_count)
    conf = np.ones(n) if conf is None else np.asarray(conf, dtype=np.float64).reshape(n)
    poses, joints, verts, kpts, boxes, depth, transl = [], [], [], [], [], [], []
    for i in range(n):
        params = bm.BodyParams(pose[i], shape[i])
        c = CameraParams.from_array(cam[i])
        v, j = bm.forward(model, params)
        poses.append(params.pose)
        verts.append(v)
        joints.append(j)
        kpts.append(project(j, c))
        boxes.append(box_from_points(project(v, c)))
        depth.append(scale_to_depth(c.s, focal, img_extent))
        transl.append(camera_translation(c, focal, img_extent))
    return PersonSet(
        conf=conf, pose=np.stack(poses), shape=shape.copy(), cam=cam.copy(),
        depth=np.array(depth), transl=np.stack(transl), joints=np.stack(joints),
        vertices=np.stack(verts), kpts=np.stack(kpts), boxes=np.stack(boxes),
    )
