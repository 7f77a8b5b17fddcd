"""Parametric body model: blend shapes, linear blend skinning, joint regression.

The model format carries its own vertex/joint/shape counts so that small
synthetic models and full-size exports share one code path. The real SMPL
asset has V=6890, K=24, B=10.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

SMPL_VERTEX_COUNT = 6890
SMPL_JOINT_COUNT = 24
SMPL_SHAPE_COUNT = 10

# Kinematic tree and approximate rest joint locations (meters) of SMPL,
# used to lay out the 24-joint toy model.
SMPL_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)
SMPL_REST_JOINTS = np.array([
    [0.00, 0.00, 0.00], [0.06, -0.09, 0.00], [-0.06, -0.09, 0.00],
    [0.00, 0.11, -0.02], [0.10, -0.47, 0.00], [-0.10, -0.47, 0.00],
    [0.00, 0.25, 0.00], [0.09, -0.87, -0.04], [-0.09, -0.87, -0.04],
    [0.00, 0.31, 0.02], [0.12, -0.93, 0.08], [-0.12, -0.93, 0.08],
    [0.00, 0.52, -0.01], [0.08, 0.42, -0.01], [-0.08, 0.42, -0.01],
    [0.00, 0.60, 0.03], [0.19, 0.45, -0.02], [-0.19, 0.45, -0.02],
    [0.45, 0.43, -0.04], [-0.45, 0.43, -0.04], [0.71, 0.44, -0.03],
    [-0.71, 0.44, -0.03], [0.79, 0.44, -0.04], [-0.79, 0.44, -0.04],
])

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class BodyModelSpec:
    template: np.ndarray          # (V, 3)
    shape_basis: np.ndarray       # (B, V, 3)
    joint_regressor: np.ndarray   # (K, V)
    skin_weights: np.ndarray      # (V, K)
    parents: tuple                # length K, parents[0] == -1
    pose_basis: np.ndarray = None  # ((K-1)*9, V, 3) or None
    faces: np.ndarray = field(default=None)  # (F, 3) int, optional

    @property
    def vertex_count(self):
        return self.template.shape[0]

    @property
    def joint_count(self):
        return self.joint_regressor.shape[0]

    @property
    def shape_count(self):
        return self.shape_basis.shape[0]

    def to_dict(self):
        d = {
            "vertex_count": self.vertex_count,
            "joint_count": self.joint_count,
            "shape_count": self.shape_count,
            "template": self.template.tolist(),
            "shape_basis": self.shape_basis.tolist(),
            "joint_regressor": self.joint_regressor.tolist(),
            "skin_weights": self.skin_weights.tolist(),
            "parents": [None if p < 0 else int(p) for p in self.parents],
        }
        if self.pose_basis is not None:
            d["pose_basis"] = self.pose_basis.tolist()
        if self.faces is not None:
            d["faces"] = self.faces.tolist()
        return d


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _array(d, key, shape, dtype=np.float64):
    if key not in d:
        _fail(key, "missing field")
    try:
        a = np.asarray(d[key], dtype=dtype)
    except (TypeError, ValueError) as exc:
        _fail(key, f"not a numeric array ({exc})")
    if a.shape != shape:
        _fail(key, f"expected shape {shape}, got {a.shape}")
    if dtype is np.float64 and not np.isfinite(a).all():
        idx = tuple(int(i) for i in np.argwhere(~np.isfinite(a))[0])
        _fail(f"{key}{list(idx)}", "non-finite value")
    return a


def validate_model(spec):
    """Check every model invariant, raising ConfigError on the first violation."""
    V, K, B = spec.vertex_count, spec.joint_count, spec.shape_count
    if spec.template.shape != (V, 3):
        _fail("template", f"expected shape ({V}, 3)")
    if spec.shape_basis.shape != (B, V, 3):
        _fail("shape_basis", f"expected shape ({B}, {V}, 3)")
    if spec.joint_regressor.shape != (K, V):
        _fail("joint_regressor", f"expected shape ({K}, {V})")
    if spec.skin_weights.shape != (V, K):
        _fail("skin_weights", f"expected shape ({V}, {K})")
    if (spec.joint_regressor < 0).any():
        r, c = np.argwhere(spec.joint_regressor < 0)[0]
        _fail(f"joint_regressor[{r}][{c}]", "negative weight")
    for name, arr in (("joint_regressor", spec.joint_regressor), ("skin_weights", spec.skin_weights)):
        sums = arr.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-6)
        if bad.size:
            _fail(f"{name}[{bad[0]}]", f"row sums to {sums[bad[0]]!r}, expected 1")
    if len(spec.parents) != K:
        _fail("parents", f"expected {K} entries, got {len(spec.parents)}")
    if spec.parents[0] != -1:
        _fail("parents[0]", "root joint 0 must have no parent")
    for k in range(1, K):
        p = spec.parents[k]
        # parents precede children, which also rules out cycles
        if not 0 <= p < k:
            _fail(f"parents[{k}]", f"parent {p} must be an earlier joint index")
    if spec.pose_basis is not None and spec.pose_basis.shape != ((K - 1) * 9, V, 3):
        _fail("pose_basis", f"expected shape ({(K - 1) * 9}, {V}, 3)")
    if spec.faces is not None:
        f = spec.faces
        if f.ndim != 2 or f.shape[1] != 3:
            _fail("faces", "expected shape (F, 3)")
        if f.size and (f.min() < 0 or f.max() >= V):
            _fail("faces", "vertex index out of range")
    return spec


def model_from_dict(d):
    for key in ("vertex_count", "joint_count", "shape_count"):
        if not isinstance(d.get(key), int) or d[key] < 1:
            _fail(key, "must be a positive integer")
    V, K, B = d["vertex_count"], d["joint_count"], d["shape_count"]
    template = _array(d, "template", (V, 3))
    shape_basis = _array(d, "shape_basis", (B, V, 3))
    regressor = _array(d, "joint_regressor", (K, V))
    skin = _array(d, "skin_weights", (V, K))
    parents = d.get("parents")
    if not isinstance(parents, list):
        _fail("parents", "missing or not a list")
    parents = tuple(-1 if p is None else p for p in parents)
    for k, p in enumerate(parents):
        if not isinstance(p, int):
            _fail(f"parents[{k}]", "must be an integer or null")
    pose_basis = None
    if d.get("pose_basis") is not None:
        pose_basis = _array(d, "pose_basis", ((K - 1) * 9, V, 3))
    faces = None
    if d.get("faces") is not None:
        faces = np.asarray(d["faces"], dtype=np.int64).reshape(-1, 3)
    spec = BodyModelSpec(template, shape_basis, regressor, skin, parents, pose_basis, faces)
    return validate_model(spec)


def load_model(path):
    with open(path) as f:
        return model_from_dict(json.load(f))


def save_model(spec, path):
    with open(path, "w") as f:
        json.dump(spec.to_dict(), f)


def wrap_axis_angle(aa):
    """Reduce rotation angles to [0, 2*pi] without changing the rotation."""
    aa = np.array(aa, dtype=np.float64)
    norms = np.linalg.norm(aa, axis=-1, keepdims=True)
    over = norms > _TWO_PI
    wrapped = np.mod(norms, _TWO_PI)
    scale = np.where(over, wrapped / np.where(norms > 0, norms, 1.0), 1.0)
    return aa * scale


class BodyParams:
    """Pose (K axis-angle vectors, radians) and shape (B PCA coefficients)."""

    __slots__ = ("pose", "shape")

    def __init__(self, pose, shape):
        pose = np.asarray(pose, dtype=np.float64).reshape(-1, 3)
        shape = np.asarray(shape, dtype=np.float64).reshape(-1)
        if not (np.isfinite(pose).all() and np.isfinite(shape).all()):
            raise ValueError("BodyParams must be finite")
        self.pose = wrap_axis_angle(pose)
        self.shape = shape

    @classmethod
    def zeros(cls, joint_count, shape_count):
        return cls(np.zeros((joint_count, 3)), np.zeros(shape_count))

    def to_dict(self):
        return {"pose": self.pose.tolist(), "shape": self.shape.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["pose"], d["shape"])


def rodrigues(aa):
    """Axis-angle 3-vector(s) to rotation matrices; accepts (3,) or (N, 3)."""
    aa = np.asarray(aa, dtype=np.float64)
    single = aa.ndim == 1
    aa = aa.reshape(-1, 3)
    theta = np.linalg.norm(aa, axis=1)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    axis = aa / safe[:, None]
    x, y, z = axis[:, 0], axis[:, 1], axis[:, 2]
    zero = np.zeros_like(x)
    skew = np.stack([zero, -z, y, z, zero, -x, -y, x, zero], axis=1).reshape(-1, 3, 3)
    s = np.sin(theta)[:, None, None]
    c = np.cos(theta)[:, None, None]
    eye = np.eye(3)
    R = eye + s * skew + (1.0 - c) * (skew @ skew)
    if small.any():
        # first-order expansion: I + [aa]_x
        a = aa[small]
        ax, ay, az = a[:, 0], a[:, 1], a[:, 2]
        z0 = np.zeros_like(ax)
        k = np.stack([z0, -az, ay, az, z0, -ax, -ay, ax, z0], axis=1).reshape(-1, 3, 3)
        R[small] = eye + k
    return R[0] if single else R


def _check_params(spec, params):
    K, B = spec.joint_count, spec.shape_count
    if params.pose.shape != (K, 3):
        raise ShapeError(f"pose has shape {params.pose.shape}, model expects ({K}, 3)")
    if params.shape.shape != (B,):
        raise ShapeError(f"shape has {params.shape.shape[0]} coefficients, model expects {B}")


def regress_joints(spec, vertices):
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.shape != (spec.vertex_count, 3):
        raise ShapeError(f"vertices {vertices.shape} vs model ({spec.vertex_count}, 3)")
    return spec.joint_regressor @ vertices


def forward(spec, params, root_transform=None):
    """Pose and shape the model.

    ``root_transform`` is an optional rigid motion ``(R, t)`` premultiplied
    onto the root world transform. Returns ``(vertices (V, 3), joints (K, 3))``
    where joints are the posed joint locations.
    """
    _check_params(spec, params)
    K = spec.joint_count
    shaped = spec.template + np.tensordot(params.shape, spec.shape_basis, axes=1)
    rest_joints = spec.joint_regressor @ shaped
    rots = rodrigues(params.pose)

    posed = shaped
    if spec.pose_basis is not None:
        pose_feature = (rots[1:] - np.eye(3)).reshape(-1)
        posed = shaped + np.tensordot(pose_feature, spec.pose_basis, axes=1)

    # rel[k] = world_k * inverse(rest_k), composed down the tree as
    # rel[p] * [R_k, (I - R_k) J_k]; at zero pose every factor is exactly I
    rel = np.empty((K, 4, 4))
    local = np.zeros((4, 4))
    local[3, 3] = 1.0
    root = np.eye(4)
    if root_transform is not None:
        R, t = root_transform
        root[:3, :3] = R
        root[:3, 3] = t
    for k in range(K):
        p = spec.parents[k]
        local[:3, :3] = rots[k]
        local[:3, 3] = rest_joints[k] - rots[k] @ rest_joints[k]
        rel[k] = (root if p < 0 else rel[p]) @ local

    joints = np.einsum("kij,kj->ki", rel[:, :3, :3], rest_joints) + rel[:, :3, 3]
    # blend the offsets from identity so unposed vertices pass through untouched
    offset = rel.copy()
    offset[:, :3, :3] -= np.eye(3)
    blended = np.tensordot(spec.skin_weights, offset, axes=1)  # (V, 4, 4)
    vertices = posed + np.einsum("vij,vj->vi", blended[:, :3, :3], posed) + blended[:, :3, 3]
    return vertices, joints


def _ring_faces(start, count):
    """Faces for a cluster laid out as two stacked rings (or a single fan)."""
    faces = []
    if count >= 6:
        c = count // 2
        for i in range(c):
            a, b = start + i, start + (i + 1) % c
            a2, b2 = a + c, b + c
            faces.append((a, b, b2))
            faces.append((a, b2, a2))
    elif count >= 3:
        for i in range(1, count - 1):
            faces.append((start, start + i, start + i + 1))
    return faces


def make_toy_model(seed, V, K, B, pose_correctives=False):
    """Deterministic synthetic body model.

    Each joint owns a cluster of vertices arranged on rings around its rest
    location; the regressor averages the cluster so regressed rest joints sit
    at the cluster centroid. K=24 reuses the SMPL kinematic tree, other joint
    counts get a random chain/star tree.
    """
    if not (isinstance(V, int) and isinstance(K, int) and isinstance(B, int)):
        raise ConfigError("V, K, B must be integers")
    if K < 1 or V < K or B < 1:
        raise ConfigError(f"invalid toy model dimensions V={V}, K={K}, B={B}")
    rng = np.random.default_rng(seed)

    if K == SMPL_JOINT_COUNT:
        parents = SMPL_PARENTS
        joint_pos = SMPL_REST_JOINTS.copy()
    else:
        parents = [-1]
        joint_pos = np.zeros((K, 3))
        for k in range(1, K):
            p = int(rng.integers(max(0, k - 3), k))
            parents.append(p)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            joint_pos[k] = joint_pos[p] + direction * rng.uniform(0.1, 0.3)
        parents = tuple(parents)

    sizes = np.full(K, V // K)
    sizes[: V % K] += 1
    template = np.empty((V, 3))
    regressor = np.zeros((K, V))
    skin = np.zeros((V, K))
    faces = []
    start = 0
    for k in range(K):
        m = int(sizes[k])
        radius = rng.uniform(0.03, 0.06)
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        v = np.cross(u, rng.normal(size=3))
        v /= np.linalg.norm(v)
        w = np.cross(u, v)
        if m == 1:
            offsets = np.zeros((1, 3))
        elif m >= 6:
            c = m // 2
            ang = 2 * np.pi * np.arange(c) / c
            ring = radius * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)
            h = 0.5 * radius * w
            offsets = np.concatenate([ring + h, ring - h, np.zeros((m - 2 * c, 3))])
        else:
            ang = 2 * np.pi * np.arange(m) / m
            offsets = radius * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)
        idx = slice(start, start + m)
        template[idx] = joint_pos[k] + offsets
        regressor[k, idx] = 1.0 / m
        p = parents[k]
        if p < 0:
            skin[idx, k] = 1.0
        else:
            own = rng.uniform(0.6, 1.0, size=m)
            skin[idx, k] = own
            skin[idx, p] = 1.0 - own
        faces.extend(_ring_faces(start, m))
        start += m

    shape_basis = rng.normal(scale=0.01, size=(B, V, 3))
    pose_basis = None
    if pose_correctives:
        pose_basis = rng.normal(scale=0.002, size=((K - 1) * 9, V, 3))
    face_arr = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    spec = BodyModelSpec(template, shape_basis, regressor, skin, tuple(parents), pose_basis, face_arr)
    return validate_model(spec)
