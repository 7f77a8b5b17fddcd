import json

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from interhmr import body_model as bm
from interhmr.errors import ConfigError, ShapeError


def lbs_loop(model, params):
    """Per-joint / per-vertex reference using scipy rotations."""
    K = model.joint_count
    shaped = model.template + np.einsum("b,bvc->vc", params.shape, model.shape_basis)
    J = model.joint_regressor @ shaped
    rots = [Rotation.from_rotvec(params.pose[k]).as_matrix() for k in range(K)]
    posed = shaped.copy()
    if model.pose_basis is not None:
        feat = np.concatenate([(rots[k] - np.eye(3)).ravel() for k in range(1, K)])
        for i, f in enumerate(feat):
            posed = posed + f * model.pose_basis[i]
    G = []
    for k in range(K):
        T = np.eye(4)
        T[:3, :3] = rots[k]
        p = model.parents[k]
        T[:3, 3] = J[k] if p < 0 else J[k] - J[p]
        G.append(T if p < 0 else G[p] @ T)
    A = []
    for k in range(K):
        rest = np.eye(4)
        rest[:3, 3] = J[k]
        A.append(G[k] @ np.linalg.inv(rest))
    verts = np.zeros_like(posed)
    for v in range(posed.shape[0]):
        M = sum(model.skin_weights[v, k] * A[k] for k in range(K))
        verts[v] = (M @ np.append(posed[v], 1.0))[:3]
    return verts, np.array([g[:3, 3] for g in G])


def random_params(rng, model, scale=0.5):
    return bm.BodyParams(rng.normal(scale=scale, size=(model.joint_count, 3)), rng.normal(size=model.shape_count))


def test_rodrigues_matches_scipy(rng):
    aa = rng.normal(size=(50, 3))
    np.testing.assert_allclose(bm.rodrigues(aa), Rotation.from_rotvec(aa).as_matrix(), atol=1e-12)


def test_rodrigues_single_vector_and_zero():
    assert np.array_equal(bm.rodrigues(np.zeros(3)), np.eye(3))
    R = bm.rodrigues([0.0, 0.0, np.pi / 2])
    np.testing.assert_allclose(R @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)


def test_rodrigues_small_angle_is_orthonormal():
    R = bm.rodrigues(np.array([1e-10, -2e-10, 3e-10]))
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-15)


def test_wrap_axis_angle_same_rotation():
    aa = np.array([0.0, 0.0, 2 * np.pi + 0.3])
    w = bm.wrap_axis_angle(aa)
    assert np.linalg.norm(w) <= 2 * np.pi
    np.testing.assert_allclose(bm.rodrigues(w), bm.rodrigues(aa), atol=1e-12)


def test_forward_matches_loop_reference(rng, toy_model, toy_model_pc):
    for model in (toy_model, toy_model_pc):
        p = random_params(rng, model)
        v, j = bm.forward(model, p)
        rv, rj = lbs_loop(model, p)
        np.testing.assert_allclose(v, rv, atol=1e-10)
        np.testing.assert_allclose(j, rj, atol=1e-10)


def test_rest_pose_is_template(toy_model_pc):
    v, j = bm.forward(toy_model_pc, bm.BodyParams.zeros(24, 10))
    assert np.array_equal(v, toy_model_pc.template)
    np.testing.assert_allclose(j, toy_model_pc.joint_regressor @ toy_model_pc.template, atol=1e-15)


def test_single_joint_model_is_rigid(rng):
    model = bm.make_toy_model(3, 10, 1, 2)
    p = bm.BodyParams(rng.normal(size=(1, 3)), np.zeros(2))
    v, j = bm.forward(model, p)
    R = bm.rodrigues(p.pose[0])
    np.testing.assert_allclose(v, (model.template - j[0]) @ R.T + j[0], atol=1e-12)


def test_toy_model_is_deterministic_and_valid():
    a, b = bm.make_toy_model(5, 60, 7, 4), bm.make_toy_model(5, 60, 7, 4)
    assert np.array_equal(a.template, b.template) and a.parents == b.parents
    bm.validate_model(a)
    assert all(a.parents[k] < k for k in range(1, 7))


@pytest.mark.parametrize("V,K,B", [(5, 6, 2), (10, 0, 2), (10, 2, 0)])
def test_toy_model_rejects_bad_dims(V, K, B):
    with pytest.raises(ConfigError):
        bm.make_toy_model(0, V, K, B)


def test_param_shape_mismatch(toy_model):
    with pytest.raises(ShapeError):
        bm.forward(toy_model, bm.BodyParams.zeros(23, 10))
    with pytest.raises(ShapeError):
        bm.forward(toy_model, bm.BodyParams.zeros(24, 9))


def test_nonfinite_params_rejected():
    with pytest.raises(ValueError):
        bm.BodyParams(np.full((24, 3), np.nan), np.zeros(10))


def test_model_json_round_trip(tmp_path, toy_model_pc):
    path = tmp_path / "m.json"
    bm.save_model(toy_model_pc, path)
    loaded = bm.load_model(path)
    assert loaded.parents == toy_model_pc.parents
    assert np.array_equal(loaded.pose_basis, toy_model_pc.pose_basis)
    assert np.array_equal(loaded.faces, toy_model_pc.faces)


def _broken(model, **changes):
    d = model.to_dict()
    d.update(changes)
    return d


@pytest.mark.parametrize("change,needle", [
    ({"parents": [None, 0, 5, 1]}, "parents"),
    ({"parents": [0, 0, 1, 2]}, "parents"),
    ({"skin_weights": [[0.5, 0.0, 0.0, 0.0]] * 12}, "skin_weights"),
    ({"template": [[0.0, 0.0]] * 12}, "template"),
    ({"joint_regressor": [[1.0] * 11] * 4}, "joint_regressor"),
])
def test_model_loader_errors_name_the_field(change, needle):
    model = bm.make_toy_model(1, 12, 4, 2)
    with pytest.raises(ConfigError, match=needle):
        bm.model_from_dict(_broken(model, **change))


def test_model_loader_rejects_missing_key(tmp_path):
    model = bm.make_toy_model(1, 12, 4, 2)
    d = model.to_dict()
    del d["shape_basis"]
    path = tmp_path / "m.json"
    path.write_text(json.dumps(d))
    with pytest.raises(ConfigError, match="shape_basis"):
        bm.load_model(path)


def test_params_round_trip(rng):
    p = bm.BodyParams(rng.normal(size=(24, 3)), rng.normal(size=10))
    q = bm.BodyParams.from_dict(json.loads(json.dumps(p.to_dict())))
    assert np.array_equal(p.pose, q.pose) and np.array_equal(p.shape, q.shape)
