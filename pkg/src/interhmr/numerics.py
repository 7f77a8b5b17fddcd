"""Dense linear-algebra and neural primitives.

All arrays are float64. A "matrix" is a 2-D ndarray; an attention mask is a
boolean ndarray of the same shape as the score matrix where True marks an
allowed (row, col) pair.
"""
import numpy as np

from .errors import DegenerateRowError, ShapeError

INV_SIGMOID_EPS = 1e-6


def as_matrix(x, name="x"):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name}: expected a 2-D matrix, got shape {a.shape}")
    return a


def matmul(a, b):
    """Matrix product with explicit shape checking.

    Backed by numpy's BLAS gemm. Each output row depends only on the matching
    row of ``a`` (and all of ``b``), which the masked attention code relies on
    for bit-exact isolation between token groups.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    return a @ b


def masked_softmax(scores, mask=None):
    """Row softmax where disallowed entries get weight exactly 0.

    Masked entries are excluded from both the row max and the normalizer
    instead of being set to -inf, so no NaN can appear.
    """
    scores = as_matrix(scores, "scores")
    if mask is None:
        mask = np.ones(scores.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != scores.shape:
        raise ShapeError(f"masked_softmax: mask {mask.shape} vs scores {scores.shape}")
    allowed = mask.any(axis=1)
    if not allowed.all():
        row = int(np.flatnonzero(~allowed)[0])
        raise DegenerateRowError(f"masked_softmax: row {row} is fully masked")
    row_max = np.where(mask, scores, -np.inf).max(axis=1, keepdims=True)
    shifted = np.where(mask, scores - row_max, 0.0)
    e = np.where(mask, np.exp(shifted), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def layer_norm(x, gain, bias, eps=1e-5):
    x = as_matrix(x)
    gain = np.asarray(gain, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeError(
            f"layer_norm: gain {gain.shape} / bias {bias.shape} for width {x.shape[1]}"
        )
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    return centered / np.sqrt(var + eps) * gain + bias


def linear(x, weight, bias=None):
    """``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    y = matmul(x, weight)
    if bias is not None:
        y = y + bias
    return y


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def inv_sigmoid(p, eps=INV_SIGMOID_EPS):
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)
