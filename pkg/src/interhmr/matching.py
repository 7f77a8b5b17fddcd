"""Set-prediction matching: cost terms, optimal assignment, brute-force oracle."""
import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DomainError
from .metrics import giou, pairwise_giou

CONF_EPS = 1e-7
BRUTE_FORCE_LIMIT = 9


@dataclass(frozen=True)
class CostWeights:
    conf: float = 0.25
    bbox: float = 1.0
    giou: float = 1.0
    kpts: float = 20.0
    gamma: float = 2.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise ConfigError(f"cost weight {name} must be >= 0, got {value}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class CostTerms:
    conf: float
    bbox: float
    giou: float
    kpts: float
    total: float
    clamped: bool = False


@dataclass(eq=False)
class CostMatrix:
    total: np.ndarray
    terms: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.total.shape


@dataclass
class Assignment:
    pairs: list
    unmatched_pred: list
    unmatched_gt: list
    cost: float = 0.0


def clamp_conf(conf):
    c = np.asarray(conf, dtype=np.float64)
    clamped = bool(((c < CONF_EPS) | (c > 1 - CONF_EPS)).any())
    return np.clip(c, CONF_EPS, 1 - CONF_EPS), clamped


def conf_cost(conf, gamma=2.0):
    c, _ = clamp_conf(conf)
    out = -((1.0 - c) ** gamma) * np.log(c)
    return out if out.ndim else float(out)


def kpts_cost(pred_kpts, gt_kpts, visible=None):
    """Per-keypoint L1 (|dx| + |dy|) averaged over (visible) keypoints."""
    d = np.abs(np.asarray(pred_kpts) - np.asarray(gt_kpts)).sum(axis=-1)
    if visible is None:
        return d.mean(axis=-1)
    visible = np.asarray(visible, dtype=bool)
    n = visible.sum()
    if n == 0:
        return np.zeros(d.shape[:-1]) if d.ndim > 1 else 0.0
    return (d * visible).sum(axis=-1) / n


def cost_terms(pred_conf, pred_box, pred_kpts, gt_box, gt_kpts, w=CostWeights(), visible=None):
    """Single prediction / ground-truth matching cost breakdown."""
    c, clamped = clamp_conf(pred_conf)
    c_conf = float(-((1.0 - c) ** w.gamma) * np.log(c))
    c_bbox = float(np.abs(np.asarray(pred_box) - np.asarray(gt_box)).sum())
    c_giou = -float(giou(pred_box, gt_box))
    c_kpts = float(kpts_cost(pred_kpts, gt_kpts, visible))
    total = w.conf * c_conf + w.bbox * c_bbox + w.giou * c_giou + w.kpts * c_kpts
    return CostTerms(c_conf, c_bbox, c_giou, c_kpts, total, clamped)


def cost_matrix(pred_conf, pred_boxes, pred_kpts, gt_boxes, gt_kpts, w=CostWeights(), visible=None):
    """Vectorized cost over all (prediction, ground truth) pairs.

    ``pred_kpts`` is (N, K, 2), ``gt_kpts`` (M, K, 2); ``visible`` (M, K)
    optionally gates the keypoint term per ground truth.
    """
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    n, m = pred_boxes.shape[0], gt_boxes.shape[0]
    c_conf = np.broadcast_to(np.asarray(conf_cost(pred_conf, w.gamma)).reshape(n, 1), (n, m))
    c_bbox = np.abs(pred_boxes[:, None, :] - gt_boxes[None, :, :]).sum(axis=-1)
    c_giou = -pairwise_giou(pred_boxes, gt_boxes)
    pk = np.asarray(pred_kpts, dtype=np.float64)
    gk = np.asarray(gt_kpts, dtype=np.float64)
    d = np.abs(pk[:, None] - gk[None, :]).sum(axis=-1)  # (N, M, K)
    if visible is None:
        c_kpts = d.mean(axis=-1) if d.shape[-1] else np.zeros((n, m))
    else:
        vis = np.asarray(visible, dtype=bool)[None]
        cnt = np.maximum(vis.sum(axis=-1), 1)
        c_kpts = (d * vis).sum(axis=-1) / cnt
    total = w.conf * c_conf + w.bbox * c_bbox + w.giou * c_giou + w.kpts * c_kpts
    return CostMatrix(total, {"conf": np.array(c_conf), "bbox": c_bbox, "giou": c_giou, "kpts": c_kpts})


def _as_cost(cost):
    c = cost.total if isinstance(cost, CostMatrix) else cost
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2:
        raise DomainError(f"cost matrix must be 2-D, got shape {c.shape}")
    if not np.isfinite(c).all():
        raise DomainError("cost matrix must be finite")
    return c


def _solve_rows(c):
    """Shortest augmenting path assignment for n <= m.

    Returns ``(col_of_row, u, v)`` where u/v are the dual potentials.
    """
    n, m = c.shape
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)  # p[j]: row (1-based) assigned to column j
    way = np.zeros(m + 1, dtype=np.int64)
    a = np.zeros((n + 1, m + 1))
    a[1:, 1:] = c
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, INF)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = a[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, INF)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row, u[1:], v[1:]


def _solve(c):
    """Optimal assignment of any rectangular matrix.

    Returns ``(match, total, row_pot, col_pot)`` with ``match[i]`` the column
    of row i or -1.
    """
    n, m = c.shape
    if n == 0 or m == 0:
        return np.full(n, -1, dtype=np.int64), 0.0, np.zeros(n), np.zeros(m)
    if n <= m:
        match, u, v = _solve_rows(c)
    else:
        col_match, v, u = _solve_rows(c.T)
        match = np.full(n, -1, dtype=np.int64)
        match[col_match] = np.arange(m)
    rows = np.flatnonzero(match >= 0)
    total = float(c[rows, match[rows]].sum())
    return match, total, u, v


def _residual_cost(c, fixed):
    """Optimal cost with the rows in ``fixed`` pinned (column or -1)."""
    n, m = c.shape
    used_cols = {j for j in fixed.values() if j >= 0}
    rows = [i for i in range(n) if i not in fixed]
    cols = [j for j in range(m) if j not in used_cols]
    base = sum(c[i, j] for i, j in fixed.items() if j >= 0)
    sub = c[np.ix_(rows, cols)]
    match, sub_total, _, _ = _solve(sub)
    full = {rows[r]: (cols[match[r]] if match[r] >= 0 else -1) for r in range(len(rows))}
    return base + sub_total, full


def _tie_tolerance(c):
    scale = 1.0 + (np.abs(c).max() if c.size else 0.0)
    return 1e-10 * scale * max(c.shape + (1,))


def _make_assignment(match, n, m, c):
    pairs = [(int(i), int(j)) for i, j in enumerate(match) if j >= 0]
    matched_gt = {j for _, j in pairs}
    return Assignment(
        pairs=pairs,
        unmatched_pred=[i for i in range(n) if match[i] < 0],
        unmatched_gt=[j for j in range(m) if j not in matched_gt],
        cost=float(sum(c[i, j] for i, j in pairs)),
    )


def hungarian(cost):
    """Minimum-cost assignment of min(n_pred, n_gt) pairs.

    Among assignments whose total is optimal (to a small relative tolerance)
    the lexicographically smallest pair list is returned. Reduced costs from
    the optimal dual prune tie candidates, so exact re-solves only happen on
    genuinely tight alternatives.
    """
    c = _as_cost(cost)
    n, m = c.shape
    match, best, u, v = _solve(c)
    tol = _tie_tolerance(c)
    if n and m:
        reduced = c - u[:, None] - v[None, :]
        tight = reduced <= tol
        k = min(n, m)
        fixed = {}
        for i in range(n):
            cur = int(match[i])
            taken = {j for j in fixed.values() if j >= 0}
            limit = cur if cur >= 0 else m
            for j in range(limit):
                if j in taken or not tight[i, j]:
                    continue
                trial = dict(fixed)
                trial[i] = j
                total, full = _residual_cost(c, trial)
                if total <= best + tol:
                    for r, col in full.items():
                        match[r] = col
                    match[i] = j
                    break
            fixed[i] = int(match[i])
            n_matched = sum(1 for j in fixed.values() if j >= 0)
            if n_matched == k:
                for r in range(i + 1, n):
                    fixed[r] = -1
                    match[r] = -1
                break
    return _make_assignment(match, n, m, c)


def brute_force_assign(cost):
    """Exhaustive minimum over all injections; same tie rule as ``hungarian``."""
    c = _as_cost(cost)
    n, m = c.shape
    if max(n, m) > BRUTE_FORCE_LIMIT:
        raise DomainError(f"brute force refused for {n}x{m} (limit {BRUTE_FORCE_LIMIT})")
    k = min(n, m)
    if k == 0:
        return _make_assignment(np.full(n, -1), n, m, c)
    candidates = []
    for rows in itertools.combinations(range(n), k):
        for cols in itertools.permutations(range(m), k):
            candidates.append(tuple(zip(rows, cols)))
    idx = np.array(candidates)  # (C, k, 2)
    totals = c[idx[..., 0], idx[..., 1]].sum(axis=1)
    best = totals.min()
    tol = _tie_tolerance(c)
    ties = np.flatnonzero(totals <= best + tol)
    chosen = min(candidates[t] for t in ties)
    match = np.full(n, -1, dtype=np.int64)
    for i, j in chosen:
        match[i] = j
    return _make_assignment(match, n, m, c)
