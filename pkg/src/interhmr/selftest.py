"""Built-in oracle suites runnable from the CLI.

Each suite returns ``(passed, detail)``. The helpers for ragged batches are
also used by the test-suite.
"""
import time

import numpy as np

from . import attention as att
from . import body_model as bm
from .decoder import init_block
from .matching import brute_force_assign, hungarian
from .metrics import pa_mpjpe

# small hand-checkable layout: 2 queries, batch of 3 with 2/1/3 detected objects
REFERENCE_LAYOUT_OBJECTS = (2, 1, 3)
REFERENCE_LAYOUT_QUERIES = 2


# ---------------------------------------------------------------- ragged batches

def ragged_group_sizes(n_queries, objects_per_sample):
    """Group size n + r_b - 1 for every query of every sample, flattened."""
    return [n_queries + r - 1 for r in objects_per_sample for _ in range(n_queries)]


def random_ragged_batch(rng, d, n_range=(1, 6), r_range=(0, 5), batch_range=(1, 3)):
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    b = int(rng.integers(batch_range[0], batch_range[1] + 1))
    objects = [int(rng.integers(r_range[0], r_range[1] + 1)) for _ in range(b)]
    return make_batch(rng, d, n, objects)


def make_batch(rng, d, n_queries, objects):
    sizes = ragged_group_sizes(n_queries, objects)
    tokens = att.InteractionTokenSet(rng.normal(size=(sum(sizes), d)), sizes)
    queries = rng.normal(size=(len(sizes), d))
    return queries, tokens


def interaction_stage(queries, tokens, cie_w, igr_w, n_heads):
    ctx = att.contextual_interaction_encoder(tokens, cie_w, n_heads)
    return ctx, att.interaction_guided_refiner(queries, ctx, igr_w, n_heads)


def check_isolation(queries, tokens, cie_w, igr_w, n_heads, rng, token_ids=None):
    """Perturb tokens one at a time; only the owning group/query may change.

    Returns a list of violation strings (empty when isolated).
    """
    base_ctx, base_q = interaction_stage(queries, tokens, cie_w, igr_w, n_heads)
    owner = tokens.owner()
    ids = range(tokens.tokens.shape[0]) if token_ids is None else token_ids
    problems = []
    for t in ids:
        g = owner[t]
        pert = tokens.tokens.copy()
        pert[t] += rng.normal(size=pert.shape[1])
        ctx, q = interaction_stage(queries, att.InteractionTokenSet(pert, tokens.sizes), cie_w, igr_w, n_heads)
        others = owner != g
        if not np.array_equal(ctx.tokens[others], base_ctx.tokens[others]):
            problems.append(f"encoder leak from token {t} (group {g})")
        rows = np.arange(queries.shape[0]) != g
        if not np.array_equal(q[rows], base_q[rows]):
            problems.append(f"refiner leak from token {t} (group {g})")
        if np.array_equal(q[g], base_q[g]):
            problems.append(f"token {t} had no effect on its own query {g}")
    return problems


def per_group_reference(queries, tokens, cie_w, igr_w, n_heads):
    """Unmasked per-group loop computing the same encoder/refiner outputs."""
    ctx_parts = []
    q_out = queries.copy()
    for g in range(tokens.n_groups):
        grp = tokens.group(g)
        if grp.shape[0] == 0:
            continue
        ctx = att.self_attention_block(grp, cie_w, n_heads)
        ctx_parts.append(ctx)
        q_out[g] = att.cross_attention_block(queries[g:g + 1], ctx, igr_w, n_heads)[0]
    d = tokens.tokens.shape[1]
    ctx_flat = np.concatenate(ctx_parts) if ctx_parts else np.zeros((0, d))
    return ctx_flat, q_out


def batch_equivalence_error(queries, tokens, cie_w, igr_w, n_heads):
    ctx, q = interaction_stage(queries, tokens, cie_w, igr_w, n_heads)
    ref_ctx, ref_q = per_group_reference(queries, tokens, cie_w, igr_w, n_heads)
    err = np.abs(q - ref_q).max() if q.size else 0.0
    if ctx.tokens.size:
        err = max(err, np.abs(ctx.tokens - ref_ctx).max())
    return float(err)


def interaction_weights(seed, d=16, hidden=32):
    rng = np.random.default_rng(seed)
    return init_block(rng, d, hidden), init_block(rng, d, hidden)


# ---------------------------------------------------------------- suites

def suite_hungarian(instances=300, seed=1):
    rng = np.random.default_rng(seed)
    for k in range(instances):
        n, m = (int(x) for x in rng.integers(1, 8, size=2))
        c = rng.normal(size=(n, m)) if k % 4 else rng.integers(0, 3, size=(n, m)).astype(float)
        a, b = hungarian(c), brute_force_assign(c)
        if abs(a.cost - b.cost) > 1e-9 or a.pairs != b.pairs:
            return False, f"instance {k} ({n}x{m}): {a.pairs} vs {b.pairs}"
    return True, f"{instances} instances"


def suite_mask_isolation(batches=20, seed=2, d=16, n_heads=4):
    rng = np.random.default_rng(seed)
    cie_w, igr_w = interaction_weights(seed, d)
    layouts = [make_batch(rng, d, REFERENCE_LAYOUT_QUERIES, REFERENCE_LAYOUT_OBJECTS)]
    layouts += [random_ragged_batch(rng, d) for _ in range(batches - 1)]
    for k, (q, tokens) in enumerate(layouts):
        problems = check_isolation(q, tokens, cie_w, igr_w, n_heads, rng)
        if problems:
            return False, f"batch {k}: {problems[0]}"
    return True, f"{batches} batches"


def suite_batch_equivalence(batches=20, seed=3, d=16, n_heads=4):
    rng = np.random.default_rng(seed)
    cie_w, igr_w = interaction_weights(seed, d)
    worst = 0.0
    layouts = [make_batch(rng, d, REFERENCE_LAYOUT_QUERIES, REFERENCE_LAYOUT_OBJECTS)]
    layouts += [random_ragged_batch(rng, d) for _ in range(batches - 1)]
    for q, tokens in layouts:
        worst = max(worst, batch_equivalence_error(q, tokens, cie_w, igr_w, n_heads))
    return worst <= 1e-9, f"max abs diff {worst:.3e}"


def random_similarity(rng):
    R = bm.rodrigues(rng.normal(size=3))
    return float(rng.uniform(0.5, 2.0)), R, rng.normal(size=3)


def suite_procrustes(trials=50, seed=4):
    rng = np.random.default_rng(seed)
    for k in range(trials):
        gt = rng.normal(scale=0.3, size=(24, 3))
        pred = gt + rng.normal(scale=0.03, size=gt.shape)
        s, R, t = random_similarity(rng)
        moved = s * pred @ R.T + t
        a, b = pa_mpjpe(pred, gt), pa_mpjpe(moved, gt)
        if abs(a - b) > 1e-6:
            return False, f"trial {k}: {a} vs {b}"
        if pa_mpjpe(s * gt @ R.T + t, gt) > 1e-6:
            return False, f"trial {k}: exact fit not recovered"
    return True, f"{trials} transforms"


def suite_lbs_rigid(trials=20, seed=5):
    rng = np.random.default_rng(seed)
    model = bm.make_toy_model(seed, 120, 24, 10, pose_correctives=True)
    worst = 0.0
    for _ in range(trials):
        params = bm.BodyParams(rng.normal(scale=0.3, size=(24, 3)), rng.normal(size=10))
        v, j = bm.forward(model, params)
        R = bm.rodrigues(rng.normal(size=3))
        t = rng.normal(size=3)
        v2, j2 = bm.forward(model, params, root_transform=(R, t))
        worst = max(worst, np.abs(v2 - (v @ R.T + t)).max(), np.abs(j2 - (j @ R.T + t)).max())
    return worst <= 1e-9, f"max abs diff {worst:.3e}"


SUITES = (
    ("hungarian_vs_bruteforce", suite_hungarian),
    ("mask_isolation", suite_mask_isolation),
    ("batch_equivalence", suite_batch_equivalence),
    ("procrustes_invariance", suite_procrustes),
    ("lbs_rigid_invariance", suite_lbs_rigid),
)


def selftest(inject_fault=False, out=print):
    """Run every suite, print a table, return ``(all_passed, rows)``."""
    rows = []
    for name, fn in SUITES:
        start = time.perf_counter()
        try:
            if inject_fault:
                with att.inject_mask_fault():
                    passed, detail = fn()
            else:
                passed, detail = fn()
        except Exception as exc:  # a crashing suite is a failing suite
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        rows.append({"suite": name, "passed": bool(passed), "detail": detail,
                     "seconds": round(time.perf_counter() - start, 3)})
    if out is not None:
        width = max(len(r["suite"]) for r in rows)
        for r in rows:
            status = "PASS" if r["passed"] else "FAIL"
            out(f"{r['suite']:<{width}}  {status}  {r['seconds']:7.2f}s  {r['detail']}")
    return all(r["passed"] for r in rows), rows
