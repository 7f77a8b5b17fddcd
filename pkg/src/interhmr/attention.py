"""Multi-head attention, feed-forward blocks and ragged-group masks.

Interaction tokens of many queries (possibly from many samples) are
flattened into one sequence; group structure is expressed with block masks
so each query's tokens only see each other.
"""
import contextlib
import contextvars
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .numerics import layer_norm, linear, masked_softmax, matmul, relu

_mask_fault = contextvars.ContextVar("mask_fault", default=False)


@contextlib.contextmanager
def inject_mask_fault():
    """Test hook: flip one disallowed bit in every group mask built inside."""
    token = _mask_fault.set(True)
    try:
        yield
    finally:
        _mask_fault.reset(token)


def _maybe_fault(mask):
    if _mask_fault.get():
        off = np.argwhere(~mask)
        if len(off):
            r, c = off[0]
            mask = mask.copy()
            mask[r, c] = True
    return mask


@dataclass(eq=False)
class InteractionTokenSet:
    """Flat ``(T, d)`` token sequence split into consecutive groups.

    Group g owns rows ``offsets[g] : offsets[g] + sizes[g]``.
    """

    tokens: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        self.sizes = np.asarray(self.sizes, dtype=np.int64).reshape(-1)
        if (self.sizes < 0).any():
            raise ShapeError("group sizes must be >= 0")
        if self.tokens.ndim != 2 or self.tokens.shape[0] != int(self.sizes.sum()):
            raise ShapeError(
                f"{self.tokens.shape[0] if self.tokens.ndim else 0} tokens "
                f"for groups totalling {int(self.sizes.sum())}"
            )

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)

    @property
    def n_groups(self):
        return self.sizes.shape[0]

    def group(self, g):
        o = int(self.offsets[g])
        return self.tokens[o:o + int(self.sizes[g])]

    def owner(self):
        """Group index of every token."""
        return np.repeat(np.arange(self.n_groups), self.sizes)

    @classmethod
    def from_groups(cls, groups, d):
        sizes = [len(g) for g in groups]
        parts = [np.asarray(g, dtype=np.float64).reshape(-1, d) for g in groups]
        tokens = np.concatenate(parts) if parts else np.zeros((0, d))
        return cls(tokens, sizes)


def block_diagonal_mask(sizes):
    """(T, T) mask allowing attention only within a group."""
    owner = np.repeat(np.arange(len(sizes)), sizes)
    return _maybe_fault(owner[:, None] == owner[None, :])


def group_query_mask(sizes):
    """(G, T) mask letting query g attend only to its own token segment."""
    sizes = np.asarray(sizes, dtype=np.int64)
    owner = np.repeat(np.arange(len(sizes)), sizes)
    return _maybe_fault(np.arange(len(sizes))[:, None] == owner[None, :])


@dataclass(eq=False)
class AttnWeights:
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray


@dataclass(eq=False)
class FFNWeights:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass(eq=False)
class NormWeights:
    gain: np.ndarray
    bias: np.ndarray


@dataclass(eq=False)
class BlockWeights:
    """Attention sub-layer plus FFN sub-layer, each followed by residual + norm."""

    attn: AttnWeights
    norm1: NormWeights
    ffn: FFNWeights
    norm2: NormWeights


def multi_head_attention(x_q, x_kv, w, n_heads, mask=None, pos_q=None, pos_k=None):
    """Scaled dot-product attention over ``n_heads`` heads.

    Positional terms are added to queries/keys only, never to values.
    """
    x_q = np.asarray(x_q, dtype=np.float64)
    x_kv = np.asarray(x_kv, dtype=np.float64)
    d = x_q.shape[1]
    if d % n_heads:
        raise ShapeError(f"width {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    q = linear(x_q if pos_q is None else x_q + pos_q, w.wq, w.bq)
    k = linear(x_kv if pos_k is None else x_kv + pos_k, w.wk, w.bk)
    v = linear(x_kv, w.wv, w.bv)
    heads = []
    scale = 1.0 / np.sqrt(dh)
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = matmul(q[:, sl], k[:, sl].T) * scale
        heads.append(matmul(masked_softmax(scores, mask), v[:, sl]))
    return linear(np.concatenate(heads, axis=1), w.wo, w.bo)


def feed_forward(x, w):
    return linear(relu(linear(x, w.w1, w.b1)), w.w2, w.b2)


def add_norm(x, delta, norm):
    return layer_norm(x + delta, norm.gain, norm.bias)


def self_attention_block(x, w, n_heads, mask=None):
    x = add_norm(x, multi_head_attention(x, x, w.attn, n_heads, mask), w.norm1)
    return add_norm(x, feed_forward(x, w.ffn), w.norm2)


def cross_attention_block(q, kv, w, n_heads, mask=None):
    q = add_norm(q, multi_head_attention(q, kv, w.attn, n_heads, mask), w.norm1)
    return add_norm(q, feed_forward(q, w.ffn), w.norm2)


def contextual_interaction_encoder(tokens, w, n_heads):
    """Self-attention within every query's interaction-token group.

    Runs once over the flattened sequence with a block-diagonal mask; empty
    groups contribute no rows and need no handling.
    """
    if tokens.tokens.shape[0] == 0:
        return InteractionTokenSet(tokens.tokens.copy(), tokens.sizes.copy())
    mask = block_diagonal_mask(tokens.sizes)
    out = self_attention_block(tokens.tokens, w, n_heads, mask)
    return InteractionTokenSet(out, tokens.sizes.copy())


def interaction_guided_refiner(queries, tokens, w, n_heads):
    """Cross-attention from each query to its own (contextualized) token group.

    Queries whose group is empty are returned unchanged.
    """
    queries = np.asarray(queries, dtype=np.float64)
    if queries.shape[0] != tokens.n_groups:
        raise ShapeError(f"{queries.shape[0]} queries for {tokens.n_groups} token groups")
    out = queries.copy()
    active = np.flatnonzero(tokens.sizes > 0)
    if active.size == 0:
        return out
    mask = group_query_mask(tokens.sizes)[active]
    out[active] = cross_attention_block(queries[active], tokens.tokens, w, n_heads, mask)
    return out
