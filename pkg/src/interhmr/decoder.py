"""Interaction-aware DETR-style decoder.

One layer: query self-attention, cross-attention to image tokens and an FFN
give intermediate queries; a box head updates each query's reference box in
inverse-sigmoid space; every (human box, other box) pair is turned into an
interaction token; a masked encoder contextualizes the tokens within each
query's group, and a masked refiner lets each query attend to its own group
to produce the next layer's queries.

All sub-layers are post-norm with a residual connection.
"""
import json
from dataclasses import asdict, dataclass, fields, is_dataclass

import numpy as np

from . import attention as att
from .attention import (
    AttnWeights,
    BlockWeights,
    FFNWeights,
    InteractionTokenSet,
    NormWeights,
)
from .camera import DEFAULT_FOCAL, DEFAULT_IMG_EXTENT, clamp_boxes
from .errors import ConfigError, ShapeError
from .numerics import inv_sigmoid, linear, relu, sigmoid
from .persons import derive_persons

CHECKPOINT_VERSION = 1
DEFAULT_CAM_SCALE = 0.25
CONF_CLIP = 1e-7


@dataclass(frozen=True)
class DecoderConfig:
    n_queries: int = 50
    d_model: int = 768
    n_heads: int = 8
    ffn_dim: int = 2048
    n_layers: int = 6
    # first layer running the interaction stage; n_layers disables interaction entirely
    interaction_start_layer: int = 0
    use_cie: bool = True

    def __post_init__(self):
        if min(self.n_queries, self.d_model, self.n_heads, self.ffn_dim, self.n_layers) < 1:
            raise ConfigError(f"decoder sizes must be positive: {self}")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0 <= self.interaction_start_layer <= self.n_layers:
            raise ConfigError(
                f"interaction_start_layer {self.interaction_start_layer} outside [0, {self.n_layers}]"
            )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(eq=False)
class LayerWeights:
    self_attn: AttnWeights
    norm_sa: NormWeights
    cross_attn: AttnWeights
    norm_ca: NormWeights
    ffn: FFNWeights
    norm_ffn: NormWeights
    proj_w: np.ndarray   # (feature_dim, d_model), interaction feature projection
    proj_b: np.ndarray
    cie: BlockWeights
    igr: BlockWeights


@dataclass(eq=False)
class HeadWeights:
    conf_w: np.ndarray
    conf_b: np.ndarray
    shape_w: np.ndarray
    shape_b: np.ndarray
    pose_w: np.ndarray
    pose_b: np.ndarray
    cam_w: np.ndarray
    cam_b: np.ndarray
    bbox_w1: np.ndarray
    bbox_b1: np.ndarray
    bbox_w2: np.ndarray
    bbox_b2: np.ndarray


@dataclass(eq=False)
class DecoderWeights:
    config: DecoderConfig
    joint_count: int
    shape_count: int
    feature_dim: int
    query_embed: np.ndarray  # (n_queries, d_model)
    ref_points: np.ndarray   # (n_queries, 4), initial reference boxes
    layers: list
    heads: HeadWeights


@dataclass(eq=False)
class HumanQueryState:
    queries: np.ndarray
    ref_boxes: np.ndarray
    layer: int = 0


# ---------------------------------------------------------------- init

def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _attn(rng, d):
    parts = []
    for _ in range(4):
        parts += [_uniform(rng, d, (d, d)), _uniform(rng, d, (d,))]
    return AttnWeights(*parts)


def _ffn(rng, d, hidden):
    return FFNWeights(
        _uniform(rng, d, (d, hidden)), _uniform(rng, d, (hidden,)),
        _uniform(rng, hidden, (hidden, d)), _uniform(rng, hidden, (d,)),
    )


def _norm(d):
    return NormWeights(np.ones(d), np.zeros(d))


def init_block(rng, d, hidden):
    """Random attention+FFN block weights (interaction encoder and refiner)."""
    return BlockWeights(_attn(rng, d), _norm(d), _ffn(rng, d, hidden), _norm(d))


def init_weights(config, seed, joint_count=24, shape_count=10, feature_dim=768):
    """Seeded initialization, uniform in +-1/sqrt(fan_in).

    The final box-head layer is zero so the first reference-box update is the
    identity.
    """
    rng = np.random.default_rng(seed)
    d, f = config.d_model, config.ffn_dim
    layers = []
    for _ in range(config.n_layers):
        layers.append(LayerWeights(
            self_attn=_attn(rng, d), norm_sa=_norm(d),
            cross_attn=_attn(rng, d), norm_ca=_norm(d),
            ffn=_ffn(rng, d, f), norm_ffn=_norm(d),
            proj_w=_uniform(rng, feature_dim, (feature_dim, d)),
            proj_b=_uniform(rng, feature_dim, (d,)),
            cie=init_block(rng, d, f), igr=init_block(rng, d, f),
        ))
    heads = HeadWeights(
        conf_w=_uniform(rng, d, (d, 1)), conf_b=_uniform(rng, d, (1,)),
        shape_w=_uniform(rng, d, (d, shape_count)), shape_b=_uniform(rng, d, (shape_count,)),
        pose_w=_uniform(rng, d, (d, joint_count * 3)), pose_b=_uniform(rng, d, (joint_count * 3,)),
        cam_w=_uniform(rng, d, (d, 3)), cam_b=_uniform(rng, d, (3,)),
        bbox_w1=_uniform(rng, d, (d, d)), bbox_b1=_uniform(rng, d, (d,)),
        bbox_w2=np.zeros((d, 4)), bbox_b2=np.zeros(4),
    )
    query_embed = rng.uniform(-1.0, 1.0, size=(config.n_queries, d))
    ref_points = np.concatenate([
        rng.uniform(0.1, 0.9, size=(config.n_queries, 2)),
        rng.uniform(0.05, 0.3, size=(config.n_queries, 2)),
    ], axis=1)
    return DecoderWeights(config, joint_count, shape_count, feature_dim,
                          query_embed, ref_points, layers, heads)


# ---------------------------------------------------------------- geometry

def update_ref_box(p, delta):
    """New box = sigmoid(inverse_sigmoid(p) + delta), per coordinate."""
    p = np.asarray(p, dtype=np.float64)
    out = sigmoid(inv_sigmoid(p) + np.asarray(delta, dtype=np.float64))
    return clamp_boxes(out)


def enumerate_pairs(human_boxes, object_boxes):
    """(query index, partner box) for every human box against all other boxes.

    Partners of query i are the other human boxes in index order followed by
    all object boxes, n*(n+r-1) pairs in total.
    """
    human_boxes = np.asarray(human_boxes, dtype=np.float64).reshape(-1, 4)
    object_boxes = np.asarray(object_boxes, dtype=np.float64).reshape(-1, 4)
    pairs = []
    for i in range(human_boxes.shape[0]):
        for j in range(human_boxes.shape[0]):
            if j != i:
                pairs.append((i, human_boxes[j]))
        for box in object_boxes:
            pairs.append((i, box))
    return pairs


def sine_position_encoding(xy, d, temperature=10000.0):
    """Sinusoidal encoding of 2-D points in [0, 1]; half the width per axis."""
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2) * (2 * np.pi)
    parts = []
    for axis, width in ((0, d // 2), (1, d - d // 2)):
        i = np.arange(width)
        freq = temperature ** (2 * (i // 2) / max(width, 1))
        angle = xy[:, axis:axis + 1] / freq
        parts.append(np.where(i % 2 == 0, np.sin(angle), np.cos(angle)))
    return np.concatenate(parts, axis=1)


def bbox_head(q, heads):
    return linear(relu(linear(q, heads.bbox_w1, heads.bbox_b1)), heads.bbox_w2, heads.bbox_b2)


# ---------------------------------------------------------------- layer

def build_interaction_tokens(human_boxes, source, layer_w, d_model):
    """Pair enumeration, feature extraction and projection for one sample."""
    n = human_boxes.shape[0]
    objects = np.asarray(source.object_boxes, dtype=np.float64).reshape(-1, 4)
    pairs = enumerate_pairs(human_boxes, objects)
    size = n + objects.shape[0] - 1
    if not pairs:
        return InteractionTokenSet(np.zeros((0, d_model)), np.zeros(n, dtype=np.int64))
    bh = human_boxes[[i for i, _ in pairs]]
    be = np.stack([b for _, b in pairs])
    feats = np.asarray(source.features(bh, be), dtype=np.float64)
    if feats.shape != (len(pairs), layer_w.proj_w.shape[0]):
        raise ShapeError(f"interaction features {feats.shape}, expected ({len(pairs)}, {layer_w.proj_w.shape[0]})")
    return InteractionTokenSet(linear(feats, layer_w.proj_w, layer_w.proj_b), np.full(n, size))


def decoder_layer(state, image_tokens, source, weights, layer_index=None):
    """One decoder layer; ``source`` supplies object boxes and pair features.

    ``source`` may be None, which skips the interaction stage.
    """
    cfg = weights.config
    l = state.layer if layer_index is None else layer_index
    w = weights.layers[l]
    h = cfg.n_heads
    q = state.queries
    pos = sine_position_encoding(state.ref_boxes[:, :2], cfg.d_model)

    sa = att.multi_head_attention(q, q, w.self_attn, h, pos_q=pos, pos_k=pos)
    q = att.add_norm(q, sa, w.norm_sa)
    ca = att.multi_head_attention(q, image_tokens, w.cross_attn, h, pos_q=pos)
    q = att.add_norm(q, ca, w.norm_ca)
    q_mid = att.add_norm(q, att.feed_forward(q, w.ffn), w.norm_ffn)

    boxes = update_ref_box(state.ref_boxes, bbox_head(q_mid, weights.heads))

    q_next = q_mid
    if source is not None and l >= cfg.interaction_start_layer:
        tokens = build_interaction_tokens(boxes, source, w, cfg.d_model)
        if cfg.use_cie:
            tokens = att.contextual_interaction_encoder(tokens, w.cie, h)
        q_next = att.interaction_guided_refiner(q_mid, tokens, w.igr, h)
    return HumanQueryState(q_next, boxes, l + 1)


def initial_state(weights):
    return HumanQueryState(weights.query_embed.copy(), weights.ref_points.copy(), 0)


def decoder_forward(weights, image_tokens, source):
    """Run all layers; returns the list of states after each layer."""
    image_tokens = np.asarray(image_tokens, dtype=np.float64)
    if image_tokens.ndim != 2 or image_tokens.shape[1] != weights.config.d_model:
        raise ShapeError(f"image tokens {image_tokens.shape} for d_model {weights.config.d_model}")
    state = initial_state(weights)
    states = []
    for _ in range(weights.config.n_layers):
        state = decoder_layer(state, image_tokens, source, weights)
        states.append(state)
    return states


# ---------------------------------------------------------------- heads

def decode_camera(raw):
    """Raw head output -> (s, tx, ty); a zero output is a centered camera."""
    raw = np.asarray(raw, dtype=np.float64).reshape(-1, 3)
    s = DEFAULT_CAM_SCALE * np.exp(np.clip(raw[:, 0], -10.0, 10.0))
    return np.stack([s, 0.5 + raw[:, 1], 0.5 + raw[:, 2]], axis=1)


def regress(queries, heads, model, focal=DEFAULT_FOCAL, img_extent=DEFAULT_IMG_EXTENT):
    """Apply the regression heads and derive joints, mesh, keypoints and boxes."""
    queries = np.asarray(queries, dtype=np.float64)
    n = queries.shape[0]
    K, B = model.joint_count, model.shape_count
    if heads.pose_w.shape[1] != K * 3 or heads.shape_w.shape[1] != B:
        raise ShapeError("head output sizes do not match the body model")
    conf = np.clip(sigmoid(linear(queries, heads.conf_w, heads.conf_b)[:, 0]), CONF_CLIP, 1 - CONF_CLIP)
    shape = linear(queries, heads.shape_w, heads.shape_b)
    pose = linear(queries, heads.pose_w, heads.pose_b).reshape(n, K, 3)
    cam = decode_camera(linear(queries, heads.cam_w, heads.cam_b))
    return derive_persons(model, pose, shape, cam, conf, focal, img_extent)


# ---------------------------------------------------------------- checkpoint

def _flatten(obj, prefix, out):
    if is_dataclass(obj):
        for f in fields(obj):
            _flatten(getattr(obj, f.name), f"{prefix}{f.name}.", out)
    elif isinstance(obj, list):
        for i, item in enumerate(obj):
            _flatten(item, f"{prefix}{i}.", out)
    else:
        out[prefix[:-1]] = np.asarray(obj, dtype=np.float64)


def _weight_arrays(weights):
    out = {}
    _flatten(weights.query_embed, "query_embed.", out)
    _flatten(weights.ref_points, "ref_points.", out)
    _flatten(weights.layers, "layers.", out)
    _flatten(weights.heads, "heads.", out)
    return out


def _header(weights):
    return {
        "version": CHECKPOINT_VERSION,
        "config": weights.config.to_dict(),
        "joint_count": weights.joint_count,
        "shape_count": weights.shape_count,
        "feature_dim": weights.feature_dim,
    }


def save_checkpoint(weights, path):
    arrays = _weight_arrays(weights)
    header = json.dumps(_header(weights), sort_keys=True)
    with open(path, "wb") as f:
        np.savez(f, __header__=np.array(header), **arrays)


def load_checkpoint(path):
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    with data:
        if "__header__" not in data:
            raise ConfigError(f"{path}: missing checkpoint header")
        header = json.loads(str(data["__header__"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {header.get('version')}")
        config = DecoderConfig.from_dict(header["config"])
        # build a template with the right structure, then fill it
        weights = init_weights(config, 0, header["joint_count"], header["shape_count"], header["feature_dim"])
        template = _weight_arrays(weights)
        stored = {k: data[k] for k in data.files if k != "__header__"}
    if set(stored) != set(template):
        missing = sorted(set(template) - set(stored))
        extra = sorted(set(stored) - set(template))
        raise ConfigError(f"{path}: array mismatch, missing {missing[:3]} extra {extra[:3]}")
    for name, arr in template.items():
        if stored[name].shape != arr.shape:
            raise ConfigError(f"{path}: {name} has shape {stored[name].shape}, expected {arr.shape}")
    _assign(weights, stored)
    return weights


def _assign(weights, stored):
    def fill(obj, prefix):
        if is_dataclass(obj):
            for f in fields(obj):
                val = getattr(obj, f.name)
                key = f"{prefix}{f.name}"
                if isinstance(val, np.ndarray):
                    setattr(obj, f.name, stored[key])
                else:
                    fill(val, key + ".")
        elif isinstance(obj, list):
            for i, item in enumerate(obj):
                fill(item, f"{prefix}{i}.")

    weights.query_embed = stored["query_embed"]
    weights.ref_points = stored["ref_points"]
    fill(weights.layers, "layers.")
    fill(weights.heads, "heads.")


def weights_equal(a, b):
    if _header(a) != _header(b):
        return False
    wa, wb = _weight_arrays(a), _weight_arrays(b)
    return wa.keys() == wb.keys() and all(np.array_equal(wa[k], wb[k]) for k in wa)
