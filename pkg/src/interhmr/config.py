"""Run configuration for the pipeline and CLI."""
import json
from dataclasses import asdict, dataclass, field, fields

from .camera import DEFAULT_FOCAL, DEFAULT_IMG_EXTENT
from .decoder import DecoderConfig
from .errors import ConfigError
from .losses import LossWeights
from .matching import CostWeights
from .metrics import DEFAULT_PCK_THRESHOLD_MM
from .provider import ProviderConfig

DEFAULT_CONF_THRESHOLD = 0.3

# Paper-size decoders (50 queries, width 768, FFN 2048) work but are slow in
# pure numpy; the run default is a narrower desk-scale decoder.
DESK_DECODER = DecoderConfig(n_queries=8, d_model=64, n_heads=8, ffn_dim=128, n_layers=6)


@dataclass(frozen=True)
class SceneParams:
    persons: tuple = (1, 4)
    objects: tuple = (0, 3)
    crowding: float = 0.0
    object_overlap: float = 0.5
    pose_std: float = 0.2
    scale_range: tuple = (0.15, 0.35)

    def __post_init__(self):
        for name in ("persons", "objects"):
            lo, hi = getattr(self, name)
            if not (isinstance(lo, int) and isinstance(hi, int)) or lo < 0 or lo > hi:
                raise ConfigError(f"scene.{name}: invalid range [{lo}, {hi}]")
        if not 0.0 <= self.crowding <= 1.0:
            raise ConfigError(f"scene.crowding must be in [0, 1], got {self.crowding}")
        if not 0.0 <= self.object_overlap <= 1.0:
            raise ConfigError(f"scene.object_overlap must be in [0, 1], got {self.object_overlap}")
        if self.pose_std < 0:
            raise ConfigError("scene.pose_std must be >= 0")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ConfigError(f"scene.scale_range: invalid range [{lo}, {hi}]")


@dataclass(frozen=True)
class BodyConfig:
    seed: int = 0
    vertex_count: int = 240
    joint_count: int = 24
    shape_count: int = 10
    pose_correctives: bool = False
    model_path: str = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    scene: SceneParams = field(default_factory=SceneParams)
    body: BodyConfig = field(default_factory=BodyConfig)
    decoder: DecoderConfig = DESK_DECODER
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    cost_weights: CostWeights = field(default_factory=CostWeights)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    conf_threshold: float = DEFAULT_CONF_THRESHOLD
    pck_threshold_mm: float = DEFAULT_PCK_THRESHOLD_MM
    focal: float = DEFAULT_FOCAL
    img_extent: float = DEFAULT_IMG_EXTENT
    image_size: tuple = (1288, 1288)
    detector_noise: float = 0.02
    detector_max_out: int = 100
    image_grid: int = 4
    image_noise: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.conf_threshold <= 1.0:
            raise ConfigError(f"conf_threshold must be in [0, 1], got {self.conf_threshold}")
        if not self.pck_threshold_mm > 0:
            raise ConfigError(f"pck_threshold_mm must be > 0, got {self.pck_threshold_mm}")
        if not (self.focal > 0 and self.img_extent > 0):
            raise ConfigError("focal and img_extent must be > 0")
        if self.detector_noise < 0 or self.detector_max_out < 0:
            raise ConfigError("detector_noise and detector_max_out must be >= 0")
        if self.image_grid < 0 or self.image_noise < 0:
            raise ConfigError("image_grid and image_noise must be >= 0")
        if self.body.joint_count < 1 or self.body.shape_count < 1:
            raise ConfigError("body dims must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return _build(cls, d, "")

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return RunConfig.from_dict(d)


_NESTED = {
    "scene": SceneParams, "body": BodyConfig, "decoder": DecoderConfig,
    "provider": ProviderConfig, "cost_weights": CostWeights, "loss_weights": LossWeights,
}
_TUPLES = {"persons", "objects", "scale_range", "image_size"}


def _build(cls, d, path):
    if not isinstance(d, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in d.items():
        sub = f"{path}.{key}" if path else key
        if key in _NESTED and cls in (RunConfig,):
            value = value if not isinstance(value, dict) else _build(_NESTED[key], value, sub)
        elif key in _TUPLES:
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def load_config(path=None, seed=None):
    if path is None:
        cfg = RunConfig()
    else:
        try:
            with open(path) as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = RunConfig.from_dict(raw)
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    return cfg
