"""Namespaced configuration with a flat ``key=value`` file format.

Example file::

    # desk-scale run
    sampler.C = 4
    sampler.K = 256
    arkp.widths = 32,64; 64,128; 128,64
    train.pooling = cora

Keys are ``<section>.<field>``; unknown keys are rejected.
"""

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError

KINDS = ("geometry_noise", "color_noise", "downsample", "quantize")
SHAPES = ("sphere", "torus", "cube_surface", "composite")
POOLINGS = ("average", "cora")


@dataclass(frozen=True)
class SamplerConfig:
    C: int = 16
    K: int = 14900
    R_t: int = 8192
    R_s: int = 1024
    radius: float = 1000.0
    seed: int = 0

    def validate(self):
        if self.C < 1 or self.K < 1:
            raise ConfigError("sampler.C and sampler.K must be >= 1")
        if not (1 <= self.R_t <= self.K and 1 <= self.R_s <= self.K):
            raise ConfigError("sampler.R_t and sampler.R_s must lie in [1, K]")
        if self.radius <= 0:
            raise ConfigError("sampler.radius must be positive")
        return self


@dataclass(frozen=True)
class ArkpConfig:
    d_branch: int = 64
    pre_width: int = 32
    group_k: int = 16
    level_divisors: tuple = (2, 4, 8)
    widths: tuple = ((32, 64), (64, 128), (128, 64))
    head_hidden: int = 64
    coord_scale: float = 1e-2

    def validate(self):
        if len(self.level_divisors) != len(self.widths) or not self.widths:
            raise ConfigError("arkp.level_divisors and arkp.widths need one entry per level")
        if list(self.level_divisors) != sorted(set(self.level_divisors)):
            raise ConfigError("arkp.level_divisors must be strictly increasing")
        if any(not w for w in self.widths):
            raise ConfigError("every arkp level needs at least one MLP width")
        if min(self.d_branch, self.pre_width, self.group_k, self.head_hidden) < 1:
            raise ConfigError("arkp widths and group_k must be >= 1")
        if not self.coord_scale > 0:
            raise ConfigError("arkp.coord_scale must be positive")
        return self

    def levels(self, n_points):
        """(n_out, group_k, widths) per level for an input of ``n_points``."""
        out, prev = [], n_points
        for div, widths in zip(self.level_divisors, self.widths):
            n_out = n_points // div
            if n_out < 1 or self.group_k > prev:
                raise ConfigError(
                    f"{n_points} input points are too few for level divisor {div} "
                    f"with group_k={self.group_k}")
            out.append((n_out, self.group_k, tuple(widths)))
            prev = n_out
        return out


@dataclass(frozen=True)
class CoraConfig:
    hidden: int = 512
    blocks: int = 4
    heads: int = 4
    ff_mult: int = 2
    class_weights: tuple = (1.0, 0.5, 0.1)
    softmax_axis: str = "class"

    def validate(self):
        if self.hidden % self.heads:
            raise ConfigError("cora.hidden must be divisible by cora.heads")
        if len(self.class_weights) != 3 or min(self.class_weights) <= 0:
            raise ConfigError("cora.class_weights needs three positive values")
        if self.softmax_axis not in ("class", "patch"):
            raise ConfigError("cora.softmax_axis must be 'class' or 'patch'")
        return self


@dataclass(frozen=True)
class TrainConfig:
    stage1_batch: int = 32
    stage2_batch: int = 4
    base_lr: float = 1e-4
    momentum: float = 0.9
    epochs1: int = 30
    epochs2: int = 30
    patience: int = 0
    min_rel_improvement: float = 1e-4
    seed: int = 0
    pooling: str = "cora"

    def validate(self):
        if self.stage1_batch < 1 or self.stage2_batch < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.epochs1 < 1 or self.epochs2 < 1:
            raise ConfigError("epoch budgets must be >= 1")
        if self.pooling not in POOLINGS:
            raise ConfigError("train.pooling must be 'average' or 'cora'")
        if not 0 <= self.momentum < 1:
            raise ConfigError("train.momentum must lie in [0, 1)")
        return self


@dataclass(frozen=True)
class DataConfig:
    contents: int = 24
    kinds: tuple = ("geometry_noise", "color_noise", "downsample")
    levels: int = 4
    points: int = 2048
    test_fraction: float = 0.2
    mos_max: float = 100.0
    seed: int = 0

    def validate(self):
        unknown = set(self.kinds) - set(KINDS)
        if unknown or not self.kinds:
            raise ConfigError(f"data.kinds must be drawn from {KINDS}")
        if self.levels < 1 or self.contents < 1 or self.points < 64:
            raise ConfigError("data.levels, data.contents >= 1 and data.points >= 64")
        if not 0 <= self.test_fraction < 1:
            raise ConfigError("data.test_fraction must lie in [0, 1)")
        if self.test_fraction > 0 and self.contents < 5:
            raise ConfigError("a content-level split needs at least 5 contents")
        return self


@dataclass(frozen=True)
class Config:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    arkp: ArkpConfig = field(default_factory=ArkpConfig)
    cora: CoraConfig = field(default_factory=CoraConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def validate(self):
        for f in fields(self):
            getattr(self, f.name).validate()
        self.arkp.levels(self.sampler.R_t)
        self.arkp.levels(self.sampler.R_s)
        return self

    def with_overrides(self, pairs):
        """Apply ``{"section.key": "text"}`` overrides, parsing by field type."""
        sections = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, text in pairs.items():
            section, _, name = key.partition(".")
            if section not in sections:
                raise ConfigError(f"unknown config key {key!r}")
            current = sections[section]
            kinds = {f.name: f for f in fields(current)}
            if name not in kinds:
                raise ConfigError(f"unknown config key {key!r}")
            value = _parse_value(key, text, getattr(current, name))
            sections[section] = replace(current, **{name: value})
        return replace(self, **sections)

    def flat(self):
        out = {}
        for f in fields(self):
            for k, v in asdict(getattr(self, f.name)).items():
                out[f"{f.name}.{k}"] = v
        return out

    def to_text(self):
        return "".join(f"{k} = {_format_value(v)}\n" for k, v in sorted(self.flat().items()))

    @classmethod
    def from_flat(cls, flat):
        return cls().with_overrides({k: _format_value(v) for k, v in flat.items()})


def _format_value(v):
    if isinstance(v, (tuple, list)):
        if v and isinstance(v[0], (tuple, list)):
            return "; ".join(",".join(str(x) for x in row) for row in v)
        return ",".join(str(x) for x in v)
    return str(v)


def _parse_value(key, text, default):
    text = str(text).strip()
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "1")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, str):
            return text
        if isinstance(default, tuple):
            if default and isinstance(default[0], tuple):
                return tuple(tuple(int(x) for x in row.split(",") if x.strip())
                             for row in text.split(";") if row.strip())
            items = [x.strip() for x in text.split(",") if x.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(x) for x in items)
            if default and isinstance(default[0], int):
                return tuple(int(x) for x in items)
            return tuple(items)
    except ValueError:
        raise ConfigError(f"cannot parse {key}={text!r}") from None
    raise ConfigError(f"unsupported value type for {key}")


def parse_config_text(text):
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"config line {lineno}: expected key=value")
        pairs[key.strip()] = value.strip()
    return pairs


def desk_config():
    """Small defaults that train on a laptop CPU in minutes."""
    return Config(
        sampler=SamplerConfig(C=4, K=256, R_t=128, R_s=64),
        arkp=ArkpConfig(),
    )


def full_config():
    """Full-scale settings (C=16, K=14900, R_t=8192, R_s=1024)."""
    return Config(
        sampler=SamplerConfig(),
        arkp=ArkpConfig(d_branch=1024, pre_width=64, group_k=32, level_divisors=(16, 64, 256),
                        widths=((64, 64, 128), (128, 128, 256), (256, 512, 1024)),
                        head_hidden=512),
    )


def load_config(path=None, overrides=None, preset="desk"):
    base = {"desk": desk_config, "full": full_config}.get(preset)
    if base is None:
        raise ConfigError(f"unknown preset {preset!r}")
    cfg = base()
    if path is not None:
        cfg = cfg.with_overrides(parse_config_text(Path(path).read_text(encoding="utf-8")))
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg.validate()
