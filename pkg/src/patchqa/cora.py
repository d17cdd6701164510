"""Correlation analysis over the patches of one cloud.

Stage-1 patch predictions define a three-way label per patch (strong,
average, weak agreement with the cloud score).  A small transformer reads all
patch features of a cloud at once and predicts those labels; the predicted
class probabilities become pooling weights.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    LayerNorm,
    Linear,
    Module,
    Tensor,
    attention,
    leaky_relu,
    reshape,
    transpose,
)
from .config import CoraConfig
from .errors import ConfigError, DomainError
from .geometry import keyed_rng

log = logging.getLogger(__name__)

STRONG, AVERAGE, WEAK = 0, 1, 2
LABEL_NAMES = ("strong", "average", "weak")


def class_sizes(C):
    """(strong, average, weak) counts for ``C`` patches."""
    if C < 3:
        raise DomainError(f"need at least 3 patches to build 3 classes, got {C}")
    n_s = math.ceil(C / 3)
    n_a = math.ceil((C - n_s) / 2)
    return n_s, n_a, C - n_s - n_a


def build_correlation_labels(q_patch, mos):
    """Label patches by how close their predicted score is to the cloud score."""
    q = np.asarray(q_patch, dtype=np.float64)
    n_s, n_a, _ = class_sizes(len(q))
    order = np.argsort(np.abs(q - mos), kind="stable")
    labels = np.full(len(q), WEAK, dtype=np.int64)
    labels[order[:n_s]] = STRONG
    labels[order[n_s:n_s + n_a]] = AVERAGE
    return labels


class SelfAttention(Module):
    def __init__(self, hidden, heads, rng):
        self.heads = heads
        self.query = Linear(hidden, hidden, rng)
        self.key = Linear(hidden, hidden, rng)
        self.value = Linear(hidden, hidden, rng)
        self.out = Linear(hidden, hidden, rng)

    def _split(self, x):
        b, c, h = x.shape
        return transpose(reshape(x, (b, c, self.heads, h // self.heads)), (0, 2, 1, 3))

    def __call__(self, x):
        b, c, h = x.shape
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        mixed = attention(q, k, v)
        return self.out(reshape(transpose(mixed, (0, 2, 1, 3)), (b, c, h)))


class TransformerBlock(Module):
    """Pre-norm encoder block without positional encoding."""

    def __init__(self, hidden, heads, ff_mult, rng):
        self.norm1 = LayerNorm(hidden)
        self.attention = SelfAttention(hidden, heads, rng)
        self.norm2 = LayerNorm(hidden)
        self.ff1 = Linear(hidden, ff_mult * hidden, rng)
        self.ff2 = Linear(ff_mult * hidden, hidden, rng)

    def __call__(self, x):
        x = x + self.attention(self.norm1(x))
        return x + self.ff2(leaky_relu(self.ff1(self.norm2(x))))


class CoraNet(Module):
    """Patch features (B, C, D) -> correlation logits (B, C, 3)."""

    def __init__(self, d_in, cfg=CoraConfig(), seed=0):
        cfg.validate()
        rng = keyed_rng(seed, "init", "cora")
        self.d_in = d_in
        self.in1 = Linear(d_in, cfg.hidden, rng)
        self.in2 = Linear(cfg.hidden, cfg.hidden, rng)
        self.blocks = [TransformerBlock(cfg.hidden, cfg.heads, cfg.ff_mult, rng)
                       for _ in range(cfg.blocks)]
        self.norm = LayerNorm(cfg.hidden)
        self.out1 = Linear(cfg.hidden, cfg.hidden, rng)
        self.out2 = Linear(cfg.hidden, 3, rng)

    def __call__(self, features):
        x = features if isinstance(features, Tensor) else Tensor(features)
        if x.ndim == 2:
            x = reshape(x, (1,) + x.shape)
        if x.shape[-1] != self.d_in:
            raise ConfigError(f"CORA expects {self.d_in}-wide patch features, got {x.shape[-1]}")
        x = self.in2(leaky_relu(self.in1(x)))
        for block in self.blocks:
            x = block(x)
        return self.out2(leaky_relu(self.out1(self.norm(x))))


def weights_from_logits(logits, class_weights=(1.0, 0.5, 0.1), axis="class"):
    """Scalar pooling weight per patch from (C, 3) logits.

    ``axis="class"``: expected class weight under the per-patch softmax.
    ``axis="patch"``: softmax of the strong-class logit across patches.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if axis == "class":
        z = logits - logits.max(axis=-1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=-1, keepdims=True)
        return p @ np.asarray(class_weights, dtype=np.float64)
    if axis == "patch":
        s = logits[..., STRONG]
        e = np.exp(s - s.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)
    raise ConfigError(f"unknown softmax axis {axis!r}")


def correlation_weight_pool(q, w):
    """Weighted mean of patch scores; falls back to the plain mean if the weights sum to <= 0."""
    q = np.asarray(q, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        log.warning("non-positive weight sum %r; using the unweighted mean", total)
        return float(q.mean())
    pooled = float(np.dot(w, q) / total)
    # rounding can push the quotient one ulp outside the hull of q
    return min(max(pooled, float(q.min())), float(q.max()))


def average_pool(q):
    return float(np.mean(np.asarray(q, dtype=np.float64)))


@dataclass
class QualityRecord:
    name: str
    mos: float
    q_patch: np.ndarray
    w_patch: np.ndarray
    q_pc: float
    labels: np.ndarray = field(default=None)
    pooling: str = "cora"
