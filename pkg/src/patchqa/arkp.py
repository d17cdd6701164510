"""Patch feature networks and the patch quality regressor.

Each branch network is a single-scale-grouping point-set hierarchy with
three changes: a shared per-point convolution block before and after the
hierarchy, uniform random centroid sampling instead of FPS, and KNN grouping
instead of ball queries.  Two branches run on different views of a patch (a
dense KNN crop for texture, a sparse random sample for structure) and their
outputs are fused into one patch feature vector.

All point-set tensors are batched: ``(B, n, c)`` for B patches.
"""

import numpy as np

from .autodiff import (
    BatchNorm,
    Linear,
    Module,
    Tensor,
    concat,
    gather,
    leaky_relu,
    max_reduce,
    maximum,
    reshape,
)
from .config import ArkpConfig
from .errors import ConfigError
from .geometry import keyed_rng, knn_batch


def _shared(layer, norm, x):
    """Per-point linear -> batch norm -> leaky relu on the last axis."""
    lead = x.shape[:-1]
    y = layer(reshape(x, (-1, x.shape[-1])))
    y = leaky_relu(norm(y))
    return reshape(y, lead + (y.shape[-1],))


class StrideConv(Module):
    """Shared per-point channel map whose output width is set per placement."""

    def __init__(self, c_in, c_out, rng):
        self.linear = Linear(c_in, c_out, rng)
        self.norm = BatchNorm(c_out)

    def __call__(self, x):
        return _shared(self.linear, self.norm, x)


class PointNetLayer(Module):
    """Shared MLP over grouped points followed by a max over each group."""

    def __init__(self, c_in, widths, rng):
        self.linears = []
        self.norms = []
        for w in widths:
            self.linears.append(Linear(c_in, w, rng))
            self.norms.append(BatchNorm(w))
            c_in = w

    def __call__(self, grouped):
        x = grouped
        for layer, norm in zip(self.linears, self.norms):
            x = _shared(layer, norm, x)
        return max_reduce(x, axis=-2)


class SetAbstraction(Module):
    def __init__(self, c_in, n_out, group_k, widths, rng):
        self.n_out = n_out
        self.group_k = group_k
        self.pointnet = PointNetLayer(c_in + 3, widths, rng)

    def sample_and_group(self, positions, seeds, key=()):
        """Random centroids per patch and the ``group_k`` nearest points of each.

        Patch ``i`` draws its centroids from ``keyed_rng(seeds[i], *key)``.
        """
        b, n, _ = positions.shape
        if self.n_out > n or self.group_k > n:
            raise ConfigError(f"level needs n_out={self.n_out}, group_k={self.group_k} "
                              f"but only {n} points remain")
        centroids = np.stack([
            np.sort(keyed_rng(s, *key).choice(n, self.n_out, replace=False))
            for s in seeds])
        rows = np.arange(b)[:, None]
        groups = knn_batch(positions, positions[rows, centroids], self.group_k)
        return centroids, groups

    def __call__(self, positions, features, seeds=None, key=(), centroids=None, groups=None):
        """Returns ``(new_positions, new_features)``.

        ``centroids``/``groups`` may be supplied to bypass sampling.
        """
        if centroids is None or groups is None:
            centroids, groups = self.sample_and_group(positions, seeds, key)
        rows = np.arange(positions.shape[0])[:, None]
        new_pos = positions[rows, centroids]
        rel = positions[rows[:, :, None], groups] - new_pos[:, :, None, :]
        grouped = concat([Tensor(rel), gather(features, groups)], axis=-1)
        return new_pos, self.pointnet(grouped)


class ArkpNet(Module):
    """One feature branch: stride conv, set abstractions, stride conv, global max."""

    def __init__(self, n_points, cfg, rng, in_channels=6, tag="branch"):
        cfg.validate()
        self.n_points = n_points
        self.tag = tag
        self.pre = StrideConv(in_channels, cfg.pre_width, rng)
        self.levels = []
        c = cfg.pre_width
        for n_out, k, widths in cfg.levels(n_points):
            self.levels.append(SetAbstraction(c, n_out, k, widths, rng))
            c = widths[-1]
        self.post = StrideConv(c, cfg.d_branch, rng)
        self.out_width = cfg.d_branch
        self.coord_scale = cfg.coord_scale

    def __call__(self, points, seeds):
        """points (B, R, 6) array or tensor, one sampling seed per patch -> (B, D)."""
        points = points if isinstance(points, Tensor) else Tensor(points)
        if points.shape[1] != self.n_points:
            raise ConfigError(f"branch expects {self.n_points} points, got {points.shape[1]}")
        # relative coordinates enter every level; keep them O(1) like the features
        positions = points.data[..., :3] * self.coord_scale
        x = self.pre(points)
        for i, level in enumerate(self.levels):
            positions, x = level(positions, x, seeds, key=(self.tag, i))
        return max_reduce(self.post(x), axis=1)


def fuse_features(f_t, f_s):
    """Max-pool the two branch vectors; concatenate when widths differ."""
    if f_t.shape == f_s.shape:
        return maximum(f_t, f_s)
    return concat([f_t, f_s], axis=-1)


class QualityHead(Module):
    """linear -> batch norm -> leaky relu -> linear, one score per patch."""

    def __init__(self, d, hidden, rng):
        self.fc1 = Linear(d, hidden, rng)
        self.norm = BatchNorm(hidden)
        self.fc2 = Linear(hidden, 1, rng)

    def __call__(self, features):
        h = leaky_relu(self.norm(self.fc1(features)))
        return reshape(self.fc2(h), (features.shape[0],))


class PatchQualityModel(Module):
    """Stage-1 model: texture and structure branches, fusion, quality head."""

    def __init__(self, R_t, R_s, cfg=ArkpConfig(), seed=0):
        self.texture = ArkpNet(R_t, cfg, keyed_rng(seed, "init", "texture"), tag="texture")
        self.structure = ArkpNet(R_s, cfg, keyed_rng(seed, "init", "structure"), tag="structure")
        self.feature_width = cfg.d_branch
        self.head = QualityHead(cfg.d_branch, cfg.head_hidden, keyed_rng(seed, "init", "head"))

    def features(self, texture_points, structure_points, seeds):
        f_t = self.texture(texture_points, seeds)
        f_s = self.structure(structure_points, seeds)
        return fuse_features(f_t, f_s)

    def __call__(self, texture_points, structure_points, seeds):
        f = self.features(texture_points, structure_points, seeds)
        return f, self.head(f)
