"""Patch preprocessing: sphere normalization, FPS centers, KNN patches.

Distance ties are broken toward the lowest point index everywhere, so every
selection here is an exact, deterministic function of its inputs and seed.
Distances are compared as squared Euclidean norms.
"""

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SamplerConfig
from .errors import ConfigError, DegenerateCloudError, DomainError
from .io import PointCloud, save_ply


def _key(value):
    if isinstance(value, str):
        return zlib.crc32(value.encode("utf-8"))
    return int(value) & 0xFFFFFFFFFFFFFFFF


def keyed_rng(seed, *keys):
    """Counter-based generator keyed by ``seed`` and any ints or strings."""
    entropy = [_key(seed)] + [_key(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass
class Patch:
    center_index: int
    points: np.ndarray
    parent: str = "cloud"
    index: int = 0

    @property
    def positions(self):
        return self.points[:, :3]

    def __len__(self):
        return len(self.points)


def squared_distances(positions, query):
    d = np.asarray(positions, dtype=np.float64) - np.asarray(query, dtype=np.float64)
    return (d * d).sum(axis=-1)


def normalize_to_sphere(cloud, radius=1000.0):
    """Center positions on their centroid and scale the farthest point to ``radius``."""
    pos = cloud.positions
    if len(pos) < 2 or np.all(pos == pos[0]):
        raise DegenerateCloudError(f"{cloud.name}: all points coincide")
    centered = pos - pos.mean(axis=0)
    scale = np.sqrt((centered * centered).sum(axis=1)).max()
    return PointCloud(centered * (radius / scale), cloud.colors, cloud.name)


def farthest_point_sample(positions, C, seed=0, start=None):
    """Greedy farthest point sampling; returns ``C`` indices in selection order.

    The start index is drawn from ``keyed_rng(seed)`` unless given.
    """
    positions = np.asarray(positions, dtype=np.float64)
    n = len(positions)
    if C > n or C < 1:
        raise DomainError(f"cannot pick {C} centers from {n} points")
    if start is None:
        start = int(keyed_rng(seed, "fps").integers(n))
    chosen = [start]
    mind = squared_distances(positions, positions[start])
    mind[start] = -1.0
    for _ in range(1, C):
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, squared_distances(positions, positions[nxt]))
        mind[chosen] = -1.0
    return np.array(chosen, dtype=np.int64)


def knn(positions, query, k):
    """Indices of the ``k`` nearest points to ``query``, nearest first."""
    d2 = squared_distances(positions, query)
    n = len(d2)
    if k > n or k < 0:
        raise DomainError(f"k={k} exceeds the {n} available points")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    if k < n:
        threshold = np.partition(d2, k - 1)[k - 1]
        cand = np.flatnonzero(d2 <= threshold)
    else:
        cand = np.arange(n)
    return cand[np.argsort(d2[cand], kind="stable")][:k]


def knn_batch(positions, queries, k):
    """Batched :func:`knn`: positions (B, n, 3), queries (B, m, 3) -> (B, m, k)."""
    d = positions[:, None, :, :] - queries[:, :, None, :]
    d2 = (d * d).sum(axis=-1)
    if k > d2.shape[-1]:
        raise DomainError(f"k={k} exceeds the {d2.shape[-1]} available points")
    return np.argsort(d2, axis=-1, kind="stable")[..., :k]


def center_patch(points):
    points = np.asarray(points, dtype=np.float64)
    if len(points) < 1:
        raise DomainError("cannot center an empty patch")
    return points - points.mean(axis=0)


def extract_patches(cloud, cfg=SamplerConfig()):
    """Normalize, pick ``cfg.C`` FPS centers and gather ``cfg.K`` neighbours each."""
    if len(cloud) < cfg.K:
        raise ConfigError(f"{cloud.name} has {len(cloud)} points, fewer than K={cfg.K}; "
                          "use a smaller sampler.K")
    if cfg.C > len(cloud):
        raise ConfigError(f"{cloud.name} has fewer points than C={cfg.C}")
    norm = normalize_to_sphere(cloud, cfg.radius)
    matrix = norm.as_matrix()
    start = int(keyed_rng(cfg.seed, cloud.name, "fps").integers(len(cloud)))
    centers = farthest_point_sample(norm.positions, cfg.C, start=start)
    patches = []
    for i, c in enumerate(centers):
        idx = knn(norm.positions, norm.positions[c], cfg.K)
        patches.append(Patch(int(c), center_patch(matrix[idx]), cloud.name, i))
    return patches


def sample_texture_input(patch, R_t):
    """The ``R_t`` points of a centered patch nearest to its centroid (the origin)."""
    if R_t > len(patch):
        raise DomainError(f"R_t={R_t} exceeds patch size {len(patch)}")
    return patch.points[knn(patch.positions, np.zeros(3), R_t)]


def sample_structure_input(patch, R_s, seed=0):
    """Uniform sample of ``R_s`` patch points without replacement."""
    if R_s > len(patch):
        raise DomainError(f"R_s={R_s} exceeds patch size {len(patch)}")
    rng = keyed_rng(seed, patch.parent, patch.index, "structure")
    return patch.points[rng.choice(len(patch), R_s, replace=False)]


def dump_patches(patches, directory):
    """Write each patch as ``<cloud>_patch<i>.ply`` for visual inspection."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for p in patches:
        colors = np.clip(np.rint(p.points[:, 3:] + 128), 0, 255)
        path = directory / f"{p.parent}_patch{p.index}.ply"
        save_ply(PointCloud(np.round(p.points[:, :3], 6), colors, path.stem), path)
        paths.append(path)
    return paths
