"""Procedural distorted point clouds with a monotone pseudo-MOS.

Scores are a fixed function of distortion kind and level, not human
judgements; they exist so the pipeline has a learnable, checkable target.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import KINDS, SHAPES, DataConfig
from .errors import DomainError
from .geometry import keyed_rng
from .io import DatasetManifest, ManifestEntry, PointCloud, save_ply, write_manifest

MIN_POINTS = 64

# severity at the top level; level l of L uses (l / L) of it
MAX_SEVERITY = {
    "geometry_noise": 0.03,   # sigma as a fraction of the bounding radius
    "color_noise": 60.0,      # sigma in color units
    "downsample": 0.7,        # fraction of points removed
    "quantize": 0.08,         # grid step as a fraction of the bounding radius
}
MOS_GAMMA = {"geometry_noise": 0.8, "color_noise": 1.0, "downsample": 1.25, "quantize": 0.9}


@dataclass(frozen=True)
class DistortionSpec:
    kind: str
    level: int
    max_level: int = 4
    params: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown distortion kind {self.kind!r}")
        if not 0 <= self.level <= self.max_level or self.max_level < 1:
            raise DomainError(f"level {self.level} outside 0..{self.max_level}")

    @property
    def fraction(self):
        return self.level / self.max_level

    def sigma_geom(self):
        return self.params.get("sigma_geom", MAX_SEVERITY["geometry_noise"] * self.fraction)

    def sigma_color(self):
        return self.params.get("sigma_color", MAX_SEVERITY["color_noise"] * self.fraction)

    def keep(self):
        return self.params.get("keep", 1.0 - MAX_SEVERITY["downsample"] * self.fraction)

    def step(self):
        return self.params.get("step", MAX_SEVERITY["quantize"] * self.fraction)


def _color_field(unit, rng):
    """Smooth procedural RGB over unit direction vectors."""
    freq = rng.uniform(1.0, 4.0, size=(3, 3))
    phase = rng.uniform(0, 2 * np.pi, size=3)
    amp = rng.uniform(50, 110, size=3)
    base = rng.uniform(90, 165, size=3)
    rgb = base + amp * np.sin(unit @ freq.T + phase)
    return np.clip(np.rint(rgb), 0, 255).astype(np.int64)


def _sphere(n, radius, rng):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * radius


def _torus(n, radius, rng):
    major, minor = radius, 0.35 * radius
    pts = []
    while sum(len(p) for p in pts) < n:
        u = rng.uniform(0, 2 * np.pi, n)
        v = rng.uniform(0, 2 * np.pi, n)
        # area-uniform by rejection on the ring radius
        accept = rng.uniform(0, 1, n) < (major + minor * np.cos(v)) / (major + minor)
        u, v = u[accept], v[accept]
        ring = major + minor * np.cos(v)
        pts.append(np.stack([ring * np.cos(u), ring * np.sin(u), minor * np.sin(v)], axis=1))
    return np.concatenate(pts)[:n]


def _cube_surface(n, half, rng):
    face = rng.integers(0, 6, n)
    st = rng.uniform(-half, half, size=(n, 2))
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    pts = np.empty((n, 3))
    for a in range(3):
        rows = axis == a
        pts[rows, a] = sign[rows] * half
        pts[np.ix_(rows, [b for b in range(3) if b != a])] = st[rows]
    return pts


def composite_parts(radius):
    """(sphere center, sphere radius, cube center, cube half side) of a composite."""
    return (np.array([-0.6 * radius, 0.0, 0.0]), 0.5 * radius,
            np.array([0.6 * radius, 0.0, 0.0]), 0.4 * radius)


def generate_base_cloud(shape, n, seed, radius=100.0, name=None):
    """``n`` points on a parametric surface with a smooth color field."""
    if n < MIN_POINTS:
        raise DomainError(f"need at least {MIN_POINTS} points, got {n}")
    if shape not in SHAPES:
        raise DomainError(f"unknown shape {shape!r}")
    rng = keyed_rng(seed, "base", shape)
    if shape == "sphere":
        pos = _sphere(n, radius, rng)
        colors = _color_field(pos / radius, rng)
    elif shape == "torus":
        pos = _torus(n, radius, rng)
        colors = _color_field(pos / np.linalg.norm(pos, axis=1, keepdims=True), rng)
    elif shape == "cube_surface":
        pos = _cube_surface(n, 0.6 * radius, rng)
        colors = _color_field(pos / np.linalg.norm(pos, axis=1, keepdims=True), rng)
    else:
        cs, rs, cc, hc = composite_parts(radius)
        n_s = n // 2
        sph = _sphere(n_s, rs, rng)
        cube = _cube_surface(n - n_s, hc, rng)
        colors = np.concatenate([
            _color_field(sph / rs, rng),
            _color_field(cube / np.linalg.norm(cube, axis=1, keepdims=True), rng),
        ])
        pos = np.concatenate([sph + cs, cube + cc])
    return PointCloud(pos, colors, name or f"{shape}")


def bounding_radius(positions):
    c = positions - positions.mean(axis=0)
    return float(np.sqrt((c * c).sum(axis=1)).max())


def apply_distortion(cloud, spec, seed=0):
    if spec.level == 0 and not spec.params:
        return PointCloud(cloud.positions.copy(), cloud.colors.copy(), cloud.name)
    rng = keyed_rng(seed, "distort", cloud.name, spec.kind, spec.level)
    pos, colors = cloud.positions.copy(), cloud.colors.copy()
    if spec.kind == "geometry_noise":
        pos = pos + rng.normal(scale=spec.sigma_geom() * bounding_radius(pos), size=pos.shape)
    elif spec.kind == "color_noise":
        noisy = colors + rng.normal(scale=spec.sigma_color(), size=colors.shape)
        colors = np.clip(np.rint(noisy), 0, 255).astype(np.int64)
    elif spec.kind == "downsample":
        m = math.ceil(spec.keep() * len(pos))
        if m < MIN_POINTS:
            raise DomainError(f"downsampling leaves {m} points, fewer than {MIN_POINTS}")
        idx = np.sort(rng.choice(len(pos), m, replace=False))
        pos, colors = pos[idx], colors[idx]
    else:
        step = spec.step() * bounding_radius(pos)
        if step > 0:
            pos = np.round(pos / step) * step
    if len(pos) < MIN_POINTS:
        raise DomainError(f"distortion leaves {len(pos)} points, fewer than {MIN_POINTS}")
    return PointCloud(pos, colors, cloud.name)


def pseudo_mos(spec, mos_max=100.0):
    """``mos_max * (1 - (level / L) ** gamma)`` with a per-kind exponent."""
    return mos_max * (1.0 - spec.fraction ** MOS_GAMMA[spec.kind])


def content_names(cfg):
    return [f"{SHAPES[i % len(SHAPES)]}{i:02d}" for i in range(cfg.contents)]


def held_out_contents(cfg):
    names = content_names(cfg)
    if cfg.test_fraction <= 0:
        return set()
    n_test = max(1, round(cfg.test_fraction * len(names)))
    order = keyed_rng(cfg.seed, "split").permutation(len(names))
    return {names[i] for i in order[:n_test]}


def build_dataset(cfg, root):
    """Write every (content, kind, level) cloud plus ``manifest.csv`` under ``root``."""
    cfg.validate()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    held_out = held_out_contents(cfg)
    entries = []
    for i, content in enumerate(content_names(cfg)):
        shape = SHAPES[i % len(SHAPES)]
        rng = keyed_rng(cfg.seed, "content", content)
        base = generate_base_cloud(shape, cfg.points, seed=int(rng.integers(2**62)),
                                   radius=float(rng.uniform(50, 150)), name=content)
        split = "test" if content in held_out else "train"
        for kind in cfg.kinds:
            for level in range(cfg.levels + 1):
                spec = DistortionSpec(kind, level, cfg.levels)
                cloud = apply_distortion(base, spec, seed=cfg.seed)
                path = root / f"{content}_{kind}_{level}.ply"
                try:
                    save_ply(cloud, path)
                except OSError as exc:
                    raise OSError(f"cannot write {path}: {exc}") from exc
                entries.append(ManifestEntry(path, pseudo_mos(spec, cfg.mos_max), split))
    manifest = DatasetManifest(entries, root)
    write_manifest(manifest, root / "manifest.csv")
    return manifest
