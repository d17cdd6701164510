import math
import re

import numpy as np
import pytest

from patchqa.config import KINDS, DataConfig
from patchqa.errors import DomainError
from patchqa.io import load_manifest
from patchqa.synthetic import (
    DistortionSpec,
    apply_distortion,
    bounding_radius,
    build_dataset,
    composite_parts,
    content_names,
    generate_base_cloud,
    held_out_contents,
    pseudo_mos,
)


def test_sphere_radius():
    c = generate_base_cloud("sphere", 1000, seed=1, radius=80.0)
    assert np.abs(np.linalg.norm(c.positions, axis=1) - 80.0).max() < 1e-9


@pytest.mark.parametrize("shape", ["sphere", "torus", "cube_surface", "composite"])
def test_deterministic(shape):
    a = generate_base_cloud(shape, 500, seed=3)
    b = generate_base_cloud(shape, 500, seed=3)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.colors, b.colors)
    assert len(a) == 500


def test_composite_has_two_surfaces():
    R = 100.0
    c = generate_base_cloud("composite", 800, seed=2, radius=R)
    cs, rs, cc, hc = composite_parts(R)
    on_sphere = np.abs(np.linalg.norm(c.positions - cs, axis=1) - rs) < 1e-9
    on_cube = np.abs(np.abs(c.positions - cc).max(axis=1) - hc) < 1e-9
    assert on_sphere.sum() >= 1 and on_cube.sum() >= 1
    assert np.all(on_sphere | on_cube)


def test_too_few_points():
    with pytest.raises(DomainError):
        generate_base_cloud("torus", 63, seed=0)


@pytest.mark.parametrize("kind", KINDS)
def test_level_zero_is_identity(kind):
    c = generate_base_cloud("torus", 300, seed=0)
    out = apply_distortion(c, DistortionSpec(kind, 0), seed=5)
    assert np.array_equal(out.positions, c.positions) and np.array_equal(out.colors, c.colors)


def test_geometry_noise_displacement_statistics():
    c = generate_base_cloud("sphere", 100_000, seed=0, radius=100.0)
    spec = DistortionSpec("geometry_noise", 2, 4)
    sigma = spec.sigma_geom() * bounding_radius(c.positions)
    d = np.linalg.norm(apply_distortion(c, spec, seed=1).positions - c.positions, axis=1)
    # |N(0, sigma^2 I_3)| follows a Maxwell law
    mean, sd = sigma * math.sqrt(8 / math.pi), sigma * math.sqrt(3 - 8 / math.pi)
    assert abs(d.mean() - mean) < 4 * sd / math.sqrt(len(d))


def test_downsample_subset():
    c = generate_base_cloud("cube_surface", 1000, seed=0)
    out = apply_distortion(c, DistortionSpec("downsample", 1, params={"keep": 0.5}), seed=2)
    assert len(out) == 500
    original = {tuple(p) for p in c.positions.tolist()}
    assert all(tuple(p) in original for p in out.positions.tolist())


def test_downsample_below_minimum():
    c = generate_base_cloud("sphere", 100, seed=0)
    with pytest.raises(DomainError):
        apply_distortion(c, DistortionSpec("downsample", 4, 4), seed=0)


def test_quantize_snaps_to_grid():
    c = generate_base_cloud("sphere", 400, seed=0)
    spec = DistortionSpec("quantize", 2, 4)
    out = apply_distortion(c, spec, seed=0)
    step = spec.step() * bounding_radius(c.positions)
    k = out.positions / step
    assert np.abs(k - np.round(k)).max() < 1e-6


def test_color_noise_keeps_range():
    c = generate_base_cloud("sphere", 400, seed=0)
    out = apply_distortion(c, DistortionSpec("color_noise", 4, 4), seed=0)
    assert out.colors.min() >= 0 and out.colors.max() <= 255
    assert not np.array_equal(out.colors, c.colors)


@pytest.mark.parametrize("kind", KINDS)
def test_severity_increases(kind):
    specs = [DistortionSpec(kind, level, 4) for level in range(5)]
    sev = {"geometry_noise": lambda s: s.sigma_geom(), "color_noise": lambda s: s.sigma_color(),
           "downsample": lambda s: -s.keep(), "quantize": lambda s: s.step()}[kind]
    values = [sev(s) for s in specs]
    assert all(a < b for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("kind", KINDS)
def test_pseudo_mos(kind):
    mos = [pseudo_mos(DistortionSpec(kind, level, 4)) for level in range(5)]
    assert mos[0] == 100.0 and mos[-1] == 0.0
    assert all(a > b for a, b in zip(mos, mos[1:]))


def test_bad_distortion():
    with pytest.raises(DomainError):
        DistortionSpec("blur", 1)
    with pytest.raises(DomainError):
        DistortionSpec("downsample", 5, 4)


def test_build_dataset_counts_and_split(tmp_path):
    cfg = DataConfig()
    m = build_dataset(cfg, tmp_path)
    assert len(m) == 360
    assert len(list(tmp_path.glob("*.ply"))) == 360
    assert load_manifest(tmp_path / "manifest.csv").entries == m.entries
    pattern = re.compile(rf"^(.+)_({'|'.join(KINDS)})_\d+$")
    test_contents = {pattern.match(e.name).group(1) for e in m.split("test")}
    train_contents = {pattern.match(e.name).group(1) for e in m.split("train")}
    assert test_contents == held_out_contents(cfg)
    assert not test_contents & train_contents
    assert len(test_contents) == round(0.2 * 24)
    assert test_contents | train_contents == set(content_names(cfg))


def test_build_dataset_byte_identical(tmp_path):
    cfg = DataConfig(contents=5, points=300, levels=2)
    build_dataset(cfg, tmp_path / "a")
    build_dataset(cfg, tmp_path / "b")
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
