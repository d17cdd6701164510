"""Brute-force reference implementations in plain Python.

Nothing here touches numpy's vectorized selection routines; every oracle is a
direct transcription of the definition with explicit (distance, index) keys, so
ties resolve toward the lowest index by construction.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..cora import build_correlation_labels, class_sizes
from ..geometry import (
    Patch,
    farthest_point_sample,
    keyed_rng,
    knn,
    sample_structure_input,
    sample_texture_input,
)


def sqdist(a, b):
    dx, dy, dz = a[0] - b[0], a[1] - b[1], a[2] - b[2]
    return dx * dx + dy * dy + dz * dz


def fps_oracle(points, C, start):
    chosen = [start]
    while len(chosen) < C:
        best, best_d = None, -1.0
        for i, p in enumerate(points):
            if i in chosen:
                continue
            d = min(sqdist(p, points[j]) for j in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return chosen


def knn_oracle(points, query, k):
    return sorted(range(len(points)), key=lambda i: (sqdist(points[i], query), i))[:k]


def texture_oracle(patch_points, R_t):
    """Row indices of the texture input: nearest ``R_t`` rows to the origin."""
    return knn_oracle([row[:3] for row in patch_points], (0.0, 0.0, 0.0), R_t)


def labels_oracle(q, mos):
    n_s = math.ceil(len(q) / 3)
    n_a = math.ceil((len(q) - n_s) / 2)
    order = sorted(range(len(q)), key=lambda i: (abs(q[i] - mos), i))
    labels = [2] * len(q)
    for rank, i in enumerate(order):
        labels[i] = 0 if rank < n_s else 1 if rank < n_s + n_a else 2
    return labels


def class_sizes_oracle(C):
    s = -(-C // 3)
    a = -(-(C - s) // 2)
    return s, a, C - s - a


@dataclass
class OracleResult:
    name: str
    instances: int
    mismatches: int

    @property
    def passed(self):
        return self.instances > 0 and self.mismatches == 0


def _points(rng, n, tie_prone):
    # small integer grids make exact distance ties common
    if tie_prone:
        return rng.integers(-4, 5, size=(n, 3)).astype(np.float64)
    return rng.uniform(-1, 1, size=(n, 3))


def check_fps(instances, seed=0):
    bad = 0
    for t in range(instances):
        rng = keyed_rng(seed, "oracle-fps", t)
        n = int(rng.integers(1, 257))
        pts = _points(rng, n, t % 2 == 0)
        C = int(rng.integers(1, min(32, n) + 1))
        start = int(rng.integers(n))
        got = farthest_point_sample(pts, C, start=start).tolist()
        bad += got != fps_oracle(pts.tolist(), C, start)
    return OracleResult("fps", instances, bad)


def check_knn(instances, seed=0):
    bad = 0
    for t in range(instances):
        rng = keyed_rng(seed, "oracle-knn", t)
        n = int(rng.integers(1, 257))
        pts = _points(rng, n, t % 2 == 0)
        q = pts[int(rng.integers(n))] if t % 3 == 0 else _points(rng, 1, t % 2 == 0)[0]
        k = int(rng.integers(0, n + 1))
        got = knn(pts, q, k).tolist()
        bad += got != knn_oracle(pts.tolist(), q.tolist(), k)
    return OracleResult("knn", instances, bad)


def check_sampling(instances, seed=0):
    """Texture rows are exactly the nearest ``R_t``; structure rows are ``R_s`` distinct patch rows."""
    bad = 0
    for t in range(instances):
        rng = keyed_rng(seed, "oracle-sampling", t)
        K = int(rng.integers(2, 257))
        pts = np.concatenate([_points(rng, K, t % 2 == 0), rng.integers(-128, 128, (K, 3))], axis=1)
        patch = Patch(0, pts.astype(np.float64), f"c{t}", int(rng.integers(32)))
        R_t = int(rng.integers(1, K + 1))
        R_s = int(rng.integers(1, K + 1))
        tex = sample_texture_input(patch, R_t)
        want = [pts[i].tolist() for i in texture_oracle(pts.tolist(), R_t)]
        ok = tex.tolist() == want
        struct = sample_structure_input(patch, R_s, seed=t)
        rows = {}
        for i, r in enumerate(pts.tolist()):
            rows.setdefault(tuple(r), []).append(i)
        # match sampled rows back to distinct source rows
        used = set()
        for r in struct.tolist():
            free = [i for i in rows.get(tuple(r), []) if i not in used]
            if not free:
                ok = False
                break
            used.add(free[0])
        ok = ok and len(struct) == R_s
        bad += not ok
    return OracleResult("texture/structure membership", instances, bad)


def check_labels(instances, seed=0):
    bad = 0
    for t in range(instances):
        rng = keyed_rng(seed, "oracle-labels", t)
        C = int(rng.integers(3, 33))
        if t % 2 == 0:
            q = rng.integers(0, 6, C).astype(np.float64)
            mos = float(rng.integers(0, 6))
        else:
            q = rng.uniform(0, 100, C)
            mos = float(rng.uniform(0, 100))
        got = build_correlation_labels(q, mos).tolist()
        ok = got == labels_oracle(q.tolist(), mos)
        ok = ok and tuple(np.bincount(got, minlength=3)) == class_sizes_oracle(C)
        bad += not ok
    return OracleResult("correlation labels", instances, bad)


def check_class_sizes(lo=3, hi=33):
    bad = sum(class_sizes(C) != class_sizes_oracle(C) for C in range(lo, hi + 1))
    return OracleResult("class sizes", hi - lo + 1, bad)


def run_oracle_suite(instances=1000, seed=0):
    return [check_fps(instances, seed), check_knn(instances, seed),
            check_sampling(instances, seed), check_labels(instances, seed),
            check_class_sizes()]
