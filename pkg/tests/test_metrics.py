import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from patchqa.errors import DomainError
from patchqa.metrics import UndefinedCorrelationError, plcc, rmse, srcc


def pearson_def(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def ranks_def(x):
    """Average ranks, 1-based, by direct counting."""
    return [sum(v < a for v in x) + (sum(v == a for v in x) + 1) / 2 for a in x]


def test_identity():
    x = [3.0, 1.0, 4.0, 1.5]
    assert plcc(x, x) == 1.0 and srcc(x, x) == 1.0 and rmse(x, x) == 0.0


def test_reverse_sorted():
    x = np.random.default_rng(0).permutation(20).astype(float)
    assert srcc(x, -np.sort(-x)[np.argsort(np.argsort(x))]) == -1.0


def test_worked_example():
    assert plcc([1, 2, 3], [2, 4, 6]) == 1.0
    assert rmse([1, 2, 3], [2, 4, 6]) == pytest.approx(math.sqrt(14 / 3), abs=1e-15)


def test_zero_variance():
    with pytest.raises(UndefinedCorrelationError):
        plcc([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedCorrelationError):
        srcc([1, 2, 3], [5, 5, 5])


def test_bad_lengths():
    with pytest.raises(DomainError):
        plcc([1, 2], [1, 2, 3])
    with pytest.raises(DomainError):
        rmse([1], [1])


def test_ties_use_average_ranks():
    x = [1.0, 2.0, 2.0, 3.0]
    y = [1.0, 2.0, 3.0, 4.0]
    assert srcc(x, y) == pytest.approx(pearson_def(ranks_def(x), y), abs=1e-15)


def test_against_definitions():
    r = np.random.default_rng(1)
    for _ in range(100):
        n = int(r.integers(3, 60))
        x = r.normal(size=n)
        y = x + r.normal(size=n)
        if _ % 4 == 0:
            x = np.round(x)  # ties
        assert abs(plcc(x, y) - pearson_def(list(x), list(y))) < 1e-9
        assert abs(srcc(x, y) - pearson_def(ranks_def(list(x)), ranks_def(list(y)))) < 1e-9
        ref = math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)) / n)
        assert abs(rmse(x, y) - ref) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=3, max_size=40),
       st.integers(1, 64), st.integers(-(2**20), 2**20), st.integers(0, 2**32 - 1))
def test_plcc_affine_invariance_exact(xs, a_num, b, seed):
    # integer data with a dyadic slope keeps a*x + b exactly representable
    x = np.array(xs, dtype=float)
    assume(len(set(xs)) > 1)
    y = np.random.default_rng(seed).normal(size=len(xs))
    a = a_num / 8.0
    assert plcc(a * x + b, y) == plcc(x, y)


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2**32 - 1), st.floats(0.1, 10), st.floats(-100, 100))
def test_plcc_affine_invariance_general(n, seed, a, b):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=n), r.normal(size=n)
    assert abs(plcc(a * x + b, y) - plcc(x, y)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2**32 - 1),
       st.sampled_from(["exp", "cube", "arctan", "shift"]))
def test_srcc_monotone_invariance_exact(n, seed, kind):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=n), r.normal(size=n)
    f = {"exp": np.exp, "cube": lambda v: v ** 3, "arctan": np.arctan,
         "shift": lambda v: 5 * v - 3}[kind]
    fx = f(x)
    assume(len(set(fx.tolist())) == len(set(x.tolist())))
    assert srcc(fx, y) == srcc(x, y)
    assert srcc(x, f(y)) == srcc(x, y) or len(set(f(y).tolist())) < n


def test_bounded():
    r = np.random.default_rng(3)
    for _ in range(50):
        x, y = r.normal(size=7), r.normal(size=7)
        assert -1.0 <= plcc(x, y) <= 1.0 and -1.0 <= srcc(x, y) <= 1.0
