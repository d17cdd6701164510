"""PLCC / SRCC / RMSE.

Correlations are evaluated in exact rational arithmetic and rounded once at
the end, so inputs that are exact positive affine images of each other give
bit-identical PLCC, and inputs with identical ranks give bit-identical SRCC.
"""

import math
from fractions import Fraction

import numpy as np
from scipy.stats import rankdata

from .errors import DomainError


class UndefinedCorrelationError(DomainError):
    """One of the inputs has zero variance."""


def _check(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DomainError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DomainError("need at least two samples")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DomainError("non-finite input")
    return x, y


def _exact_pearson(x, y):
    n = len(x)
    fx = [Fraction(v) for v in x.tolist()]
    fy = [Fraction(v) for v in y.tolist()]
    mx, my = sum(fx) / n, sum(fy) / n
    dx = [v - mx for v in fx]
    dy = [v - my for v in fy]
    sxx = sum(d * d for d in dx)
    syy = sum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant input")
    sxy = sum(a * b for a, b in zip(dx, dy))
    r2 = sxy * sxy / (sxx * syy)
    return math.copysign(min(1.0, math.sqrt(float(r2))), float(sxy)) if sxy else 0.0


def plcc(x, y):
    return _exact_pearson(*_check(x, y))


def srcc(x, y):
    x, y = _check(x, y)
    return _exact_pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def rmse(x, y):
    x, y = _check(x, y)
    d = x - y
    return float(np.sqrt(np.mean(d * d)))
