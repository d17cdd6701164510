"""Central finite-difference gradient checks."""

from dataclasses import dataclass

import numpy as np


@dataclass
class GradCheckResult:
    name: str
    max_rel_err: float
    checked: int
    skipped: int
    tolerance: float

    @property
    def passed(self):
        return self.checked > 0 and self.max_rel_err < self.tolerance


def numeric_grad(fn, tensors, h=1e-5):
    """Central differences of scalar ``fn()`` w.r.t. every element of ``tensors``.

    Returns ``(central, kink)`` lists; ``kink`` flags elements whose one-sided
    differences disagree, i.e. a leaky-relu kink or a max tie lies within ``h``.
    """
    central, kinks = [], []
    f0 = float(fn().data)
    for t in tensors:
        g = np.zeros_like(t.data)
        k = np.zeros(t.shape, dtype=bool)
        flat = t.data.reshape(-1)
        gf, kf = g.reshape(-1), k.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(fn().data)
            flat[i] = orig - h
            fm = float(fn().data)
            flat[i] = orig
            fwd, bwd = (fp - f0) / h, (f0 - fm) / h
            gf[i] = (fp - fm) / (2 * h)
            kf[i] = abs(fwd - bwd) > 1e-2 * max(abs(fwd), abs(bwd)) + 1e-6
        central.append(g)
        kinks.append(k)
    return central, kinks


def check_gradients(name, fn, tensors, tolerance, h=1e-5, floor=1e-6):
    """Compare analytic gradients from ``fn().backward()`` to central differences.

    Relative error per element is ``|a - n| / max(|a|, |n|, floor)``.
    """
    for t in tensors:
        t.grad = None
    fn().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    numeric, kinks = numeric_grad(fn, tensors, h)
    worst, checked, skipped = 0.0, 0, 0
    for a, n, k in zip(analytic, numeric, kinks):
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        skipped += int(k.sum())
        keep = ~k
        checked += int(keep.sum())
        if keep.any():
            worst = max(worst, float(rel[keep].max()))
    return GradCheckResult(name, worst, checked, skipped, tolerance)
