import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from patchqa import autodiff as ad
from patchqa.autodiff import Tensor
from patchqa.checks.gradcheck import check_gradients
from patchqa.config import CoraConfig
from patchqa.cora import (
    AVERAGE,
    STRONG,
    WEAK,
    CoraNet,
    average_pool,
    build_correlation_labels,
    class_sizes,
    correlation_weight_pool,
    weights_from_logits,
)
from patchqa.errors import ConfigError, DomainError

SMALL = CoraConfig(hidden=8, blocks=2, heads=2, ff_mult=2)


class TestLabels:
    def test_worked_example(self):
        err = np.array([0.1, 0.9, 0.3, 0.5, 0.2, 0.7])
        labels = build_correlation_labels(50 + err, 50.0)
        assert set(np.flatnonzero(labels == STRONG)) == {0, 4}
        assert set(np.flatnonzero(labels == AVERAGE)) == {2, 3}
        assert set(np.flatnonzero(labels == WEAK)) == {1, 5}

    def test_all_equal_errors_go_by_index(self):
        assert build_correlation_labels(np.full(7, 3.0), 1.0).tolist() == [0, 0, 0, 1, 1, 2, 2]

    def test_sign_of_error_ignored(self):
        assert build_correlation_labels([49.0, 51.5, 52.0], 50.0).tolist() == [0, 1, 2]

    def test_sixteen_patches(self):
        assert class_sizes(16) == (6, 5, 5)

    @pytest.mark.parametrize("C", range(3, 34))
    def test_partition(self, C):
        n_s = -(-C // 3)
        n_a = -(-(C - n_s) // 2)
        assert class_sizes(C) == (n_s, n_a, C - n_s - n_a)
        labels = build_correlation_labels(np.random.default_rng(C).normal(size=C), 0.0)
        assert tuple(np.bincount(labels, minlength=3)) == class_sizes(C)

    def test_too_few_patches(self):
        with pytest.raises(DomainError):
            build_correlation_labels([1.0, 2.0], 1.5)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(3, 20), st.integers(0, 2**32 - 1))
    def test_permutation_permutes_labels(self, C, seed):
        r = np.random.default_rng(seed)
        q = r.normal(size=C)  # continuous values: no ties
        perm = r.permutation(C)
        assert np.array_equal(build_correlation_labels(q[perm], 0.3),
                              build_correlation_labels(q, 0.3)[perm])


class TestWeights:
    def test_strong_saturation(self):
        w = weights_from_logits([[50.0, 0.0, 0.0]])
        assert w[0] == pytest.approx(1.0, abs=1e-15)

    def test_uniform(self):
        assert weights_from_logits(np.zeros((4, 3))) == pytest.approx([1.6 / 3] * 4, abs=1e-15)

    def test_unit_omega(self):
        logits = np.random.default_rng(0).normal(size=(6, 3)) * 5
        assert np.allclose(weights_from_logits(logits, (1.0, 1.0, 1.0)), 1.0, atol=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, (5, 3), elements=st.floats(-30, 30)))
    def test_bounded(self, logits):
        w = weights_from_logits(logits)
        assert np.all(w >= 0.1 - 1e-15) and np.all(w <= 1.0 + 1e-15)

    def test_patch_axis_sums_to_one(self):
        w = weights_from_logits(np.random.default_rng(1).normal(size=(5, 3)), axis="patch")
        assert w.sum() == pytest.approx(1.0, abs=1e-15) and np.all(w > 0)

    def test_unknown_axis(self):
        with pytest.raises(ConfigError):
            weights_from_logits(np.zeros((2, 3)), axis="both")


class TestPooling:
    def test_equal_weights(self):
        q = np.array([1.0, 2.0, 6.0])
        assert correlation_weight_pool(q, [0.4, 0.4, 0.4]) == pytest.approx(3.0, abs=1e-15)

    def test_worked_example(self):
        assert correlation_weight_pool([10.0, 50.0], [1.0, 3.0]) == 40.0

    def test_nonpositive_sum_falls_back(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert correlation_weight_pool([2.0, 4.0], [0.0, 0.0]) == 3.0
        assert "unweighted mean" in caplog.text

    def test_recomputation(self):
        r = np.random.default_rng(0)
        for _ in range(1000):
            C = int(r.integers(1, 33))
            q, w = r.uniform(0, 100, C), r.uniform(0.1, 1.0, C)
            ref = sum(a * b for a, b in zip(w, q)) / sum(w)
            assert abs(correlation_weight_pool(q, w) - ref) <= 1e-12 * max(1.0, abs(ref))

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 32), st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
    def test_convex_and_scale_invariant(self, C, seed, lam):
        r = np.random.default_rng(seed)
        q, w = r.uniform(0, 100, C), r.uniform(0.1, 1.0, C)
        p = correlation_weight_pool(q, w)
        assert q.min() <= p <= q.max()
        assert abs(correlation_weight_pool(q, lam * w) - p) <= 1e-12 * max(1.0, abs(p))

    def test_unit_omega_matches_average(self):
        r = np.random.default_rng(2)
        q = r.uniform(0, 100, 9)
        w = weights_from_logits(r.normal(size=(9, 3)), (1.0, 1.0, 1.0))
        assert abs(correlation_weight_pool(q, w) - average_pool(q)) <= 1e-12


class TestCoraNet:
    def test_shape(self):
        net = CoraNet(5, SMALL, seed=0)
        assert net(np.zeros((2, 7, 5))).shape == (2, 7, 3)
        assert net(np.zeros((4, 5))).shape == (1, 4, 3)

    def test_width_mismatch(self):
        with pytest.raises(ConfigError):
            CoraNet(5, SMALL)(np.zeros((1, 4, 6)))

    @pytest.mark.parametrize("train", [False, True])
    def test_permutation_equivariant_exactly(self, train):
        net = CoraNet(6, SMALL, seed=3)
        net.train() if train else net.eval()
        r = np.random.default_rng(4)
        for _ in range(20):
            C = int(r.integers(2, 17))
            x = r.normal(size=(2, C, 6))
            perm = r.permutation(C)
            assert np.array_equal(net(x[:, perm]).data, net(x).data[:, perm])

    def test_gradients_small(self):
        net = CoraNet(8, CoraConfig(hidden=8, blocks=1, heads=2), seed=0)
        x = Tensor(np.random.default_rng(1).normal(size=(1, 3, 8)), requires_grad=True)
        res = check_gradients("cora", lambda: ad.cross_entropy(
            ad.reshape(net(x), (-1, 3)), [0, 1, 2]), [x] + net.parameters(), 1e-3)
        assert res.passed, res

    def test_default_hidden_is_512(self):
        net = CoraNet(64, CoraConfig())
        assert net.in1.weight.shape == (64, 512) and len(net.blocks) == 4
