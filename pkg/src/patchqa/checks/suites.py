"""Finite-difference suites over every differentiable op and two tiny networks."""

import numpy as np

from .. import autodiff as ad
from ..arkp import PatchQualityModel
from ..autodiff import Tensor
from ..config import ArkpConfig, CoraConfig
from ..cora import CoraNet
from ..geometry import keyed_rng
from .gradcheck import check_gradients

OP_TOLERANCE = 1e-4
NET_TOLERANCE = 1e-3


def _leaf(rng, *shape, scale=1.0):
    return Tensor(rng.normal(scale=scale, size=shape), requires_grad=True)


def _projected(out, rng):
    """Scalar loss ``sum(out * R)`` with a fixed random R so no gradient cancels."""
    r = rng.normal(size=out.shape)
    return lambda o: ad.tensor_sum(ad.mul(o, r))


def _op_case(name, rng, inputs, build):
    proj = _projected(build(*inputs), rng)
    return name, (lambda: proj(build(*inputs))), list(inputs)


def op_cases(seed=0):
    rng = keyed_rng(seed, "gradcheck")
    bn_state = ad.BatchNormState(4)
    bn_state.running_mean[:] = rng.normal(size=4)
    bn_state.running_var[:] = rng.uniform(0.5, 2.0, size=4)
    idx = rng.integers(0, 5, size=(2, 3, 4))
    labels = rng.integers(0, 3, size=6)
    target = rng.normal(size=(5,))
    L = lambda *s, **kw: _leaf(rng, *s, **kw)  # noqa: E731
    cases = [
        ("add", (L(3, 4), L(4)), ad.add),
        ("mul", (L(3, 4), L(3, 1)), ad.mul),
        ("matmul", (L(3, 5), L(5, 9)), ad.matmul),
        ("matmul narrow", (L(2, 3, 5), L(5, 3)), ad.matmul),
        ("matmul batched", (L(2, 3, 5), L(2, 5, 4)), ad.matmul),
        ("linear", (L(3, 5), L(5, 4), L(4)), ad.linear),
        ("leaky_relu", (L(4, 5),), ad.leaky_relu),
        ("batch_norm train", (L(6, 4), L(4), L(4)),
         lambda x, g, b: ad.batch_norm(x, g, b, ad.BatchNormState(4), training=True)),
        ("batch_norm eval", (L(6, 4), L(4), L(4)),
         lambda x, g, b: ad.batch_norm(x, g, b, bn_state, training=False)),
        ("layer_norm", (L(3, 6), L(6), L(6)), ad.layer_norm),
        ("softmax", (L(3, 5),), lambda x: ad.softmax(x, axis=-1)),
        ("attention", (L(2, 4, 3), L(2, 4, 3), L(2, 4, 3)), ad.attention),
        ("max_reduce", (L(4, 5, 3),), lambda x: ad.max_reduce(x, axis=1)),
        ("maximum", (L(3, 4), L(3, 4)), ad.maximum),
        ("mse_loss", (L(5),), lambda p: ad.mse_loss(p, target)),
        ("cross_entropy", (L(6, 3),), lambda z: ad.cross_entropy(z, labels)),
        ("sum", (L(3, 4),), lambda x: ad.tensor_sum(x, axis=0)),
        ("mean", (L(3, 4),), lambda x: ad.mean(x, axis=1)),
        ("reshape", (L(3, 4),), lambda x: ad.reshape(x, (2, 6))),
        ("transpose", (L(2, 3, 4),), lambda x: ad.transpose(x, (2, 0, 1))),
        ("concat", (L(3, 2), L(3, 4)), lambda a, b: ad.concat([a, b], axis=-1)),
        ("stack", (L(3, 2), L(3, 2)), lambda a, b: ad.stack([a, b], axis=1)),
        ("gather", (L(2, 5, 3),), lambda x: ad.gather(x, idx)),
    ]
    return [_op_case(name, rng, inputs, fn) for name, inputs, fn in cases]


TINY_ARKP = ArkpConfig(d_branch=4, pre_width=4, group_k=4, level_divisors=(2, 4),
                       widths=((4, 5), (5,)), head_hidden=4)
TINY_CORA = CoraConfig(hidden=8, blocks=1, heads=2, ff_mult=2)


def net_cases(seed=0):
    rng = keyed_rng(seed, "gradcheck-nets")
    model = PatchQualityModel(16, 12, TINY_ARKP, seed=seed)
    model.train()
    tex = rng.normal(size=(3, 16, 6))
    struct = rng.normal(size=(3, 12, 6))
    mos = rng.normal(size=3)
    seeds = [1, 2, 3]
    arkp_fn = lambda: ad.mse_loss(model(tex, struct, seeds)[1], mos)  # noqa: E731

    cora = CoraNet(5, TINY_CORA, seed=seed)
    feats = _leaf(rng, 2, 4, 5)
    labels = rng.integers(0, 3, size=8)
    cora_fn = lambda: ad.cross_entropy(ad.reshape(cora(feats), (-1, 3)), labels)  # noqa: E731
    return [("tiny ARKP model", arkp_fn, model.parameters()),
            ("tiny CORA network", cora_fn, cora.parameters() + [feats])]


def run_gradcheck_suite(seed=0):
    results = [check_gradients(n, fn, ts, OP_TOLERANCE) for n, fn, ts in op_cases(seed)]
    results += [check_gradients(n, fn, ts, NET_TOLERANCE) for n, fn, ts in net_cases(seed)]
    return results
