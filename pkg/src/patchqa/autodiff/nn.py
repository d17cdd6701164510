"""Parameter containers built on the tensor engine."""

import numpy as np

from .tensor import BatchNormState, Tensor, batch_norm, layer_norm, linear


class Module:
    """Minimal parameter container.

    Parameters are attributes holding a ``Tensor`` with ``requires_grad``;
    submodules are attributes holding a ``Module`` or a list of them.
    Traversal is in sorted attribute order so names are stable.
    """

    training = True

    def _children(self):
        for name in sorted(vars(self)):
            value = getattr(self, name)
            if isinstance(value, (Tensor, Module, BatchNormState)):
                yield name, value
            elif isinstance(value, list) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{name}.{i}", v

    def named_parameters(self, prefix=""):
        for name, value in self._children():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name, value in self._children():
            if isinstance(value, BatchNormState):
                yield f"{prefix}{name}.running_mean", value, "running_mean"
                yield f"{prefix}{name}.running_var", value, "running_var"
            elif isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")

    def state_dict(self):
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        for name, owner, attr in self.named_buffers():
            state[name] = getattr(owner, attr).copy()
        return state

    def load_state_dict(self, state, prefix=""):
        expected = {prefix + n for n, _ in self.named_parameters()}
        expected |= {prefix + n for n, _, _ in self.named_buffers()}
        missing = sorted(expected - set(state))
        if missing:
            raise KeyError(f"state is missing {missing[:5]}")
        for name, p in self.named_parameters():
            arr = np.asarray(state[prefix + name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {arr.shape}")
            p.data = arr.copy()
        for name, owner, attr in self.named_buffers():
            setattr(owner, attr, np.asarray(state[prefix + name], dtype=np.float64).copy())

    def train(self, mode=True):
        self.training = mode
        for _, value in self._children():
            if isinstance(value, Module):
                value.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def _uniform(rng, bound, shape):
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, d_in, d_out, rng):
        bound = 1.0 / np.sqrt(d_in)
        self.weight = _uniform(rng, bound, (d_in, d_out))
        self.bias = _uniform(rng, bound, (d_out,))

    def __call__(self, x):
        return linear(x, self.weight, self.bias)


class BatchNorm(Module):
    def __init__(self, d, momentum=0.9, eps=1e-5):
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)
        self.stats = BatchNormState(d, momentum=momentum, eps=eps)

    def __call__(self, x):
        return batch_norm(x, self.gamma, self.beta, self.stats, training=self.training)


class LayerNorm(Module):
    def __init__(self, d, eps=1e-5):
        self.gamma = Tensor(np.ones(d), requires_grad=True)
        self.beta = Tensor(np.zeros(d), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        return layer_norm(x, self.gamma, self.beta, self.eps)
