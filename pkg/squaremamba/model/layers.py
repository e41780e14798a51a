from collections import OrderedDict

import numpy as np

from squaremamba.autodiff import Tensor, functional as F
from squaremamba.errors import VersionError


def uniform(rng, bound, shape, name=None) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


class Module:
    """Base class of the network components.

    Parameters are the :py:class:`Tensor` attributes requiring a gradient,
    buffers are the numpy arrays named in ``_buffers``. Both are discovered by
    walking attributes in definition order, including lists of modules.
    """

    _buffers = ()

    def __init__(self):
        self.training = True

    def _children(self, active_only=False):
        inactive = self._inactive() if active_only else set()
        for name, value in vars(self).items():
            if name in inactive:
                continue
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and isinstance(value[0], Module):
                for i, module in enumerate(value):
                    yield f"{name}.{i}", module

    def _inactive(self) -> set:
        """names of children bypassed by the current configuration"""
        return set()

    def named_parameters(self, active_only=False, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self._children(active_only):
            yield from child.named_parameters(active_only, prefix=f"{prefix}{name}.")

    def parameters(self, active_only=False):
        return [p for _, p in self.named_parameters(active_only)]

    def parameter_count(self, active_only=False) -> int:
        return int(sum(p.size for p in self.parameters(active_only)))

    def named_buffers(self, prefix=""):
        for name in self._buffers:
            yield prefix + name, getattr(self, name)
        for name, child in self._children():
            yield from child.named_buffers(prefix=f"{prefix}{name}.")

    def modules(self):
        yield self
        for _, child in self._children():
            yield from child.modules()

    def train(self, mode=True):
        for module in self.modules():
            module.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> OrderedDict:
        state = OrderedDict()
        for name, p in self.named_parameters():
            state[name] = p.values.copy()
        for name, buffer in self.named_buffers():
            state[name] = buffer.copy()
        return state

    def load_state_dict(self, state: dict):
        """Copy arrays of ``state`` into the parameters and buffers, in place"""
        targets = OrderedDict((n, p.values) for n, p in self.named_parameters())
        targets.update(self.named_buffers())
        missing = set(targets) - set(state)
        unexpected = set(state) - set(targets)
        if missing or unexpected:
            raise VersionError(
                f"state does not match the network (missing: {sorted(missing)[:5]}, "
                f"unexpected: {sorted(unexpected)[:5]})"
            )
        for name, target in targets.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != target.shape:
                raise VersionError(
                    f"'{name}' has shape {value.shape}, network expects {target.shape}"
                )
            target[...] = value

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError()


class Linear(Module):
    """Affine map along the last axis, weight (n_in, n_out)"""

    def __init__(self, n_in, n_out, rng):
        super().__init__()
        bound = 1 / np.sqrt(n_in)
        self.weight = uniform(rng, bound, (n_in, n_out), "weight")
        self.bias = uniform(rng, bound, (n_out,), "bias")

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Conv1d(Module):
    """Same-length temporal convolution, kernel (size, k_in, k_out)"""

    def __init__(self, k_in, k_out, rng, size=3):
        super().__init__()
        bound = 1 / np.sqrt(k_in * size)
        self.kernel = uniform(rng, bound, (size, k_in, k_out), "kernel")
        self.bias = uniform(rng, bound, (k_out,), "bias")

    def forward(self, x):
        return F.conv1d_temporal(x, self.kernel, self.bias)


class DepthwiseConv2d(Module):
    def __init__(self, channels, rng, size=2):
        super().__init__()
        bound = 1 / size
        self.kernel = uniform(rng, bound, (channels, size, size), "kernel")
        self.bias = uniform(rng, bound, (channels,), "bias")

    def forward(self, x):
        return F.conv2d_depthwise(x, self.kernel, self.bias)


class BatchNorm(Module):
    """Per-channel (last axis) batch normalization with running statistics"""

    _buffers = ("running_mean", "running_var")

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.gamma = Tensor(np.ones(channels), requires_grad=True, name="gamma")
        self.beta = Tensor(np.zeros(channels), requires_grad=True, name="beta")
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x):
        return F.batchnorm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            training=self.training,
            momentum=self.momentum,
            eps=self.eps,
        )


class Dropout(Module):
    def __init__(self, p, rng):
        super().__init__()
        self.p = p
        self.rng = rng

    def forward(self, x):
        return F.dropout(x, self.p, training=self.training, rng=self.rng)
