import numpy as np
from scipy.special import expit, ndtr

from squaremamba.autodiff.tensor import Tensor, _op, astensor
from squaremamba.errors import BatchError, ConfigurationError, DimensionError

__all__ = [
    "linear",
    "conv1d_temporal",
    "conv2d_depthwise",
    "maxpool_spatial",
    "activation",
    "batchnorm",
    "dropout",
    "ACTIVATIONS",
]

# largest float64 strictly below 3, so that 3·tanh never reaches the bound
_S_TANH_BOUND = np.nextafter(3.0, 0.0)
_SQRT_2PI = np.sqrt(2 * np.pi)


def linear(x, weight, bias=None) -> Tensor:
    """Affine map ``x @ weight + bias`` along the last axis.

    Parameters
    ----------
    x : Tensor
        input with shape (..., n_in)
    weight : Tensor
        weights with shape (n_in, n_out)
    bias : Tensor, optional
        bias with shape (n_out,), by default None

    Returns
    -------
    Tensor
        output with shape (..., n_out)
    """
    x, weight = astensor(x), astensor(weight)
    if weight.ndim != 2 or x.ndim < 1 or x.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"linear: input {x.shape} does not match weight {weight.shape}"
        )
    n_in, n_out = weight.shape
    values = x.values @ weight.values
    if bias is not None:
        bias = astensor(bias)
        if bias.shape != (n_out,):
            raise DimensionError(f"linear: bias {bias.shape} expected ({n_out},)")
        values = values + bias.values

    def rule(g):
        flat_g = g.reshape(-1, n_out)
        gx = g @ weight.values.T
        gw = x.values.reshape(-1, n_in).T @ flat_g
        gb = flat_g.sum(0) if bias is not None else None
        return gx, gw, gb

    return _op("linear", values, (x, weight, bias), rule)


def conv1d_temporal(x, kernel, bias=None) -> Tensor:
    """Same-length convolution along the time axis with zero padding.

    Parameters
    ----------
    x : Tensor
        input with shape (..., L, K_in)
    kernel : Tensor
        taps with shape (k, K_in, K_out), k odd (3 in the network)
    bias : Tensor, optional
        bias with shape (K_out,), by default None

    Returns
    -------
    Tensor
        output with shape (..., L, K_out)
    """
    x, kernel = astensor(x), astensor(kernel)
    if x.ndim < 2 or x.shape[-2] == 0 or x.shape[-1] == 0:
        raise DimensionError(f"conv1d_temporal: empty or malformed input {x.shape}")
    if kernel.ndim != 3 or kernel.shape[1] != x.shape[-1] or kernel.shape[0] % 2 == 0:
        raise DimensionError(
            f"conv1d_temporal: kernel {kernel.shape} does not match input {x.shape}"
        )
    k, k_in, k_out = kernel.shape
    pad = k // 2
    length = x.shape[-2]

    padded = np.zeros(x.shape[:-2] + (length + 2 * pad, k_in))
    padded[..., pad : pad + length, :] = x.values
    values = sum(padded[..., j : j + length, :] @ kernel.values[j] for j in range(k))
    if bias is not None:
        bias = astensor(bias)
        if bias.shape != (k_out,):
            raise DimensionError(f"conv1d_temporal: bias {bias.shape} expected ({k_out},)")
        values = values + bias.values

    def rule(g):
        g_padded = np.zeros_like(padded)
        g_kernel = np.zeros_like(kernel.values)
        flat_g = g.reshape(-1, k_out)
        for j in range(k):
            g_padded[..., j : j + length, :] += g @ kernel.values[j].T
            g_kernel[j] = padded[..., j : j + length, :].reshape(-1, k_in).T @ flat_g
        gx = g_padded[..., pad : pad + length, :]
        gb = flat_g.sum(0) if bias is not None else None
        return gx, g_kernel, gb

    return _op("conv1d_temporal", values, (x, kernel, bias), rule)


def conv2d_depthwise(x, kernel, bias=None) -> Tensor:
    """Valid depthwise 2D convolution, one kernel per channel.

    Parameters
    ----------
    x : Tensor
        input with shape (..., C, H, W)
    kernel : Tensor
        kernels with shape (C, kh, kw)
    bias : Tensor, optional
        bias with shape (C,), by default None

    Returns
    -------
    Tensor
        output with shape (..., C, H - kh + 1, W - kw + 1)
    """
    x, kernel = astensor(x), astensor(kernel)
    if x.ndim < 3 or kernel.ndim != 3 or kernel.shape[0] != x.shape[-3]:
        raise DimensionError(
            f"conv2d_depthwise: kernel {kernel.shape} does not match input {x.shape}"
        )
    channels, kh, kw = kernel.shape
    height, width = x.shape[-2:]
    if height < kh or width < kw:
        raise DimensionError(
            f"conv2d_depthwise: spatial size {(height, width)} smaller than kernel {(kh, kw)}"
        )
    out_h, out_w = height - kh + 1, width - kw + 1

    values = np.zeros(x.shape[:-2] + (out_h, out_w))
    for a in range(kh):
        for b in range(kw):
            tap = kernel.values[:, a, b][:, None, None]
            values += tap * x.values[..., a : a + out_h, b : b + out_w]
    if bias is not None:
        bias = astensor(bias)
        if bias.shape != (channels,):
            raise DimensionError(f"conv2d_depthwise: bias {bias.shape} expected ({channels},)")
        values = values + bias.values[:, None, None]

    def rule(g):
        gx = np.zeros_like(x.values)
        g_kernel = np.zeros_like(kernel.values)
        for a in range(kh):
            for b in range(kw):
                tap = kernel.values[:, a, b][:, None, None]
                gx[..., a : a + out_h, b : b + out_w] += tap * g
                window = x.values[..., a : a + out_h, b : b + out_w]
                g_kernel[:, a, b] = (
                    (g * window).reshape(-1, channels, out_h, out_w).sum((0, 2, 3))
                )
        gb = None
        if bias is not None:
            gb = g.reshape(-1, channels, out_h, out_w).sum((0, 2, 3))
        return gx, g_kernel, gb

    return _op("conv2d_depthwise", values, (x, kernel, bias), rule)


def maxpool_spatial(x) -> Tensor:
    """Per-channel maximum over the two trailing (spatial) axes.

    The gradient goes to the first maximal element in row-major order.
    """
    x = astensor(x)
    if x.ndim < 2 or x.shape[-1] == 0 or x.shape[-2] == 0:
        raise DimensionError(f"maxpool_spatial: malformed input {x.shape}")
    flat = x.values.reshape(x.shape[:-2] + (-1,))
    argmax = np.argmax(flat, axis=-1)[..., None]
    values = np.take_along_axis(flat, argmax, axis=-1)[..., 0]

    def rule(g):
        g_flat = np.zeros_like(flat)
        np.put_along_axis(g_flat, argmax, g[..., None], axis=-1)
        return (g_flat.reshape(x.shape),)

    return _op("maxpool_spatial", values, (x,), rule)


# activations
# -----------


def _silu(x):
    return x * expit(x)


def _d_silu(x, y):
    s = expit(x)
    return s * (1 + x * (1 - s))


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _scaled_tanh(x):
    return np.clip(3.0 * np.tanh(x), -_S_TANH_BOUND, _S_TANH_BOUND)


ACTIVATIONS = {
    "leaky_relu_0.2": (
        lambda x: np.where(x > 0, x, 0.2 * x),
        lambda x, y: np.where(x > 0, 1.0, 0.2),
    ),
    "silu": (_silu, _d_silu),
    "elu": (_elu, lambda x, y: np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))),
    "gelu": (
        lambda x: x * ndtr(x),
        lambda x, y: ndtr(x) + x * np.exp(-0.5 * x**2) / _SQRT_2PI,
    ),
    "sigmoid": (expit, lambda x, y: y * (1 - y)),
    "tanh": (np.tanh, lambda x, y: 1 - y**2),
    "scaled_tanh_3": (_scaled_tanh, lambda x, y: 3.0 * (1 - np.tanh(x) ** 2)),
    "softplus": (lambda x: np.logaddexp(0.0, x), lambda x, y: expit(x)),
}


def activation(kind: str, x) -> Tensor:
    """Elementwise activation.

    Parameters
    ----------
    kind : str
        one of :py:data:`ACTIVATIONS` keys
    x : Tensor
        input
    """
    if kind not in ACTIVATIONS:
        raise ConfigurationError(
            f"unknown activation '{kind}' (available: {', '.join(ACTIVATIONS)})"
        )
    forward, derivative = ACTIVATIONS[kind]
    x = astensor(x)
    values = forward(x.values)
    return _op(kind, values, (x,), lambda g: (g * derivative(x.values, values),))


def batchnorm(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalization over every axis but the last (channels).

    In training mode the batch statistics are used and the running statistics
    are updated in place (unbiased variance), in evaluation mode the running
    statistics are used.

    Parameters
    ----------
    x : Tensor
        input with shape (B, K) or (B, L, K)
    gamma, beta : Tensor
        per-channel scale and shift, shape (K,)
    running_mean, running_var : np.ndarray
        running statistics, shape (K,), updated in place when training
    training : bool
        whether to normalize with batch statistics
    """
    x, gamma, beta = astensor(x), astensor(gamma), astensor(beta)
    channels = x.shape[-1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError(
            f"batchnorm: gamma/beta {gamma.shape}/{beta.shape} expected ({channels},)"
        )
    axes = tuple(range(x.ndim - 1))

    if training:
        if x.ndim < 2 or x.shape[0] < 2:
            raise BatchError(
                f"batchnorm in training mode requires a batch of at least 2, got {x.shape}"
            )
        n = x.values.size // channels
        batch_mean = x.values.mean(axis=axes)
        batch_var = x.values.var(axis=axes)
        inv_std = 1.0 / np.sqrt(batch_var + eps)
        x_hat = (x.values - batch_mean) * inv_std

        running_mean *= 1 - momentum
        running_mean += momentum * batch_mean
        running_var *= 1 - momentum
        running_var += momentum * batch_var * n / (n - 1)

        def rule(g):
            g_hat = g * gamma.values
            gx = (inv_std / n) * (
                n * g_hat - g_hat.sum(axis=axes) - x_hat * (g_hat * x_hat).sum(axis=axes)
            )
            return gx, (g * x_hat).sum(axis=axes), g.sum(axis=axes)

    else:
        inv_std = 1.0 / np.sqrt(running_var + eps)
        x_hat = (x.values - running_mean) * inv_std

        def rule(g):
            gx = g * gamma.values * inv_std
            return gx, (g * x_hat).sum(axis=axes), g.sum(axis=axes)

    values = gamma.values * x_hat + beta.values
    return _op("batchnorm", values, (x, gamma, beta), rule)


def dropout(x, p: float = 0.2, training: bool = True, rng=None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1 / (1 - p), identity in evaluation"""
    if not 0 <= p < 1:
        raise ConfigurationError(f"dropout probability must be in [0, 1), got {p}")
    x = astensor(x)
    if not training or p == 0:
        return x
    if rng is None:
        rng = np.random.default_rng()
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _op("dropout", x.values * mask, (x,), lambda g: (g * mask,))
