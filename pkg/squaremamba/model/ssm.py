import numpy as np

from squaremamba.autodiff import Tensor, astensor, stack, functional as F
from squaremamba.errors import DimensionError
from squaremamba.model.layers import Linear, Module


def selective_scan(x, a_bar, b_bar, c, d) -> Tensor:
    """Per-channel linear recurrence with input-dependent parameters.

    ``h_i = a_bar_i * h_{i-1} + b_bar_i * x_i`` and ``y_i = <c_i, h_i> + d * x_i``
    with ``h_0 = 0``, the hidden state of each channel being an N-vector.

    Parameters
    ----------
    x : Tensor
        input sequence, shape (..., L, D)
    a_bar : Tensor
        discretized (diagonal) state transitions, shape (..., L, D, N)
    b_bar : Tensor
        discretized input maps, shape (..., L, D, N)
    c : Tensor
        read-out vectors shared by the channels, shape (..., L, N)
    d : Tensor
        skip weights, shape (D,)

    Returns
    -------
    Tensor
        output sequence, shape (..., L, D)
    """
    x, a_bar, b_bar, c, d = map(astensor, (x, a_bar, b_bar, c, d))
    length, channels = x.shape[-2:]
    state_size = c.shape[-1]
    expected = x.shape + (state_size,)
    if length < 1 or a_bar.shape != expected or b_bar.shape != expected:
        raise DimensionError(
            f"selective_scan: x {x.shape}, a_bar {a_bar.shape}, b_bar {b_bar.shape}, "
            f"c {c.shape} are inconsistent"
        )
    if d.shape != (channels,):
        raise DimensionError(f"selective_scan: d {d.shape} expected ({channels},)")

    h = None
    outputs = []
    for i in range(length):
        x_i = x[..., i, :]
        drive = b_bar[..., i, :, :] * x_i.unsqueeze(-1)
        h = drive if h is None else a_bar[..., i, :, :] * h + drive
        y = (h * c[..., i, :].unsqueeze(-2)).sum(axis=-1) + x_i * d
        outputs.append(y)
    return stack(outputs, axis=-2)


class SelectiveSSM(Module):
    """Selective state-space layer with a diagonal state matrix.

    ``delta = softplus(linear_delta(x))``, ``a_bar = exp(delta * a)``,
    ``b_bar = delta * linear_b(x)`` and ``c = linear_c(x)``.
    """

    def __init__(self, channels, rng, state_size=16, delta_init=0.1):
        super().__init__()
        self.linear_delta = Linear(channels, channels, rng)
        # softplus(bias) = delta_init at initialization
        self.linear_delta.bias.values[:] = np.log(np.expm1(delta_init))
        self.a = Tensor(-np.ones((channels, state_size)), requires_grad=True, name="a")
        self.linear_b = Linear(channels, state_size, rng)
        self.linear_c = Linear(channels, state_size, rng)
        self.d = Tensor(np.ones(channels), requires_grad=True, name="d")

    def forward(self, x):
        delta = F.activation("softplus", self.linear_delta(x)).unsqueeze(-1)
        a_bar = (delta * self.a).exp()
        b_bar = delta * self.linear_b(x).unsqueeze(-2)
        c = self.linear_c(x)
        return selective_scan(x, a_bar, b_bar, c, self.d)
