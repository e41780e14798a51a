from squaremamba import quantum
from squaremamba.autodiff import Tensor, astensor, concatenate, functional as F
from squaremamba.core.window import LAYOUT
from squaremamba.errors import DimensionError
from squaremamba.model.layers import BatchNorm, Conv1d, Linear, Module
from squaremamba.model.ssm import SelectiveSSM


def _swap_last(x):
    axes = list(range(x.ndim))
    axes[-2], axes[-1] = axes[-1], axes[-2]
    return x.transpose(axes)


class LocalTimeEncoding(Module):
    """Gated selective-scan encoder of one local time group (LTEM).

    ``S_ssm = ssm(silu(conv(LP1(S)))) * silu(LP2(S))`` and the output is
    ``elu(conv(batchnorm(LP3(S_ssm))))``, batch normalization running over
    batch and time.
    """

    def __init__(self, rng, channels=7, expand=2, state_size=16, momentum=0.1, eps=1e-5):
        super().__init__()
        inner = expand * channels
        self.lp1 = Linear(channels, inner, rng)
        self.conv1 = Conv1d(inner, inner, rng)
        self.ssm = SelectiveSSM(inner, rng, state_size=state_size)
        self.lp2 = Linear(channels, inner, rng)
        self.lp3 = Linear(inner, channels, rng)
        self.norm = BatchNorm(channels, momentum=momentum, eps=eps)
        self.conv2 = Conv1d(channels, channels, rng)

    def forward(self, s):
        u = F.activation("silu", self.conv1(self.lp1(s)))
        gate = F.activation("silu", self.lp2(s))
        s_ssm = self.ssm(u) * gate
        return F.activation("elu", self.conv2(self.norm(self.lp3(s_ssm))))


class QuantumLocalTimeEncoding(Module):
    """Quantum encoder of one local time group (QLTEM).

    Each variable's 3-month sequence is embedded in its own 3-qubit circuit
    with 11 trainable angles, the output being the Z expectations.
    """

    def __init__(self, rng, channels=7, init_scale=0.1):
        super().__init__()
        self.angles = Tensor(
            rng.uniform(-init_scale, init_scale, size=(channels, quantum.N_PARAMS)),
            requires_grad=True,
            name="angles",
        )

    def forward(self, s):
        s = astensor(s)
        if s.shape[-2:] != (quantum.N_QUBITS, self.angles.shape[0]):
            raise DimensionError(
                f"quantum encoding expects (..., {quantum.N_QUBITS}, {self.angles.shape[0]}), got {s.shape}"
            )
        return _swap_last(quantum.group_circuit(_swap_last(s), self.angles))


class TemporalEncodingBlock(Module):
    """Splits the window in consecutive month groups, each encoded by its own
    LTEM and QLTEM (non-shared weights), outputs summed and concatenated back.

    Parameters
    ----------
    rng : np.random.Generator
        generator used for initialization
    layout : WindowLayout, optional
        window layout
    quantum : bool, optional
        whether the quantum branch is used, by default True
    """

    def __init__(self, rng, layout=LAYOUT, quantum=True, expand=2, state_size=16, momentum=0.1, eps=1e-5):
        super().__init__()
        self.layout = layout
        self.quantum = quantum
        self.ltems = [
            LocalTimeEncoding(
                rng,
                channels=layout.variables,
                expand=expand,
                state_size=state_size,
                momentum=momentum,
                eps=eps,
            )
            for _ in range(layout.groups)
        ]
        self.qltems = [
            QuantumLocalTimeEncoding(rng, channels=layout.variables)
            for _ in range(layout.groups)
        ]

    def _inactive(self):
        return set() if self.quantum else {"qltems"}

    def forward(self, s):
        s = astensor(s)
        expected = (self.layout.months, self.layout.variables)
        if s.shape[-2:] != expected:
            raise DimensionError(f"temporal encoding expects (..., {expected}), got {s.shape}")
        step = self.layout.group_len
        outputs = []
        for g, ltem in enumerate(self.ltems):
            group = s[..., g * step : (g + 1) * step, :]
            f = ltem(group)
            if self.quantum:
                f = f + self.qltems[g](group)
            outputs.append(f)
        return concatenate(outputs, axis=-2)
