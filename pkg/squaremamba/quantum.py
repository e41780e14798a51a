"""Exact statevector simulation of the 3-qubit local time encoding circuit.

States are complex arrays of shape (..., 8) indexed by the basis ``|q0 q1 q2>``
with ``q0`` the most significant bit. Every function broadcasts over leading
axes, so a whole batch of samples and variable groups is simulated at once.
"""

from dataclasses import dataclass

import numpy as np

from squaremamba.autodiff.tensor import Tensor, _op, _unbroadcast, astensor
from squaremamba.errors import DimensionError, UsageError, ValidationError

N_QUBITS = 3
N_PARAMS = 11
N_ANGLES = N_QUBITS + N_PARAMS
SHIFT = np.pi / 2

PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

# cyclic basis change: W Z W^† = Y and W Y W^† = X
_W = 0.5 * (np.eye(2) + 1j * (PAULI_X + PAULI_Y + PAULI_Z))


# gate matrices
# -------------


def ry_matrix(theta) -> np.ndarray:
    """Rotation around Y, shape (..., 2, 2)"""
    theta = np.asarray(theta, dtype=np.float64)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2).astype(
        np.complex128
    )


def rx_matrix(theta) -> np.ndarray:
    """Rotation around X, shape (..., 2, 2)"""
    theta = np.asarray(theta, dtype=np.float64)
    c, s = np.cos(theta / 2) + 0j, -1j * np.sin(theta / 2)
    return np.stack([np.stack([c, s], -1), np.stack([s, c], -1)], -2)


def xx_matrix(theta) -> np.ndarray:
    """Ising XX coupling exp(-i θ/2 X⊗X), shape (..., 4, 4)"""
    theta = np.asarray(theta, dtype=np.float64)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    matrix = np.zeros(theta.shape + (4, 4), dtype=np.complex128)
    for i in range(4):
        matrix[..., i, i] = c
        matrix[..., i, 3 - i] = -1j * s
    return matrix


def ccnot_matrix(ctrl_one: int, ctrl_zero: int, target: int) -> np.ndarray:
    """8×8 permutation flipping ``target`` when ``ctrl_one`` is 1 and ``ctrl_zero`` is 0"""
    images = apply_ccnot(np.eye(8, dtype=np.complex128), ctrl_one, ctrl_zero, target)
    return images.T


def random_unitary(rng=None, n: int = 2) -> np.ndarray:
    """Haar-distributed n×n unitary from the QR decomposition of a complex Gaussian matrix"""
    rng = np.random.default_rng() if rng is None else rng
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


# state manipulation
# ------------------


def zero_state(batch_shape=()) -> np.ndarray:
    state = np.zeros(tuple(batch_shape) + (2**N_QUBITS,), dtype=np.complex128)
    state[..., 0] = 1.0
    return state


def _check_wires(*wires):
    for wire in wires:
        if not 0 <= wire < N_QUBITS:
            raise IndexError(f"wire {wire} out of range [0, {N_QUBITS - 1}]")
    if len(set(wires)) != len(wires):
        raise UsageError(f"gate wires must be distinct, got {wires}")


def _tensor_view(state):
    batch = state.shape[:-1]
    return state.reshape(batch + (2,) * N_QUBITS), len(batch)


def apply_single(state, wire: int, matrix) -> np.ndarray:
    """Apply a (batch of) 2×2 matrix to ``wire``"""
    _check_wires(wire)
    psi, nb = _tensor_view(np.asarray(state))
    psi = np.moveaxis(psi, nb + wire, -1)
    psi = (matrix[..., None, None, :, :] @ psi[..., None])[..., 0]
    psi = np.moveaxis(psi, -1, psi.ndim - N_QUBITS + wire)
    return psi.reshape(psi.shape[: psi.ndim - N_QUBITS] + (2**N_QUBITS,))


def apply_two(state, wire_a: int, wire_b: int, matrix) -> np.ndarray:
    """Apply a (batch of) 4×4 matrix to the ordered pair (wire_a, wire_b)"""
    _check_wires(wire_a, wire_b)
    psi, nb = _tensor_view(np.asarray(state))
    psi = np.moveaxis(psi, (nb + wire_a, nb + wire_b), (-2, -1))
    shape = psi.shape
    psi = psi.reshape(shape[:-2] + (4,))
    psi = (matrix[..., None, :, :] @ psi[..., None])[..., 0]
    psi = psi.reshape(psi.shape[:-1] + (2, 2))
    nb = psi.ndim - N_QUBITS
    psi = np.moveaxis(psi, (-2, -1), (nb + wire_a, nb + wire_b))
    return psi.reshape(psi.shape[:nb] + (2**N_QUBITS,))


def apply_ry(state, wire: int, theta) -> np.ndarray:
    return apply_single(state, wire, ry_matrix(theta))


def apply_rx(state, wire: int, theta) -> np.ndarray:
    return apply_single(state, wire, rx_matrix(theta))


def apply_xx(state, wire_a: int, wire_b: int, theta) -> np.ndarray:
    return apply_two(state, wire_a, wire_b, xx_matrix(theta))


def apply_ccnot(state, ctrl_one: int, ctrl_zero: int, target: int) -> np.ndarray:
    """Flip ``target`` on the basis states where ``ctrl_one`` is 1 and ``ctrl_zero`` is 0"""
    _check_wires(ctrl_one, ctrl_zero, target)
    psi, _ = _tensor_view(np.asarray(state))
    out = psi.copy()
    index = [slice(None)] * N_QUBITS
    index[ctrl_one], index[ctrl_zero] = 1, 0
    low, high = list(index), list(index)
    low[target], high[target] = 0, 1
    low, high = (Ellipsis, *low), (Ellipsis, *high)
    out[low], out[high] = psi[high], psi[low]
    return out.reshape(np.shape(state))


def expect_z(state, wire: int) -> np.ndarray:
    """Expectation of Pauli-Z on ``wire``, real in [-1, 1]"""
    _check_wires(wire)
    psi, nb = _tensor_view(np.asarray(state))
    probs = np.moveaxis(np.abs(psi) ** 2, nb + wire, -1)
    probs = probs.sum(axis=(-3, -2))
    return probs[..., 0] - probs[..., 1]


# group circuit
# -------------


@dataclass
class GroupCircuitParams:
    """Trainable angles of one group circuit (radians)"""

    ry1: np.ndarray
    """first RY layer, one angle per wire"""
    xx01: float
    """Ising coupling of wires 0 and 1"""
    rx: np.ndarray
    """RX layer, one angle per wire"""
    xx12: float
    """Ising coupling of wires 1 and 2"""
    ry2: np.ndarray
    """last RY layer, one angle per wire"""

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.ry1, [self.xx01], self.rx, [self.xx12], self.ry2]
        ).astype(np.float64)

    @classmethod
    def from_vector(cls, vector):
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (N_PARAMS,):
            raise DimensionError(
                f"group circuit takes {N_PARAMS} angles, got shape {vector.shape}"
            )
        return cls(
            ry1=vector[0:3].copy(),
            xx01=float(vector[3]),
            rx=vector[4:7].copy(),
            xx12=float(vector[7]),
            ry2=vector[8:11].copy(),
        )


def _check_circuit_args(inputs, params):
    inputs = np.asarray(inputs, dtype=np.float64)
    if isinstance(params, GroupCircuitParams):
        params = params.to_vector()
    params = np.asarray(params, dtype=np.float64)
    if inputs.shape[-1:] != (N_QUBITS,) or params.shape[-1:] != (N_PARAMS,):
        raise DimensionError(
            f"group circuit expects inputs (..., {N_QUBITS}) and params (..., {N_PARAMS}),"
            f" got {inputs.shape} and {params.shape}"
        )
    return inputs, params


def run_group_circuit(inputs, params) -> np.ndarray:
    """Expectations of Z on the three wires after the group circuit.

    Starting from ``|000>``: RY data embedding of ``inputs``, RY layer, XX on
    (0, 1), RX layer, XX on (1, 2), RY layer, then the three mixed-polarity
    Toffolis CCNOT(0, 1, 2), CCNOT(1, 2, 0), CCNOT(2, 0, 1).

    Parameters
    ----------
    inputs : array_like
        embedding angles with shape (..., 3)
    params : array_like or GroupCircuitParams
        trainable angles with shape (..., 11), see :py:class:`GroupCircuitParams`

    Returns
    -------
    np.ndarray
        (..., 3) expectations, in [-1, 1]
    """
    inputs, params = _check_circuit_args(inputs, params)
    batch = np.broadcast_shapes(inputs.shape[:-1], params.shape[:-1])
    state = zero_state(batch)

    for q in range(N_QUBITS):
        state = apply_ry(state, q, inputs[..., q])
    for q in range(N_QUBITS):
        state = apply_ry(state, q, params[..., q])
    state = apply_xx(state, 0, 1, params[..., 3])
    for q in range(N_QUBITS):
        state = apply_rx(state, q, params[..., 4 + q])
    state = apply_xx(state, 1, 2, params[..., 7])
    for q in range(N_QUBITS):
        state = apply_ry(state, q, params[..., 8 + q])
    for wires in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        state = apply_ccnot(state, *wires)

    return np.stack([expect_z(state, q) for q in range(N_QUBITS)], axis=-1)


def param_shift_grad(inputs, params, upstream):
    """Exact gradients of ``upstream · run_group_circuit(inputs, params)``.

    Every angle enters through a gate generated by an operator with eigenvalues
    ±1/2, so the two-term shift rule ``(f(a + π/2) - f(a - π/2)) / 2`` is exact.
    All 28 shifted circuits are simulated in one broadcast call.

    Returns
    -------
    tuple of np.ndarray
        gradients with the shapes of ``inputs`` and ``params``
    """
    inputs, params = _check_circuit_args(inputs, params)
    upstream = np.asarray(upstream, dtype=np.float64)
    batch = np.broadcast_shapes(inputs.shape[:-1], params.shape[:-1], upstream.shape[:-1])

    angles = np.concatenate(
        [
            np.broadcast_to(inputs, batch + (N_QUBITS,)),
            np.broadcast_to(params, batch + (N_PARAMS,)),
        ],
        axis=-1,
    )
    eye = np.eye(N_ANGLES) * SHIFT
    shifted = angles[..., None, :] + np.concatenate([eye, -eye])
    out = run_group_circuit(shifted[..., :N_QUBITS], shifted[..., N_QUBITS:])
    jacobian = (out[..., :N_ANGLES, :] - out[..., N_ANGLES:, :]) / 2
    grad = np.einsum("...aj,...j->...a", jacobian, np.broadcast_to(upstream, batch + (N_QUBITS,)))

    return (
        _unbroadcast(grad[..., :N_QUBITS], inputs.shape),
        _unbroadcast(grad[..., N_QUBITS:], params.shape),
    )


def group_circuit(inputs, params) -> Tensor:
    """Differentiable :py:func:`run_group_circuit` (gradients by parameter shift)"""
    inputs, params = astensor(inputs), astensor(params)
    values = run_group_circuit(inputs.values, params.values)

    def rule(g):
        return param_shift_grad(inputs.values, params.values, g)

    return _op("group_circuit", values, (inputs, params), rule)


# expressibility
# --------------


@dataclass
class EulerFit:
    """Angles of RY(alpha)·RX(beta)·RY(rho) fitted to a single-qubit unitary"""

    alpha: float
    beta: float
    rho: float
    residual: float
    """max-norm distance to the target up to a global phase"""

    @property
    def matrix(self):
        return ry_matrix(self.alpha) @ rx_matrix(self.beta) @ ry_matrix(self.rho)


def euler_expressibility_check(target, tol=1e-10) -> EulerFit:
    """Solve RY(α)·RX(β)·RY(ρ) = target up to a global phase.

    The target is mapped by the basis change ``W`` to a ZYZ decomposition whose
    angles are read from the matrix entries.

    Parameters
    ----------
    target : array_like
        2×2 unitary
    tol : float, optional
        unitarity tolerance, by default 1e-10
    """
    target = np.asarray(target, dtype=np.complex128)
    if target.shape != (2, 2):
        raise DimensionError(f"expected a 2×2 matrix, got shape {target.shape}")
    if np.max(np.abs(target.conj().T @ target - np.eye(2))) > tol:
        raise ValidationError("target is not unitary")

    v = _W.conj().T @ target @ _W
    v = v / np.sqrt(np.linalg.det(v))

    v10, v11 = v[1, 0], v[1, 1]
    beta = 2 * np.arctan2(np.abs(v10), np.abs(v11))
    total = 2 * np.angle(v11) if np.abs(v11) > 1e-12 else 0.0
    difference = 2 * np.angle(v10) if np.abs(v10) > 1e-12 else 0.0
    alpha, rho = (total + difference) / 2, (total - difference) / 2

    fit = EulerFit(float(alpha), float(beta), float(rho), 0.0)
    fitted = fit.matrix
    phase = np.angle(np.sum(np.conj(target) * fitted))
    fit.residual = float(np.max(np.abs(fitted - target * np.exp(1j * phase))))
    return fit
