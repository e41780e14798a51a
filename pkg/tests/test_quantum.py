import numpy as np
import pytest

from squaremamba import quantum
from squaremamba.autodiff import Tensor, gradcheck
from squaremamba.errors import DimensionError, UsageError, ValidationError

QUANTUM_TOL = 1e-6
rng = np.random.default_rng(7)


def basis(index):
    state = np.zeros(8, dtype=np.complex128)
    state[index] = 1.0
    return state


def _is_unitary(matrices):
    eye = np.eye(matrices.shape[-1])
    products = np.conj(np.swapaxes(matrices, -1, -2)) @ matrices
    return np.allclose(products, eye, atol=1e-12)


@pytest.mark.parametrize(
    "gate", [quantum.ry_matrix, quantum.rx_matrix, quantum.xx_matrix]
)
def test_gates_unitary(gate):
    angles = rng.uniform(-4 * np.pi, 4 * np.pi, size=1000)
    assert _is_unitary(gate(angles))


def test_rotation_examples():
    state = quantum.apply_ry(quantum.zero_state(), 0, np.pi)
    np.testing.assert_allclose(state, basis(4), atol=1e-15)

    state = quantum.apply_ry(quantum.zero_state(), 0, np.pi / 2)
    np.testing.assert_allclose(state, (basis(0) + basis(4)) / np.sqrt(2), atol=1e-15)

    state = quantum.apply_rx(quantum.zero_state(), 0, np.pi)
    np.testing.assert_allclose(state, -1j * basis(4), atol=1e-15)

    # wire 2 is the least significant bit
    state = quantum.apply_ry(quantum.zero_state(), 2, np.pi)
    np.testing.assert_allclose(state, basis(1), atol=1e-15)


def test_xx_examples():
    np.testing.assert_allclose(quantum.xx_matrix(0.0), np.eye(4))
    state = quantum.apply_xx(quantum.zero_state(), 0, 1, np.pi)
    np.testing.assert_allclose(state, -1j * basis(6), atol=1e-15)


def test_ccnot_examples():
    np.testing.assert_equal(quantum.apply_ccnot(basis(4), 0, 1, 2), basis(5))
    np.testing.assert_equal(quantum.apply_ccnot(basis(5), 0, 1, 2), basis(4))
    np.testing.assert_equal(quantum.apply_ccnot(basis(6), 0, 1, 2), basis(6))

    matrix = quantum.ccnot_matrix(0, 1, 2)
    np.testing.assert_equal(matrix @ basis(4), basis(5))
    np.testing.assert_equal(matrix @ matrix, np.eye(8))


def test_ccnot_layer_permutes_probabilities():
    amplitudes = rng.normal(size=(1000, 8)) + 1j * rng.normal(size=(1000, 8))
    state = amplitudes / np.linalg.norm(amplitudes, axis=-1, keepdims=True)
    before = np.abs(state) ** 2
    for wires in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        state = quantum.apply_ccnot(state, *wires)
    after = np.abs(state) ** 2
    np.testing.assert_equal(np.sort(after, axis=-1), np.sort(before, axis=-1))
    np.testing.assert_allclose(after.sum(axis=-1), 1.0, atol=1e-12)


def test_batched_gates():
    thetas = rng.normal(size=5)
    batch = quantum.apply_ry(quantum.zero_state((5,)), 1, thetas)
    for theta, state in zip(thetas, batch):
        np.testing.assert_allclose(state, quantum.apply_ry(quantum.zero_state(), 1, theta))


def test_wire_errors():
    with pytest.raises(IndexError):
        quantum.apply_ry(quantum.zero_state(), 3, 0.1)
    with pytest.raises(UsageError):
        quantum.apply_xx(quantum.zero_state(), 1, 1, 0.1)
    with pytest.raises(UsageError):
        quantum.apply_ccnot(quantum.zero_state(), 0, 2, 0)


def test_expect_z():
    assert quantum.expect_z(basis(0), 0) == 1
    assert quantum.expect_z(basis(4), 0) == -1
    assert quantum.expect_z(basis(4), 1) == 1
    plus = (basis(0) + basis(4)) / np.sqrt(2)
    np.testing.assert_allclose(quantum.expect_z(plus, 0), 0.0, atol=1e-15)


def test_zero_circuit():
    out = quantum.run_group_circuit(np.zeros(3), np.zeros(11))
    np.testing.assert_allclose(out, [1.0, 1.0, 1.0])


def test_circuit_bounds():
    inputs = rng.uniform(-10, 10, size=(500, 3))
    params = rng.uniform(-10, 10, size=(500, 11))
    out = quantum.run_group_circuit(inputs, params)
    assert out.shape == (500, 3)
    assert np.all(np.abs(out) <= 1 + 1e-12)


def test_circuit_periodicity():
    inputs, params = rng.normal(size=3), rng.normal(size=11)
    reference = quantum.run_group_circuit(inputs, params)
    for i in range(quantum.N_PARAMS):
        shifted = params.copy()
        shifted[i] += 2 * np.pi
        np.testing.assert_allclose(quantum.run_group_circuit(inputs, shifted), reference, atol=1e-12)


def test_params_vector():
    vector = np.arange(11.0)
    params = quantum.GroupCircuitParams.from_vector(vector)
    np.testing.assert_equal(params.rx, [4.0, 5.0, 6.0])
    assert params.xx12 == 7.0
    np.testing.assert_equal(params.to_vector(), vector)
    np.testing.assert_equal(
        quantum.run_group_circuit(np.ones(3), params),
        quantum.run_group_circuit(np.ones(3), vector),
    )
    with pytest.raises(DimensionError):
        quantum.GroupCircuitParams.from_vector(np.zeros(10))


def test_param_shift_single_rotation():
    thetas = np.array([0.3, np.pi / 2, 2.0])
    inputs = np.stack([thetas, np.zeros(3), np.zeros(3)], axis=-1)
    upstream = np.tile([1.0, 0.0, 0.0], (3, 1))
    grad_inputs, grad_params = quantum.param_shift_grad(inputs, np.zeros(11), upstream)
    np.testing.assert_allclose(grad_inputs[:, 0], -np.sin(thetas), atol=1e-12)
    np.testing.assert_allclose(grad_inputs[1, 0], -1.0)
    # the first RY layer adds to the embedding angle
    np.testing.assert_allclose(grad_params[0], -np.sin(thetas).sum(), atol=1e-12)


def test_param_shift_zero_upstream():
    grad_inputs, grad_params = quantum.param_shift_grad(
        rng.normal(size=(4, 3)), rng.normal(size=11), np.zeros((4, 3))
    )
    np.testing.assert_equal(grad_inputs, np.zeros((4, 3)))
    np.testing.assert_equal(grad_params, np.zeros(11))


def test_param_shift_matches_finite_differences():
    # 100 random points, every one of the 14 angles
    inputs = Tensor(rng.uniform(-np.pi, np.pi, size=(100, 3)))
    params = Tensor(rng.uniform(-np.pi, np.pi, size=(100, 11)))
    weight = Tensor(rng.normal(size=(100, 3)))

    def fn():
        return (quantum.group_circuit(inputs, params) * weight).sum()

    assert gradcheck(fn, [inputs, params]) < QUANTUM_TOL


def test_shared_params_gradient():
    inputs = Tensor(rng.normal(size=(6, 7, 3)))
    params = Tensor(rng.normal(size=(7, 11)))
    weight = Tensor(rng.normal(size=(6, 7, 3)))

    def fn():
        return (quantum.group_circuit(inputs, params) * weight).sum()

    assert gradcheck(fn, [inputs, params]) < QUANTUM_TOL


def test_euler_identity():
    fit = quantum.euler_expressibility_check(np.eye(2))
    np.testing.assert_allclose([fit.alpha, fit.beta, fit.rho], 0.0, atol=1e-12)
    assert fit.residual < 1e-12


def test_euler_rx():
    fit = quantum.euler_expressibility_check(quantum.rx_matrix(0.7))
    np.testing.assert_allclose([fit.alpha, fit.beta, fit.rho], [0.0, 0.7, 0.0], atol=1e-12)
    assert fit.residual < 1e-12


def test_euler_random_unitaries():
    generator = np.random.default_rng(0)
    residuals = [
        quantum.euler_expressibility_check(quantum.random_unitary(generator)).residual
        for _ in range(1000)
    ]
    assert max(residuals) < 1e-9


def test_euler_non_unitary():
    with pytest.raises(ValidationError):
        quantum.euler_expressibility_check([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(DimensionError):
        quantum.euler_expressibility_check(np.eye(3))
