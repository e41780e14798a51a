import numpy as np

from squaremamba.autodiff.tensor import Tape


def relative_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def numerical_gradient(fn, tensor, h=1e-5, indices=None) -> np.ndarray:
    """Central finite differences of the scalar ``fn()`` w.r.t. ``tensor`` entries

    ``tensor.values`` is perturbed in place and restored.
    """
    if indices is None:
        indices = np.arange(tensor.size)
    flat = tensor.values.reshape(-1)
    grad = np.zeros(len(indices))
    for k, i in enumerate(indices):
        original = flat[i]
        flat[i] = original + h
        f_plus = float(np.sum(fn().values))
        flat[i] = original - h
        f_minus = float(np.sum(fn().values))
        flat[i] = original
        grad[k] = (f_plus - f_minus) / (2 * h)
    return grad


def gradcheck(fn, tensors, h=1e-5, max_entries=None, rng=None) -> float:
    """Largest relative error between reverse-mode and finite-difference gradients

    Parameters
    ----------
    fn : callable
        function without arguments returning a scalar :py:class:`Tensor` computed
        from ``tensors``
    tensors : list of Tensor
        tensors to differentiate against (set to require gradients)
    h : float, optional
        finite-difference step, by default 1e-5
    max_entries : int, optional
        number of randomly sampled entries checked per tensor, by default all
    rng : np.random.Generator, optional
        generator used to sample entries

    Returns
    -------
    float
        maximum relative error over tensors
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for tensor in tensors:
        tensor.requires_grad = True
        tensor.zero_grad()

    with Tape() as tape:
        out = fn()
    tape.backward(out)

    errors = []
    for tensor in tensors:
        analytic = (
            np.zeros(tensor.size) if tensor.grad is None else tensor.grad.reshape(-1)
        )
        indices = np.arange(tensor.size)
        if max_entries is not None and tensor.size > max_entries:
            indices = np.sort(rng.choice(tensor.size, size=max_entries, replace=False))
        numeric = numerical_gradient(fn, tensor, h=h, indices=indices)
        errors.append(relative_error(analytic[indices], numeric))

    return max(errors)
