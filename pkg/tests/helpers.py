"""Shared test utilities: brute-force transform oracles and gradient checks."""

import numpy as np


def dft2_bruteforce(grid):
    """O(N^4) double-sum DFT, kept deliberately independent of numpy.fft."""
    height, width = grid.shape
    out = np.zeros((height, width // 2 + 1), dtype=np.complex128)
    for u in range(height):
        for v in range(width // 2 + 1):
            acc = 0.0 + 0.0j
            for x in range(height):
                for y in range(width):
                    phase = -2.0 * np.pi * (u * x / height + v * y / width)
                    acc += grid[x, y] * complex(np.cos(phase), np.sin(phase))
            out[u, v] = acc
    return out


def dct2_bruteforce(grid):
    """O(N^4) double-sum DCT-II with the unnormalized cosine basis."""
    n_w, n_h = grid.shape
    out = np.zeros((n_w, n_h))
    for w in range(n_w):
        for h in range(n_h):
            acc = 0.0
            for i in range(n_w):
                for j in range(n_h):
                    acc += (
                        grid[i, j]
                        * np.cos(np.pi * w * (i + 0.5) / n_w)
                        * np.cos(np.pi * h * (j + 0.5) / n_h)
                    )
            out[w, h] = acc
    return out


def numeric_grad(fn, x, h=1e-4):
    """Central finite differences of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64).copy()
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        f_plus = fn(x)
        x[idx] = orig - h
        f_minus = fn(x)
        x[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
        it.iternext()
    return grad


def grad_rel_err(analytic, numeric):
    """Worst absolute difference relative to the gradient scale.

    The 1e-6 floor keeps identically-zero gradients (e.g. a conv bias that
    batch norm cancels) from turning finite-difference rounding noise into a
    spurious relative error.
    """
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-6)
    return float(np.abs(analytic - numeric).max() / scale)


def check_layer_gradients(layer, x, tol=1e-3, seed=0, h=1e-4):
    """Finite-difference check of dL/dx and every dL/dparam for a layer.

    L = sum(w * layer(x)) for a fixed random weighting w. The layer must be
    built in float64. Returns the worst relative error seen.
    """
    rng = np.random.default_rng(seed)
    y = layer.forward(x.copy())
    weights = rng.normal(size=y.shape)

    def loss():
        return float(np.sum(weights * layer.forward(x.copy())))

    layer.zero_grads()
    layer.forward(x.copy())
    dx = layer.backward(weights.copy())
    analytic_params = {k: v.copy() for k, v in layer.named_grads()}

    worst = grad_rel_err(dx, numeric_grad(lambda xv: float(np.sum(weights * layer.forward(xv.copy()))), x, h))
    params = dict(layer.named_params())
    for name, param in params.items():
        numeric = np.zeros_like(param)
        it = np.nditer(param, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = param[idx]
            param[idx] = orig + h
            f_plus = loss()
            param[idx] = orig - h
            f_minus = loss()
            param[idx] = orig
            numeric[idx] = (f_plus - f_minus) / (2.0 * h)
            it.iternext()
        err = grad_rel_err(analytic_params[name], numeric)
        worst = max(worst, err)
        assert err < tol, f"gradient mismatch for {name}: rel err {err:.2e}"
    assert worst < tol, f"input gradient mismatch: rel err {worst:.2e}"
    return worst
