"""Central finite-difference verification of analytic gradients."""

import numpy as np

from .autodiff import Tensor, backward


def numeric_gradient(fn, tensors, wrt, step=1e-4):
    """Central finite differences of scalar ``fn(*tensors)`` w.r.t. one input."""
    t = tensors[wrt]
    grad = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(fn(*tensors).data)
        flat[i] = orig - step
        lo = float(fn(*tensors).data)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def check_gradients(fn, tensors, step=1e-4, rtol=1e-3, atol=1e-6):
    """Compare analytic and numeric gradients of ``fn`` for every input.

    ``fn`` maps Tensor inputs to a scalar Tensor; inputs must be float64 for
    the finite differences to resolve. Returns the worst elementwise
    discrepancy as ``(max_abs_err, max_ref_magnitude)`` and raises
    AssertionError with context on failure.
    """
    for t in tensors:
        t.zero_grad()
    loss = fn(*tensors)
    backward(loss)
    for i, t in enumerate(tensors):
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_gradient(fn, tensors, i, step=step)
        err = np.abs(analytic - numeric)
        tol = atol + rtol * np.maximum(np.abs(analytic), np.abs(numeric))
        if not (err <= tol).all():
            worst = np.unravel_index(np.argmax(err - tol), err.shape)
            raise AssertionError(
                f"gradient mismatch on input {i} at {worst}: "
                f"analytic={analytic[worst]:.8g} numeric={numeric[worst]:.8g}")
    return True
