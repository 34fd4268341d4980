"""Shared test helpers: finite-difference gradient checking."""

import numpy as np
import pytest


def relative_error(a, b):
    """Max elementwise difference normalized by the larger tensor scale.

    The denominator floors at 1 so tiny true gradients are compared
    absolutely rather than blowing up the ratio.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(1.0, np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    return float(np.abs(a - b).max(initial=0.0) / scale)


def numeric_gradient(func, tensor, proj, h=1e-5):
    """Central-difference gradient of sum(func().value * proj) wrt tensor."""
    numeric = np.zeros_like(tensor.value)
    flat = tensor.value.reshape(-1)
    out = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float((func().value * proj).sum())
        flat[i] = orig - h
        down = float((func().value * proj).sum())
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return numeric


def gradcheck(build, tensors, rng, h=1e-5, rel_tol=1e-4):
    """Compare reverse-mode gradients of the zero-argument ``build``
    closure (capturing ``tensors``) against central finite differences;
    returns the worst relative error."""
    for t in tensors:
        t.grad = None
    out = build()
    proj = rng.normal(size=out.shape)
    out.backward(proj)
    worst = 0.0
    for t in tensors:
        if not t.requires_grad:
            continue
        assert t.grad is not None, "no gradient reached a differentiable input"
        analytic = t.grad.copy()
        numeric = numeric_gradient(build, t, proj, h=h)
        err = relative_error(analytic, numeric)
        worst = max(worst, err)
        assert err < rel_tol, f"gradient mismatch: rel err {err:.3e} >= {rel_tol}"
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
