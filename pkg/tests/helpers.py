"""Shared test oracles: central finite differences and gradient comparison."""

from __future__ import annotations

import numpy as np

from ganlab.tensor import Tensor


def central_diff(f, arrays, index, eps=1e-5):
    """Central-difference gradient of scalar f(*arrays) w.r.t. arrays[index]."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(*base))
        flat[i] = orig - eps
        lo = float(f(*base))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def rel_err(analytic, numeric):
    """Max abs difference scaled by the larger gradient magnitude (global)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(build_loss, arrays, tol=1e-4, eps=1e-5, indices=None):
    """Compare autodiff grads of build_loss(tensors) against central differences.

    build_loss receives one Tensor per input array and must return a scalar
    Tensor computed through recorded operations.  Returns the worst relative
    error across the checked inputs.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    loss = build_loss(*tensors)
    loss.backward()

    def eval_loss(*vals):
        ts = [Tensor(v) for v in vals]
        return build_loss(*ts).item()

    worst = 0.0
    for idx in indices if indices is not None else range(len(arrays)):
        numeric = central_diff(eval_loss, arrays, idx, eps=eps)
        analytic = tensors[idx].grad
        assert analytic is not None, f"no gradient for input {idx}"
        err = rel_err(analytic, numeric)
        worst = max(worst, err)
        assert err <= tol, f"input {idx}: rel err {err:.3e} > {tol}"
    return worst


def directional_check(build_loss, arrays, rng, tol=1e-4, eps=1e-5):
    """Directional central-difference check for larger parameter sets.

    Perturbs every array along one random direction and compares the scalar
    directional derivative with the dot product of the autodiff gradients.
    """
    dirs = [rng.standard_normal(a.shape) for a in arrays]
    norm = np.sqrt(sum(float((d * d).sum()) for d in dirs))
    dirs = [d / norm for d in dirs]

    ts = [Tensor(a, requires_grad=True) for a in arrays]
    loss = build_loss(*ts)
    loss.backward()
    analytic = sum(float((t.grad * d).sum()) for t, d in zip(ts, dirs))

    hi = build_loss(*[Tensor(a + eps * d) for a, d in zip(arrays, dirs)]).item()
    lo = build_loss(*[Tensor(a - eps * d) for a, d in zip(arrays, dirs)]).item()
    numeric = (hi - lo) / (2.0 * eps)
    scale = max(abs(analytic), abs(numeric), 1e-8)
    err = abs(analytic - numeric) / scale
    assert err <= tol, f"directional rel err {err:.3e} > {tol}"
    return err
