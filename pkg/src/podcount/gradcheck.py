"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, no_grad


class GradientCheckError(RuntimeError):
    """Raised when a check cannot be trusted (non-finite values) or fails a tolerance."""


def gradient_check(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-5,
    tol: float | None = None,
    max_elements_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare the analytic gradient of ``f`` against central differences.

    ``f`` maps the parameter dict to a scalar Tensor.  Every parameter is
    perturbed elementwise by +/- eps (a deterministic subsample of elements
    when ``max_elements_per_param`` is set, which keeps large models inside a
    time budget) and the relative error

        |g_analytic - g_fd| / max(1, |g_analytic|, |g_fd|)

    is maximized over all checked elements.  Use 64-bit parameters; 32-bit
    rounding swamps the differences this is meant to detect.

    Returns the max relative error.  Raises :class:`GradientCheckError` if
    any evaluation is non-finite (a silent pass would hide the real problem),
    or if ``tol`` is given and the error exceeds it.
    """
    for p in params.values():
        p.zero_grad()
    out = f(params)
    if not np.isfinite(out.data).all():
        raise GradientCheckError("objective is non-finite at the given parameters")
    out.backward()
    analytic = {}
    for name, p in params.items():
        analytic[name] = np.zeros_like(p.data) if p.grad is None else p.grad.copy()

    if rng is None:
        rng = np.random.default_rng(0)

    max_err = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_elements_per_param is not None and n > max_elements_per_param:
            idx = rng.choice(n, size=max_elements_per_param, replace=False)
        else:
            idx = np.arange(n)
        ga_flat = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                f_plus = f(params).item()
            flat[i] = orig - eps
            with no_grad():
                f_minus = f(params).item()
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise GradientCheckError(
                    f"non-finite objective while perturbing {name!r}[{i}]"
                )
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            g_a = ga_flat[i]
            err = abs(g_a - g_fd) / max(1.0, abs(g_a), abs(g_fd))
            if err > max_err:
                max_err = err

    if tol is not None and max_err > tol:
        raise GradientCheckError(f"max relative error {max_err:.3e} exceeds tol {tol:.3e}")
    return max_err
