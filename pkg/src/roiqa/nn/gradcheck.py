"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    max_checks_per_param: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Compare analytic gradients of a scalar graph against central differences.

    `f` rebuilds the graph from the current parameter values on every call.
    Returns the max relative error (|a−n|)/(|a|+|n|+1e-12) over all checked
    components; `max_checks_per_param` subsamples components of large
    parameters (deterministic per seed).
    """
    for p in params:
        p.zero_grad()
    out = f()
    if out.data.size != 1:
        raise ValueError("grad_check requires a scalar-valued graph")
    if not np.isfinite(out.data).all():
        raise FloatingPointError("non-finite forward output")
    out.backward()
    analytic = []
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        analytic.append(np.array(g))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ga in zip(params, analytic):
        n = p.data.size
        if max_checks_per_param is not None and n > max_checks_per_param:
            flat_idx = np.sort(rng.choice(n, size=max_checks_per_param, replace=False))
        else:
            flat_idx = np.arange(n)
        flat = p.data.reshape(-1)
        ga_flat = ga.reshape(-1)
        for i in flat_idx:
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(f().data)
            flat[i] = orig - eps
            lo = float(f().data)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise FloatingPointError("non-finite output during finite differencing")
            numeric = (hi - lo) / (2.0 * eps)
            a = float(ga_flat[i])
            rel = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
            worst = max(worst, rel)
    return worst
