"""Central finite-difference gradient checking.

This is the verification backbone: every differentiable operation in the
package is expected to match these numeric gradients at rel. err < 1e-4 in
double precision.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable

import torch

from .errors import NumericError

DEFAULT_EPS = 1e-5
GUARD = 1e-8
NOISE_FLOOR = 1e-10


def finite_diff_check(
    f: Callable[[], torch.Tensor],
    params: Iterable[torch.Tensor],
    eps: float = DEFAULT_EPS,
    noise_floor: float = NOISE_FLOOR,
) -> float:
    """Compare autograd gradients of the scalar ``f()`` against central
    differences, one coordinate at a time.

    Returns the max relative error over all coordinates, where the relative
    error denominator is max(|analytic|, |numeric|, 1e-8). Absolute
    differences at or below ``noise_floor`` count as matched: the central
    quotient carries ~|f|*2^-52/(2*eps) of float noise, so on near-zero
    gradient coordinates the raw ratio against the guard denominator would
    measure noise, not gradient correctness. Parameters must be leaf tensors
    with requires_grad; use double precision for meaningful tolerances.
    """
    params = list(params)
    for p in params:
        if not p.requires_grad:
            raise ValueError("all checked parameters must require grad")
        if p.grad is not None:
            p.grad = None

    value = f()
    if value.numel() != 1:
        raise ValueError("finite_diff_check needs a scalar-valued function")
    if not torch.isfinite(value):
        raise NumericError("function value is not finite at the base point")
    value.backward()
    analytic = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]

    max_rel = 0.0
    with torch.no_grad():
        for p, grad in zip(params, analytic):
            flat = p.view(-1)
            gflat = grad.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                f_plus = f().item()
                flat[i] = orig - eps
                f_minus = f().item()
                flat[i] = orig
                if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                    raise NumericError("function value is not finite at a probe point")
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = gflat[i].item()
                diff = abs(a - numeric)
                if diff <= noise_floor:
                    continue
                denom = max(abs(a), abs(numeric), GUARD)
                max_rel = max(max_rel, diff / denom)
    return max_rel
