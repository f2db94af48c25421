from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import NonFiniteError, Tape, Tensor, backward


@dataclass
class GradCheckResult:
    worst: float
    checked: int
    skipped_kinks: int = 0
    below_resolution: int = 0


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-6,
    n_coords: int | None = 50,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between tape gradients and central differences.

    ``f`` rebuilds the scalar loss from the current contents of ``params``.
    ``n_coords`` coordinates are sampled uniformly over all parameter entries
    (``None`` checks every entry). Relative error uses the denominator
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    return grad_check_detail(f, params, eps, n_coords, rng).worst


def grad_check_detail(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-6,
    n_coords: int | None = 50,
    rng: np.random.Generator | None = None,
    skip_kinks: bool = False,
    kink_tol: float = 1e-3,
    resolution: float | None = 0.0,
) -> GradCheckResult:
    """Like :func:`grad_check`, with optional kink rejection.

    ReLU and hinge terms make the loss piecewise smooth. When a sampled
    coordinate sits within ``eps`` of a breakpoint the central difference
    averages two slopes and says nothing about the gradient. With
    ``skip_kinks`` such coordinates are detected by disagreement of the two
    one-sided differences (relative gap above ``kink_tol``), counted, and
    replaced by fresh samples until ``n_coords`` smooth ones are checked.

    A difference quotient cannot resolve slopes below roughly
    ``ulp(f) / eps``. Coordinates where both gradients fall under
    ``resolution`` (``None`` picks ``8 * eps_mach * max(|f|, 1) / eps``) are
    counted in ``below_resolution``, must agree to within it in absolute terms
    (else ``worst`` is infinite) and, like kinks, do not count towards
    ``n_coords``. ``resolution=0`` disables this.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    backward(loss, tape)
    f0 = loss.item()
    analytic = [p.grad.copy() for p in params]
    if resolution is None:
        resolution = 8 * np.finfo(float).eps * max(abs(f0), 1.0) / eps

    sizes = np.array([p.size for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    # full permutation: kinks are replaced by the next unused coordinate
    order = np.arange(total) if n_coords is None or n_coords >= total else rng.permutation(total)
    want = total if n_coords is None else min(n_coords, total)

    worst, checked, kinks, tiny = 0.0, 0, 0, 0
    for idx in order:
        if checked == want:
            break
        which = int(np.searchsorted(offsets, idx, side="right") - 1)
        p = params[which]
        local = np.unravel_index(idx - offsets[which], p.shape)
        orig = p.data[local]
        p.data[local] = orig + eps
        up = f().item()
        p.data[local] = orig - eps
        down = f().item()
        p.data[local] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NonFiniteError("objective became non-finite during grad_check")
        if skip_kinks:
            fwd, bwd = (up - f0) / eps, (f0 - down) / eps
            if abs(fwd - bwd) > kink_tol * max(abs(fwd), abs(bwd)) + 1e-6:
                kinks += 1
                continue
        num = (up - down) / (2 * eps)
        ana = analytic[which][local]
        if max(abs(ana), abs(num)) < resolution:
            tiny += 1
            if abs(ana - num) > resolution:
                worst = np.inf
            continue
        err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
        worst = max(worst, err)
        checked += 1
    return GradCheckResult(float(worst), checked, kinks, tiny)
