from __future__ import annotations

import numpy as np

from .numerics.tensor import NonFiniteError, Tensor


def _adamw_update(theta, g, m, v, lr, b1, b2, eps, wd, bc1, bc2):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    if wd:
        theta *= 1.0 - lr * wd
    theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


class AdamW:
    """Adam with bias correction and decoupled weight decay.

    Per step: ``theta <- theta * (1 - lr * wd)`` then
    ``theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)``.
    Weight decay never passes through the gradient or the moments.
    """

    def __init__(self, named_params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params: dict[str, Tensor] = dict(named_params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            if not np.isfinite(p.grad).all():
                raise NonFiniteError(f"non-finite gradient in parameter {name!r}")
        self.step_count += 1
        t = self.step_count
        args = (float(self.lr), float(self.beta1), float(self.beta2), float(self.eps),
                float(self.weight_decay), 1.0 - self.beta1**t, 1.0 - self.beta2**t)
        for name, p in self.params.items():
            _adamw_update(p.data, p.grad, self.m[name], self.v[name], *args)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"step": np.array(float(self.step_count))}
        for k in self.params:
            out[f"m/{k}"] = self.m[k].copy()
            out[f"v/{k}"] = self.v[k].copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.step_count = int(np.ravel(state["step"])[0])
        for k in self.params:
            self.m[k] = np.array(state[f"m/{k}"], dtype=np.float64)
            self.v[k] = np.array(state[f"v/{k}"], dtype=np.float64)


def adamw_step(opt: AdamW) -> None:
    opt.step()


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``."""
    params = list(params)
    total = float(np.sqrt(sum(float(np.dot(p.grad.ravel(), p.grad.ravel())) for p in params)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad *= scale
    return total
