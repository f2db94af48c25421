"""Object classification, multi-label margin and focal relation-scoring losses.

All losses are sums (over objects, pairs, frames), never means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics.tensor import (
    Tensor,
    as_tensor,
    clip_min,
    exp,
    log,
    mul,
    power,
    relu,
    reshape,
    tsum,
)

LOG_FLOOR = 1e-12


class LossContractError(ValueError):
    pass


@dataclass(frozen=True)
class FocalLossConfig:
    alpha0: float = 0.5  # positive (contextually meaningful) class
    alpha1: float = 0.5  # negative class
    gamma: float = 2.0

    def __post_init__(self):
        if self.alpha0 <= 0 or self.alpha1 <= 0:
            raise ValueError("focal alphas must be positive")
        if self.gamma < 0:
            raise ValueError("focal gamma must be non-negative")


def loss_od(d, g: np.ndarray) -> Tensor:
    """Cross entropy ``-sum g * log d`` over rows; log floored at 1e-12.

    ``d`` holds probability rows, ``g`` one-hot rows (or integer labels).
    """
    d = as_tensor(d)
    if not np.allclose(d.data.sum(axis=-1), 1.0, atol=1e-9) or (d.data < 0).any():
        raise LossContractError("class distributions must be non-negative and sum to 1")
    g = np.asarray(g)
    if g.ndim == d.ndim - 1:
        g = np.eye(d.shape[-1])[g]
    return -tsum(mul(log(clip_min(d, LOG_FLOOR)), Tensor(g)))


def loss_rel(s, positives, negatives=None) -> Tensor:
    """``sum_{m in S+} sum_{n in S-} max(0, 1 - s_m + s_n)`` for one score vector.

    ``negatives`` defaults to every index outside ``positives``.
    """
    s = as_tensor(s)
    pos = sorted(set(int(i) for i in positives))
    neg = sorted(set(range(s.shape[-1])) - set(pos)) if negatives is None else sorted(set(int(i) for i in negatives))
    if set(pos) & set(neg):
        raise LossContractError("positive and negative predicate sets overlap")
    mask = np.zeros(s.shape[-1], dtype=bool)
    mask[pos] = True
    weight = np.zeros((s.shape[-1], s.shape[-1]))
    weight[np.ix_(pos, neg)] = 1.0
    return _hinge_sum(reshape(s, (1, -1)), weight[None])


def loss_rel_batch(s: Tensor, positive_mask: np.ndarray) -> Tensor:
    """Batched margin loss: rows of ``s`` are pairs, ``positive_mask`` marks
    annotated predicates; every other predicate of the row is a negative."""
    m = np.asarray(positive_mask, dtype=bool)
    weight = (m[:, :, None] & ~m[:, None, :]).astype(np.float64)
    return _hinge_sum(s, weight)


def _hinge_sum(s: Tensor, weight: np.ndarray) -> Tensor:
    rows, n = s.shape
    sm = reshape(s, (rows, n, 1))
    sn = reshape(s, (rows, 1, n))
    hinge = relu(1.0 - sm + sn)  # [r, m, n] = max(0, 1 - s_m + s_n)
    return tsum(mul(hinge, Tensor(weight)))


def focal_terms(log_p_true: Tensor, alpha: np.ndarray, gamma: float) -> Tensor:
    """Per-sample ``-alpha * (1 - p)^gamma * log p`` from log-probabilities."""
    p = exp(log_p_true)
    w = power(clip_min(1.0 - p, 0.0), gamma) if gamma != 0 else None
    core = mul(log_p_true, Tensor(-np.asarray(alpha, dtype=np.float64)))
    return core if w is None else mul(core, w)


def _targets(labels) -> np.ndarray:
    out = []
    for lab in labels:
        v = getattr(lab, "value", lab)
        if v in ("positive", 0):
            out.append(0)
        elif v in ("negative", 1):
            out.append(1)
        elif v == "excluded":
            out.append(-1)
        else:
            raise LossContractError(f"unknown positivity label {lab!r}")
    return np.array(out, dtype=np.intp)


def loss_rsn(p, labels, cfg: FocalLossConfig = FocalLossConfig()) -> Tensor:
    """Focal loss on relation scores ``p`` (rows ``[p0, p1]``), gated by the
    true class: positives target index 0, negatives index 1, excluded rows
    are skipped."""
    p = as_tensor(p)
    tgt = _targets(labels)
    keep = np.flatnonzero(tgt >= 0)
    if len(keep) == 0:
        return Tensor(0.0)
    onehot = np.eye(2)[tgt[keep]]
    rows = p[keep] if len(keep) != p.shape[0] else p
    p_true = tsum(mul(rows, Tensor(onehot)), axis=1)
    alpha = np.where(tgt[keep] == 0, cfg.alpha0, cfg.alpha1)
    return tsum(focal_terms(log(clip_min(p_true, 1e-300)), alpha, cfg.gamma))


def loss_rsn_from_log_probs(log_p: Tensor, targets: np.ndarray, cfg: FocalLossConfig) -> Tensor:
    """Same loss from log-probabilities (numerically safer in training);
    ``targets`` are class indices 0 (positive) / 1 (negative)."""
    targets = np.asarray(targets, dtype=np.intp)
    log_p_true = tsum(mul(log_p, Tensor(np.eye(2)[targets])), axis=1)
    alpha = np.where(targets == 0, cfg.alpha0, cfg.alpha1)
    return tsum(focal_terms(log_p_true, alpha, cfg.gamma))


def loss_total(l_od, l_rel, l_rsn, use_od: bool = True, use_rel: bool = True, use_rsn: bool = True) -> Tensor:
    """Unit-weight sum of the enabled components."""
    total = Tensor(0.0)
    for on, part in ((use_od, l_od), (use_rel, l_rel), (use_rsn, l_rsn)):
        if on and part is not None:
            total = total + part
    return total
