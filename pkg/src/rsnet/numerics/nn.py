"""Parameterised layers built from the primitives in :mod:`rsnet.numerics.tensor`."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    add,
    concat,
    layer_norm,
    matmul,
    relu,
    reshape,
    softmax,
    transpose,
)


class ConfigError(ValueError):
    """Invalid layer or model configuration."""


class Module:
    """Attribute-walking parameter container.

    Parameters are ``Tensor`` attributes with ``requires_grad``; submodules are
    ``Module`` attributes or lists of them. Names are dotted paths in
    attribute-definition order, which keeps checkpoints stable.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            if missing or extra:
                raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for k, arr in state.items():
            if k not in own:
                continue
            p = own[k]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"{k}: checkpoint shape {arr.shape} != parameter shape {p.shape}")
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _param(arr: np.ndarray) -> Tensor:
    return Tensor(arr, requires_grad=True)


class Linear(Module):
    """``y = x W + b`` with ``W`` of shape (fan_in, fan_out)."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, bias: bool = True):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        self.weight = _param(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        self.bias = _param(np.zeros(fan_out)) if bias else None
        self._fan_in = fan_in

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self._fan_in:
            raise ShapeError(f"Linear expects last axis {self._fan_in}, got {x.shape}")
        y = matmul(x, self.weight)
        return y if self.bias is None else add(y, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = _param(np.ones(dim))
        self.bias = _param(np.zeros(dim))
        self._eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self._eps)


class MLP(Module):
    """Stack of Linear layers with ReLU between them (none after the last)."""

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = relu(x)
        return x


class MultiHeadAttention(Module):
    def __init__(self, d_model: int, heads: int, rng: np.random.Generator):
        if heads < 1 or d_model % heads:
            raise ConfigError(f"d_model={d_model} is not divisible by heads={heads}")
        self.q_proj = Linear(d_model, d_model, rng)
        self.k_proj = Linear(d_model, d_model, rng)
        self.v_proj = Linear(d_model, d_model, rng)
        self.out_proj = Linear(d_model, d_model, rng)
        self._heads = heads
        self._d = d_model

    def _split(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        return transpose(reshape(x, (n, self._heads, self._d // self._heads)), (1, 0, 2))

    def __call__(self, q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None) -> Tensor:
        return multihead_attention(q, k, v, self, self._heads, mask)

    def attention_weights(self, q: Tensor, k: Tensor, mask: np.ndarray | None = None) -> np.ndarray:
        """Per-head attention matrix (heads, L_q, L), for inspection only."""
        qh = self._split(self.q_proj(q)).data
        kh = self._split(self.k_proj(k)).data
        s = qh @ np.swapaxes(kh, -1, -2) / np.sqrt(self._d // self._heads)
        if mask is not None:
            s = np.where(mask, s, -np.inf)
        s = np.exp(s - s.max(axis=-1, keepdims=True))
        return s / s.sum(axis=-1, keepdims=True)


def multihead_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    params: MultiHeadAttention,
    heads: int,
    mask: np.ndarray | None = None,
) -> Tensor:
    """Scaled dot-product attention over ``heads`` subspaces.

    ``q`` is (L_q, d), ``k`` and ``v`` are (L, d); ``mask`` is an optional
    (L_q, L) boolean array of allowed query/key pairs.
    """
    d = q.shape[-1]
    if heads < 1 or d % heads:
        raise ConfigError(f"d_model={d} is not divisible by heads={heads}")
    if k.shape != v.shape or k.shape[-1] != d:
        raise ShapeError(f"attention shapes q={q.shape} k={k.shape} v={v.shape}")
    if k.shape[0] < 1:
        raise ShapeError("attention needs at least one key")
    dh = d // heads
    lq = q.shape[0]

    def split(x: Tensor) -> Tensor:
        return transpose(reshape(x, (x.shape[0], heads, dh)), (1, 0, 2))

    qh = split(params.q_proj(q))
    kh = split(params.k_proj(k))
    vh = split(params.v_proj(v))
    scores = matmul(qh, transpose(kh, (0, 2, 1))) * (1.0 / np.sqrt(dh))
    attn = softmax(scores, axis=-1, mask=None if mask is None else mask[None])
    ctx = matmul(attn, vh)
    merged = reshape(transpose(ctx, (1, 0, 2)), (lq, d))
    return params.out_proj(merged)


class EncoderBlock(Module):
    """Pre-norm transformer block: LN, self-attention, residual, LN, FFN, residual.

    ``pos`` (if given) is added to the normalised stream feeding queries and
    keys only; values see the normalised stream without it.
    """

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator, ff_mult: int = 2):
        self.norm1 = LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, heads, rng)
        self.norm2 = LayerNorm(d_model)
        self.ff = MLP([d_model, ff_mult * d_model, d_model], rng)

    def __call__(
        self,
        z: Tensor,
        mask: np.ndarray | None = None,
        pos: Tensor | None = None,
        pos_in_value: bool = False,
    ) -> Tensor:
        h = self.norm1(z)
        qk = h if pos is None else add(h, pos)
        v = qk if pos_in_value else h
        z = add(z, self.attn(qk, qk, v, mask))
        return add(z, self.ff(self.norm2(z)))


class Encoder(Module):
    """``n_blocks`` encoder blocks followed by a final LayerNorm."""

    def __init__(self, d_model: int, n_blocks: int, heads: int, rng: np.random.Generator):
        self.blocks = [EncoderBlock(d_model, heads, rng) for _ in range(n_blocks)]
        self.norm = LayerNorm(d_model)

    def __call__(self, z, mask=None, pos=None, pos_in_value=False) -> Tensor:
        for block in self.blocks:
            z = block(z, mask=mask, pos=pos, pos_in_value=pos_in_value)
        return self.norm(z)


def block_diagonal_mask(lengths: list[int]) -> np.ndarray:
    """Boolean (N, N) mask letting each token attend only within its segment."""
    seg = np.repeat(np.arange(len(lengths)), lengths)
    return seg[:, None] == seg[None, :]


def cat_rows(parts: list[Tensor]) -> Tensor:
    return parts[0] if len(parts) == 1 else concat(parts, axis=0)
