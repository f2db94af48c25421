"""Relation scoring network: spatial context encoder, temporal context encoder
and relation scoring decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics.nn import ConfigError, Encoder, Linear, MLP, Module, block_diagonal_mask
from .numerics.tensor import (
    ShapeError,
    Tensor,
    concat,
    getitem,
    log_softmax,
    reshape,
    softmax,
    take_rows,
    tmean,
)

TEMPORAL_MODES = ("learnable", "mean", "none")


class CapacityError(ValueError):
    """Video longer than the positional table supports."""


@dataclass(frozen=True)
class ModelConfig:
    d_p: int = 32
    d_model: int = 128
    heads: int = 4
    spatial_blocks: int = 2
    temporal_blocks: int = 4
    baseline_blocks: int = 2
    t_max: int = 64
    token_init_std: float = 0.02

    def validate(self) -> None:
        if self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if min(self.d_p, self.d_model, self.t_max) < 1:
            raise ConfigError("dimensions must be positive")


def _token(rng: np.random.Generator, shape, std: float) -> Tensor:
    return Tensor(std * rng.standard_normal(shape), requires_grad=True)


def segment_layout(counts: list[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Interleave one context token per segment ahead of that segment's rows.

    Returns ``order`` (gather index into ``[tokens; rows]``), the token
    positions and the row positions within the interleaved sequence.
    """
    T = len(counts)
    order, tok_pos, row_pos = [], [], []
    offset = 0
    for t, k in enumerate(counts):
        tok_pos.append(len(order))
        order.append(t)
        row_pos.extend(range(len(order), len(order) + k))
        order.extend(range(T + offset, T + offset + k))
        offset += k
    return np.array(order, dtype=np.intp), np.array(tok_pos, dtype=np.intp), np.array(row_pos, dtype=np.intp)


class SpatialContextEncoder(Module):
    """Prepends the learnable frame token to each frame's relations and runs
    self-attention within the frame. No positional signal is used."""

    def __init__(self, in_dim: int, d_model: int, n_blocks: int, heads: int,
                 rng: np.random.Generator, token_std: float = 0.02):
        self.input_proj = Linear(in_dim, d_model, rng)
        self.token = _token(rng, (d_model,), token_std)
        self.encoder = Encoder(d_model, n_blocks, heads, rng)
        self._in_dim = in_dim
        self._d = d_model

    def encode_frames(self, x: Tensor | None, counts: list[int]) -> tuple[Tensor, Tensor | None]:
        """All frames at once: ``x`` stacks the (sum K_t, in_dim) relation rows.

        Frames are kept apart with a block-diagonal attention mask. Returns
        the (T, d) frame tokens and the (sum K_t, d) contextualised relations.
        """
        T = len(counts)
        total = int(sum(counts))
        tokens = take_rows(reshape(self.token, (1, self._d)), np.zeros(T, dtype=np.intp))
        if total:
            if x is None or x.shape != (total, self._in_dim):
                got = None if x is None else x.shape
                raise ShapeError(f"relation rows must be ({total}, {self._in_dim}), got {got}")
            seq = concat([tokens, self.input_proj(x)], axis=0)
        else:
            seq = tokens
        order, tok_pos, row_pos = segment_layout(counts)
        seq = take_rows(seq, order)
        out = self.encoder(seq, mask=block_diagonal_mask([k + 1 for k in counts]))
        c_hat = take_rows(out, tok_pos)
        x_hat = take_rows(out, row_pos) if total else None
        return c_hat, x_hat

    def __call__(self, x: Tensor | None) -> tuple[Tensor, Tensor | None]:
        """Single frame: returns (c_hat of shape (d,), x_hat of shape (K, d))."""
        k = 0 if x is None else x.shape[0]
        if x is not None and (x.ndim != 2 or x.shape[1] != self._in_dim):
            raise ShapeError(f"relation vectors must have length {self._in_dim}, got {x.shape}")
        c_hat, x_hat = self.encode_frames(x, [k])
        return reshape(c_hat, (self._d,)), x_hat


class TemporalContextEncoder(Module):
    """Prepends the learnable video token to the frame tokens; positions are
    added to the attention queries and keys only, in every block."""

    def __init__(self, d_model: int, n_blocks: int, heads: int, t_max: int,
                 rng: np.random.Generator, token_std: float = 0.02):
        self.token = _token(rng, (d_model,), token_std)
        self.pos = _token(rng, (t_max + 1, d_model), token_std)
        self.encoder = Encoder(d_model, n_blocks, heads, rng)
        self._t_max = t_max
        self._d = d_model

    def __call__(self, frame_tokens: Tensor, pos_in_value: bool = False) -> Tensor:
        """(T, d) frame tokens -> (d,) video token. ``pos_in_value`` exists only
        to contrast against the query/key-only placement."""
        T = frame_tokens.shape[0]
        if not 1 <= T <= self._t_max:
            raise CapacityError(
                f"video has {T} frames but the temporal encoder supports 1..{self._t_max}; "
                "raise t_max in the model config"
            )
        z = concat([reshape(self.token, (1, self._d)), frame_tokens], axis=0)
        pos = getitem(self.pos, slice(0, T + 1))
        out = self.encoder(z, pos=pos, pos_in_value=pos_in_value)
        return reshape(getitem(out, slice(0, 1)), (self._d,))


class RelationScoringDecoder(Module):
    """3-layer ReLU MLP on ``[x_hat, context]`` producing two logits."""

    def __init__(self, d_model: int, rng: np.random.Generator):
        self.mlp = MLP([2 * d_model, d_model, d_model, 2], rng)
        self._d = d_model

    def logits(self, x_hat: Tensor, context: Tensor) -> Tensor:
        if x_hat.shape[-1] != self._d or context.shape[-1] != self._d:
            raise ShapeError(f"decoder inputs must have width {self._d}: {x_hat.shape}, {context.shape}")
        return self.mlp(concat([x_hat, context], axis=-1))

    def __call__(self, x_hat: Tensor, context: Tensor) -> Tensor:
        """Relation scores ``[p0, p1]``; p0 = contextually meaningful."""
        return softmax(self.logits(x_hat, context), axis=-1)


def relation_score(x_hat: Tensor, c_tmp: Tensor, decoder: RelationScoringDecoder) -> np.ndarray:
    """Score one relation (d,) against the video token (d,)."""
    p = decoder(reshape(x_hat, (1, -1)), reshape(c_tmp, (1, -1)))
    return p.data[0]


@dataclass
class RSNetOutput:
    logits: Tensor  # (sum K, 2)
    context: Tensor  # (sum K, d): video token (or frame token) per relation row
    frame_tokens: Tensor  # (T, d)
    video_token: Tensor | None  # (d,), None in "none" mode

    @property
    def log_probs(self) -> Tensor:
        return log_softmax(self.logits, axis=-1)

    @property
    def p0(self) -> np.ndarray:
        return softmax(self.logits, axis=-1).data[:, 0]


class RSNet(Module):
    def __init__(self, in_dim: int, cfg: ModelConfig, rng: np.random.Generator, temporal_mode: str = "learnable"):
        if temporal_mode not in TEMPORAL_MODES:
            raise ConfigError(f"temporal_mode must be one of {TEMPORAL_MODES}, got {temporal_mode!r}")
        self.spatial = SpatialContextEncoder(in_dim, cfg.d_model, cfg.spatial_blocks, cfg.heads, rng, cfg.token_init_std)
        self.temporal = (
            TemporalContextEncoder(cfg.d_model, cfg.temporal_blocks, cfg.heads, cfg.t_max, rng, cfg.token_init_std)
            if temporal_mode == "learnable" else None
        )
        self.decoder = RelationScoringDecoder(cfg.d_model, rng)
        self._mode = temporal_mode
        self._d = cfg.d_model

    @property
    def temporal_mode(self) -> str:
        return self._mode

    def __call__(self, x: Tensor, counts: list[int]) -> RSNetOutput:
        c_hat, x_hat = self.spatial.encode_frames(x, counts)
        if x_hat is None:
            raise ShapeError("RSNet needs at least one relation in the video")
        frame_of_row = np.repeat(np.arange(len(counts)), counts)
        if self._mode == "none":
            video = None
            context = take_rows(c_hat, frame_of_row)
        else:
            if self._mode == "learnable":
                video = self.temporal(c_hat)
            else:
                video = tmean(c_hat, axis=0)
            context = take_rows(reshape(video, (1, self._d)), np.zeros(len(frame_of_row), dtype=np.intp))
        return RSNetOutput(self.decoder.logits(x_hat, context), context, c_hat, video)
