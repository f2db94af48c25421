"""Baseline predicate classifier, context fusion and triplet ranking."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .network import RSNet, RSNetOutput, TEMPORAL_MODES, ModelConfig
from .numerics.nn import ConfigError, Encoder, Linear, Module, block_diagonal_mask
from .numerics.tensor import ShapeError, Tensor, concat, sigmoid, softmax
from .scenegraph.pairs import enumerate_candidate_pairs
from .scenegraph.relation import PairInputs, RelationProjector, gather_pair_inputs
from .scenegraph.types import Frame, PredicateVocabulary, VideoSample

SGDET = "sgdet"
SGCLS = "sgcls"
MODES = (SGDET, SGCLS)

VARIANTS: dict[str, dict] = {
    "baseline": dict(use_rsnet=False, use_fusion=False, temporal_mode="learnable"),
    "+rsnet": dict(use_rsnet=True, use_fusion=False, temporal_mode="learnable"),
    "+rsnet+fusion": dict(use_rsnet=True, use_fusion=True, temporal_mode="learnable"),
    "no-temporal": dict(use_rsnet=True, use_fusion=True, temporal_mode="none"),
    "mean-token": dict(use_rsnet=True, use_fusion=True, temporal_mode="mean"),
}


class UnknownVariantError(ValueError):
    def __init__(self, name: str):
        super().__init__(f"unknown variant {name!r}; choose from: {', '.join(VARIANTS)}")


def variant_flags(name: str) -> dict:
    try:
        return dict(VARIANTS[name])
    except KeyError:
        raise UnknownVariantError(name) from None


class BaselineModel(Module):
    """Stand-in DSGG predicate branch: self-attention over a frame's relations,
    then one linear head per predicate category."""

    def __init__(self, in_dim: int, d_model: int, n_blocks: int, heads: int,
                 category_sizes: tuple[int, int, int], rng: np.random.Generator):
        self.input_proj = Linear(in_dim, d_model, rng)
        self.encoder = Encoder(d_model, n_blocks, heads, rng)
        self.heads = [Linear(d_model, n, rng) for n in category_sizes]

    def features(self, x: Tensor, counts: list[int]) -> Tensor:
        """Intermediate relation features r, one row per relation."""
        if x.shape[0] != sum(counts):
            raise ShapeError(f"{x.shape[0]} relation rows but counts sum to {sum(counts)}")
        return self.encoder(self.input_proj(x), mask=block_diagonal_mask(list(counts)))

    def __call__(self, x: Tensor, counts: list[int]) -> tuple[Tensor, list[Tensor]]:
        r = self.features(x, counts)
        return r, [h(r) for h in self.heads]


class FusionHeads(Module):
    """Three linear heads over ``[r, context]``."""

    def __init__(self, d_model: int, category_sizes: tuple[int, int, int], rng: np.random.Generator):
        self.heads = [Linear(2 * d_model, n, rng) for n in category_sizes]
        self._d = d_model

    def __call__(self, r: Tensor, context: Tensor) -> list[Tensor]:
        if r.shape[-1] != self._d or context.shape[-1] != self._d:
            raise ShapeError(f"fusion inputs must have width {self._d}: {r.shape}, {context.shape}")
        z = concat([r, context], axis=-1)
        return [h(z) for h in self.heads]


def context_fusion(r: Tensor, context: Tensor, heads: FusionHeads) -> list[Tensor]:
    return heads(r, context)


@dataclass
class ModelOutput:
    predicate_logits: list[Tensor]  # per category, (sum K, n_c)
    baseline_logits: list[Tensor]
    relation_features: Tensor
    rsnet: RSNetOutput | None


class DSGGModel(Module):
    """Relation projector + object head + baseline (+ RS-Net, + fusion heads).

    Submodules are created in a fixed order from one seeded generator, so the
    shared parts start identical across variants with the same seed.
    """

    def __init__(self, d_v: int, d_u: int, vocab: PredicateVocabulary, cfg: ModelConfig,
                 variant: str = "+rsnet+fusion", seed: int = 0):
        cfg.validate()
        flags = variant_flags(variant)
        if flags["temporal_mode"] not in TEMPORAL_MODES:
            raise ConfigError(f"bad temporal mode {flags['temporal_mode']!r}")
        rng = np.random.default_rng(seed)
        sizes = vocab.category_sizes
        self.projector = RelationProjector(d_v, d_u, vocab.num_classes, cfg.d_p, rng)
        self.object_head = Linear(d_v, vocab.num_classes, rng)
        self.baseline = BaselineModel(self.projector.out_dim, cfg.d_model, cfg.baseline_blocks, cfg.heads, sizes, rng)
        self.rsnet = RSNet(self.projector.out_dim, cfg, rng, flags["temporal_mode"]) if flags["use_rsnet"] else None
        self.fusion = FusionHeads(cfg.d_model, sizes, rng) if flags["use_fusion"] else None
        self._variant = variant
        self._flags = flags
        self._cfg = cfg
        self._vocab = vocab
        self._dims = (d_v, d_u)

    @property
    def variant(self) -> str:
        return self._variant

    @property
    def flags(self) -> dict:
        return dict(self._flags)

    @property
    def config(self) -> ModelConfig:
        return self._cfg

    @property
    def vocab(self) -> PredicateVocabulary:
        return self._vocab

    @property
    def dims(self) -> tuple[int, int]:
        return self._dims

    def object_logits(self, features: np.ndarray) -> Tensor:
        return self.object_head(Tensor(features))

    def object_distribution(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.object_logits(features), axis=-1).data

    def forward(self, inputs: PairInputs, counts: list[int], use_fusion: bool | None = None) -> ModelOutput:
        use_fusion = self._flags["use_fusion"] if use_fusion is None else use_fusion
        if use_fusion and (self.fusion is None or self.rsnet is None):
            raise ConfigError(f"variant {self._variant!r} has no fusion heads")
        x = self.projector(inputs)
        r, base_logits = self.baseline(x, counts)
        rs = self.rsnet(x, counts) if self.rsnet is not None else None
        logits = context_fusion(r, rs.context, self.fusion) if use_fusion else base_logits
        return ModelOutput(logits, base_logits, r, rs)


def baseline_forward(model: DSGGModel, inputs: PairInputs, counts: list[int]) -> tuple[Tensor, list[Tensor]]:
    return model.baseline(model.projector(inputs), counts)


# --------------------------------------------------------------------------
# triplets


class ScoreRangeError(ValueError):
    pass


def triplet_score(s_sub: float, s_obj: float, s_rel: float, p0: float) -> float:
    for name, v in (("s_sub", s_sub), ("s_obj", s_obj), ("s_rel", s_rel), ("p0", p0)):
        if not 0.0 <= v <= 1.0:
            raise ScoreRangeError(f"{name}={v} outside [0, 1]")
    return s_sub * s_obj * s_rel * p0


@dataclass(frozen=True)
class TripletPrediction:
    frame: int
    subject: int
    subject_class: int
    s_sub: float
    object: int
    object_class: int
    s_obj: float
    predicate: int
    s_rel: float
    p0: float
    score: float
    subject_box: tuple[float, float, float, float]
    object_box: tuple[float, float, float, float]

    def sort_key(self):
        return (-self.score, self.subject, self.object, self.predicate)


@dataclass
class FrameScores:
    """Everything needed to emit triplets for one frame."""

    frame: int
    pairs: list[tuple[int, int]]
    labels: np.ndarray  # (N,) predicted classes
    confidence: np.ndarray  # (N,) class confidence
    boxes: np.ndarray  # (N, 4)
    predicate_probs: np.ndarray  # (K, P)
    p0: np.ndarray  # (K,)


def _frame_view(frame: Frame, model: DSGGModel, mode: str):
    if mode == SGDET:
        return frame.class_dists, frame.boxes
    if mode == SGCLS:
        gt_idx = frame.matched_gt
        if (gt_idx < 0).any():
            raise ValueError("SGCLS needs every detection tied to a GT box")
        return model.object_distribution(frame.features), frame.gt.boxes[gt_idx]
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def score_video(video: VideoSample, model: DSGGModel, mode: str = SGDET,
                person_centric: bool = True, use_fusion: bool | None = None) -> list[FrameScores]:
    """Run the model once over a video (the video token is shared by all frames)."""
    views, all_pairs, parts = [], [], []
    for frame in video.frames:
        dists, boxes = _frame_view(frame, model, mode)
        labels = dists.argmax(axis=1)
        probe = Frame(frame.index, frame.features, boxes, dists, frame.matched_gt, frame.gt,
                      frame.interaction_pairs, frame.interaction_codes, frame.union_seed,
                      frame.union_noise, frame._union_cache)
        pairs = enumerate_candidate_pairs(probe, person_centric)
        views.append((labels, dists.max(axis=1), boxes))
        all_pairs.append(pairs)
        parts.append(gather_pair_inputs(probe, pairs))
    counts = [len(p) for p in all_pairs]
    P = model.vocab.num_predicates
    if sum(counts) == 0:
        probs = np.zeros((0, P))
        p0 = np.zeros(0)
    else:
        out = model.forward(PairInputs.stack(parts), counts, use_fusion=use_fusion)
        probs = np.concatenate([sigmoid(l).data for l in out.predicate_logits], axis=1)
        p0 = out.rsnet.p0 if out.rsnet is not None else np.ones(len(probs))
    result = []
    start = 0
    for frame, (labels, conf, boxes), pairs, k in zip(video.frames, views, all_pairs, counts):
        result.append(FrameScores(frame.index, pairs, labels, conf, boxes,
                                  probs[start:start + k], p0[start:start + k]))
        start += k
    return result


def predict_frame(scores: FrameScores, use_rsnet: bool = True, p0_override: np.ndarray | float | None = None) -> list[TripletPrediction]:
    """One triplet per (pair, predicate), combined score s_sub*s_obj*s_rel*p0.

    ``use_rsnet=False`` sets p0 to exactly 1. ``p0_override`` replaces the
    network's relation scores (scalar or one value per pair).
    """
    if not scores.pairs:
        return []
    if not use_rsnet:
        p0 = np.ones(len(scores.pairs))
    elif p0_override is not None:
        p0 = np.broadcast_to(np.asarray(p0_override, dtype=np.float64), (len(scores.pairs),))
    else:
        p0 = scores.p0
    out = []
    for k, (i, j) in enumerate(scores.pairs):
        s_sub = float(scores.confidence[i])
        s_obj = float(scores.confidence[j])
        pk = float(p0[k])
        sb = tuple(float(v) for v in scores.boxes[i])
        ob = tuple(float(v) for v in scores.boxes[j])
        for p, s_rel in enumerate(scores.predicate_probs[k]):
            s_rel = float(s_rel)
            out.append(TripletPrediction(
                scores.frame, i, int(scores.labels[i]), s_sub, j, int(scores.labels[j]), s_obj,
                p, s_rel, pk, triplet_score(s_sub, s_obj, s_rel, pk), sb, ob,
            ))
    return out


def apply_constraint(triplets: Iterable[TripletPrediction], vocab: PredicateVocabulary | None = None,
                     per_category: bool = False) -> list[TripletPrediction]:
    """Keep the best triplet per ordered pair (per pair and category when
    ``per_category``); ties go to the lower predicate id. Output sorted by
    score descending, then (subject, object, predicate)."""
    if per_category and vocab is None:
        raise ValueError("per-category constraint needs the vocabulary")
    best: dict[tuple, TripletPrediction] = {}
    for tr in triplets:
        key = (tr.subject, tr.object)
        if per_category:
            key += (vocab.category_of(tr.predicate),)
        cur = best.get(key)
        if cur is None or tr.score > cur.score or (tr.score == cur.score and tr.predicate < cur.predicate):
            best[key] = tr
    return sorted(best.values(), key=TripletPrediction.sort_key)


def predict_video(video: VideoSample, model: DSGGModel, mode: str = SGDET, use_rsnet: bool | None = None,
                  use_fusion: bool | None = None, person_centric: bool = True,
                  p0_override=None) -> list[list[TripletPrediction]]:
    """All-predicate triplets per frame (unconstrained)."""
    if use_rsnet is None:
        use_rsnet = model.rsnet is not None
    if use_rsnet and model.rsnet is None and p0_override is None:
        raise ConfigError(f"variant {model.variant!r} has no relation scoring network")
    scored = score_video(video, model, mode, person_centric, use_fusion)
    return [predict_frame(s, use_rsnet, p0_override) for s in scored]


# --------------------------------------------------------------------------
# prediction dumps: JSON lines, one triplet per line


def dump_predictions(path, rows: Iterable[tuple[str, TripletPrediction]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for video_id, tr in rows:
            rec = {"video": video_id, **asdict(tr)}
            rec["subject_box"] = list(tr.subject_box)
            rec["object_box"] = list(tr.object_box)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_predictions(path) -> dict[str, dict[int, list[TripletPrediction]]]:
    out: dict[str, dict[int, list[TripletPrediction]]] = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            vid = rec.pop("video")
            rec["subject_box"] = tuple(rec["subject_box"])
            rec["object_box"] = tuple(rec["object_box"])
            tr = TripletPrediction(**rec)
            out.setdefault(vid, {}).setdefault(tr.frame, []).append(tr)
    return out
