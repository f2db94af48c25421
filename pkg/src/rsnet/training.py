"""Joint training of object head, predicate classifier and relation scorer.

Batch = one video. Per video: enumerate and label candidate pairs, apply
negative sampling, run every component, sum the enabled losses, backprop,
clip the global gradient norm, take an AdamW step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dsgg import DSGGModel, variant_flags
from .losses import FocalLossConfig, loss_od, loss_rel_batch, loss_rsn_from_log_probs, loss_total
from .numerics.nn import ConfigError
from .numerics.tensor import NonFiniteError, Tape, Tensor, backward, softmax, take_rows
from .optim import AdamW, clip_grad_norm
from .scenegraph.pairs import enumerate_candidate_pairs, label_candidates, negative_sampling
from .scenegraph.relation import PairInputs, gather_pair_inputs
from .scenegraph.types import Positivity, VideoSample

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    lr: float = 5e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 5.0
    seed: int = 0
    variant: str = "+rsnet+fusion"
    neg_ratio: float = 1.2
    iou_thresh: float = 0.5
    min_negatives: int = 4
    focal_alpha0: float = 0.5
    focal_alpha1: float = 0.5
    focal_gamma: float = 2.0
    use_loss_od: bool = True
    use_loss_rel: bool = True
    use_loss_rsn: bool = True
    person_centric: bool = True

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        variant_flags(self.variant)

    @property
    def focal(self) -> FocalLossConfig:
        return FocalLossConfig(self.focal_alpha0, self.focal_alpha1, self.focal_gamma)


class TrainingDiverged(RuntimeError):
    def __init__(self, msg: str, last_good_state: dict[str, np.ndarray]):
        super().__init__(msg)
        self.last_good_state = last_good_state


@dataclass
class PreparedVideo:
    inputs: PairInputs | None
    counts: list[int]
    targets: np.ndarray  # (sum K,) 0 positive / 1 negative
    positive_rows: np.ndarray
    positive_masks: list[np.ndarray]  # per category, (n_pos, n_c) bool
    object_features: np.ndarray
    object_labels: np.ndarray


def prepare_video(video: VideoSample, rng: np.random.Generator, cfg: TrainConfig) -> PreparedVideo:
    vocab = video.vocab
    parts, counts, targets, pos_rows = [], [], [], []
    masks: list[list[np.ndarray]] = [[], [], []]
    obj_feats, obj_labels = [], []
    row = 0
    for frame in video.frames:
        has_gt = frame.matched_gt >= 0
        obj_feats.append(frame.features[has_gt])
        obj_labels.append(frame.gt.labels[frame.matched_gt[has_gt]])

        pairs = enumerate_candidate_pairs(frame, cfg.person_centric)
        labels = label_candidates(frame, pairs, cfg.iou_thresh)
        sampled = negative_sampling(frame, pairs, labels, rng, cfg.neg_ratio, cfg.iou_thresh, cfg.min_negatives)
        kept = [pairs[k] for k in sampled.keep]
        parts.append(gather_pair_inputs(frame, kept))
        counts.append(len(kept))
        for k in sampled.keep:
            if sampled.labels[k] is Positivity.POSITIVE:
                targets.append(0)
                pos_rows.append(row)
                rel = frame.gt.relations[labels.gt_relation[k]]
                for c, (off, n) in enumerate(zip(vocab.category_offsets, vocab.category_sizes)):
                    m = np.zeros(n, dtype=bool)
                    m[[p - off for p in rel.predicates[c]]] = True
                    masks[c].append(m)
            else:
                targets.append(1)
            row += 1
    return PreparedVideo(
        inputs=PairInputs.stack(parts) if row else None,
        counts=counts,
        targets=np.array(targets, dtype=np.intp),
        positive_rows=np.array(pos_rows, dtype=np.intp),
        positive_masks=[np.array(m, dtype=bool).reshape(-1, n) for m, n in zip(masks, vocab.category_sizes)],
        object_features=np.concatenate(obj_feats),
        object_labels=np.concatenate(obj_labels).astype(np.intp),
    )


@dataclass
class LossParts:
    od: Tensor | None
    rel: Tensor | None
    rsn: Tensor | None
    total: Tensor


def compute_losses(model: DSGGModel, prep: PreparedVideo, cfg: TrainConfig) -> LossParts:
    """Build the unit-weight sum of the enabled losses for one prepared video."""
    l_od = loss_od(softmax(model.object_logits(prep.object_features), axis=-1), prep.object_labels)
    l_rel = l_rsn = None
    if prep.inputs is not None:
        out = model.forward(prep.inputs, prep.counts)
        if len(prep.positive_rows):
            for logits, mask in zip(out.predicate_logits, prep.positive_masks):
                part = loss_rel_batch(take_rows(logits, prep.positive_rows), mask)
                l_rel = part if l_rel is None else l_rel + part
        if out.rsnet is not None:
            l_rsn = loss_rsn_from_log_probs(out.rsnet.log_probs, prep.targets, cfg.focal)
    use_rsn = cfg.use_loss_rsn and model.rsnet is not None
    total = loss_total(l_od, l_rel, l_rsn, cfg.use_loss_od, cfg.use_loss_rel, use_rsn)
    return LossParts(l_od, l_rel, l_rsn, total)


@dataclass
class TrainResult:
    trace: list[dict] = field(default_factory=list)  # per video step
    epoch_losses: list[float] = field(default_factory=list)  # mean total per epoch


def _val(t: Tensor | None) -> float:
    return 0.0 if t is None else t.item()


def train(videos: list[VideoSample], model: DSGGModel, cfg: TrainConfig,
          optimizer: AdamW | None = None, start_epoch: int = 0) -> TrainResult:
    """Deterministic given ``(videos, initial model, cfg)``.

    Video order per epoch and negative subsampling draw from generators seeded
    by ``(cfg.seed, epoch)`` and ``(cfg.seed, epoch, video index)``. Runs
    epochs ``start_epoch .. cfg.epochs - 1``, so a run resumed with its
    optimizer state continues exactly where it stopped.
    """
    cfg.validate()
    if not videos and cfg.epochs > 0:
        raise ValueError("training needs at least one video")
    if model.variant != cfg.variant:
        raise ConfigError(f"model variant {model.variant!r} != train config variant {cfg.variant!r}")
    named = list(model.named_parameters())
    params = [p for _, p in named]
    opt = optimizer or AdamW(named, cfg.lr, (cfg.beta1, cfg.beta2), cfg.adam_eps, cfg.weight_decay)
    result = TrainResult()
    for epoch in range(start_epoch, cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(videos))
        totals = []
        for vi in order:
            video = videos[vi]
            prep = prepare_video(video, np.random.default_rng([cfg.seed, epoch, int(vi)]), cfg)
            opt.zero_grad()
            try:
                with Tape() as tape:
                    parts = compute_losses(model, prep, cfg)
                backward(parts.total, tape)
                clip_grad_norm(params, cfg.grad_clip)
                opt.step()
            except NonFiniteError as exc:
                # raised before any parameter update of this step
                last_good = model.state_dict()
                raise TrainingDiverged(f"epoch {epoch} video {video.video_id}: {exc}", last_good) from exc
            row = {
                "epoch": epoch,
                "video": video.video_id,
                "L_od": _val(parts.od),
                "L_rel": _val(parts.rel),
                "L_RSN": _val(parts.rsn),
                "total": parts.total.item(),
            }
            result.trace.append(row)
            totals.append(row["total"])
        result.epoch_losses.append(float(np.mean(totals)))
        log.info("epoch %d mean loss %.4f", epoch, result.epoch_losses[-1])
    return result
