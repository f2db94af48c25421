"""Triplet matching and R@k / P@k / mR@k under the "with constraint" setting.

Aggregation: R@k and P@k are per-frame ratios averaged uniformly over
frames (frames without GT relations are left out of R@k, frames without
predictions out of P@k). mR@k tallies matches per predicate class over the
whole split, then averages uniformly over classes that have GT instances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .dsgg import MODES, SGCLS, SGDET, DSGGModel, TripletPrediction, apply_constraint, predict_video
from .numerics.nn import ConfigError
from .scenegraph.geometry import iou_matrix
from .scenegraph.types import PredicateVocabulary, SceneGraphGT, VideoSample


class UnsortedPredictionsError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    mode: str = SGDET
    ks: tuple[int, ...] = (10, 20, 50)
    iou_thresh: float = 0.5
    constraint: bool = True
    per_category: bool = True  # one predicate per pair and category
    person_centric: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if not self.ks or any(k <= 0 for k in self.ks) or list(self.ks) != sorted(set(self.ks)):
            raise ConfigError(f"k values must be positive and strictly ascending: {self.ks}")


@dataclass
class MatchResult:
    matches: list[tuple[int, int]]  # (0-based prediction rank, GT triplet id)
    unmatched_gt: list[int]
    gt_predicates: list[int]  # predicate of each GT triplet id
    num_predictions: int

    @property
    def num_gt(self) -> int:
        return len(self.gt_predicates)


def match_frame(preds: list[TripletPrediction], gt: SceneGraphGT, mode: str = SGDET,
                iou_thresh: float = 0.5, det_to_gt: np.ndarray | None = None) -> MatchResult:
    """Greedy in rank order; each GT triplet and prediction is used at most once.

    SGDET: classes and predicate equal, both boxes at IoU >= ``iou_thresh``.
    SGCLS: classes and predicate equal, detections are the GT boxes named by
    ``det_to_gt`` (identity when omitted).
    """
    keys = [tr.sort_key() for tr in preds]
    if any(a > b for a, b in zip(keys, keys[1:])):
        raise UnsortedPredictionsError("predictions must be sorted by score descending")
    gt_trip = gt.triplets()
    gt_pred = [p for _, _, p in gt_trip]
    claimed = [False] * len(gt_trip)
    matches = []
    if gt_trip and preds:
        if mode == SGDET:
            sub_iou = iou_matrix(np.array([tr.subject_box for tr in preds]), gt.boxes)
            obj_iou = iou_matrix(np.array([tr.object_box for tr in preds]), gt.boxes)
        for rank, tr in enumerate(preds):
            for g, (s, o, p) in enumerate(gt_trip):
                if claimed[g] or tr.predicate != p:
                    continue
                if tr.subject_class != gt.labels[s] or tr.object_class != gt.labels[o]:
                    continue
                if mode == SGDET:
                    ok = sub_iou[rank, s] >= iou_thresh and obj_iou[rank, o] >= iou_thresh
                else:
                    m = det_to_gt if det_to_gt is not None else None
                    si = tr.subject if m is None else int(m[tr.subject])
                    oi = tr.object if m is None else int(m[tr.object])
                    ok = si == s and oi == o
                if ok:
                    claimed[g] = True
                    matches.append((rank, g))
                    break
    unmatched = [g for g, c in enumerate(claimed) if not c]
    return MatchResult(matches, unmatched, gt_pred, len(preds))


def _exact_mean(ratios: list[Fraction]) -> float | None:
    # rational arithmetic, rounded once: independent of summation order
    return float(sum(ratios, Fraction(0)) / len(ratios)) if ratios else None


def recall_at_k(results: list[MatchResult], k: int) -> float | None:
    return _exact_mean([Fraction(sum(1 for r, _ in m.matches if r < k), m.num_gt)
                        for m in results if m.num_gt])


def precision_at_k(results: list[MatchResult], k: int) -> float | None:
    return _exact_mean([Fraction(sum(1 for r, _ in m.matches if r < k), min(k, m.num_predictions))
                        for m in results if m.num_predictions])


def per_predicate_recall(results: list[MatchResult], k: int, num_predicates: int) -> tuple[np.ndarray, np.ndarray]:
    hit = np.zeros(num_predicates, dtype=np.int64)
    total = np.zeros(num_predicates, dtype=np.int64)
    for m in results:
        for p in m.gt_predicates:
            total[p] += 1
        for r, g in m.matches:
            if r < k:
                hit[m.gt_predicates[g]] += 1
    return hit, total


def mean_recall_at_k(results: list[MatchResult], k: int, vocab: PredicateVocabulary) -> float | None:
    hit, total = per_predicate_recall(results, k, vocab.num_predicates)
    return _exact_mean([Fraction(int(h), int(n)) for h, n in zip(hit, total) if n])


@dataclass
class MetricsReport:
    mode: str
    ks: tuple[int, ...]
    variant: str
    recall: dict[int, float | None]
    precision: dict[int, float | None]
    mean_recall: dict[int, float | None]
    per_predicate: dict[int, dict[str, float]]
    n_frames: int
    n_videos: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "ks": list(self.ks),
            "variant": self.variant,
            "recall": {str(k): v for k, v in self.recall.items()},
            "precision": {str(k): v for k, v in self.precision.items()},
            "mean_recall": {str(k): v for k, v in self.mean_recall.items()},
            "per_predicate": {str(k): v for k, v in self.per_predicate.items()},
            "n_frames": self.n_frames,
            "n_videos": self.n_videos,
            **({"extra": self.extra} if self.extra else {}),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    def table(self) -> str:
        return format_table([self])


def _fmt(v) -> str:
    return "  n/a" if v is None else f"{100 * v:5.1f}"


def format_table(reports: list[MetricsReport]) -> str:
    """Fixed-width comparison table, one row per report, values in percent."""
    ks = reports[0].ks
    head = ["variant".ljust(16)] + [f"R@{k}".rjust(6) for k in ks] + [f"P@{k}".rjust(6) for k in ks] \
        + [f"mR@{k}".rjust(6) for k in ks]
    lines = [" ".join(head)]
    for r in reports:
        cells = [r.variant.ljust(16)] + [_fmt(r.recall[k]).rjust(6) for k in ks] \
            + [_fmt(r.precision[k]).rjust(6) for k in ks] + [_fmt(r.mean_recall[k]).rjust(6) for k in ks]
        lines.append(" ".join(cells))
    return "\n".join(lines) + "\n"


def build_report(results: list[MatchResult], cfg: EvalConfig, vocab: PredicateVocabulary,
                 variant: str, n_videos: int) -> MetricsReport:
    per_pred = {}
    for k in cfg.ks:
        hit, total = per_predicate_recall(results, k, vocab.num_predicates)
        per_pred[k] = {vocab.predicates[p]: float(hit[p] / total[p]) for p in range(vocab.num_predicates) if total[p]}
    return MetricsReport(
        mode=cfg.mode,
        ks=tuple(cfg.ks),
        variant=variant,
        recall={k: recall_at_k(results, k) for k in cfg.ks},
        precision={k: precision_at_k(results, k) for k in cfg.ks},
        mean_recall={k: mean_recall_at_k(results, k, vocab) for k in cfg.ks},
        per_predicate=per_pred,
        n_frames=len(results),
        n_videos=n_videos,
    )


def _constrain(preds, cfg: EvalConfig, vocab):
    if cfg.constraint:
        return apply_constraint(preds, vocab, per_category=cfg.per_category)
    return sorted(preds, key=TripletPrediction.sort_key)


def match_video(video: VideoSample, frame_preds: list[list[TripletPrediction]], cfg: EvalConfig) -> list[MatchResult]:
    out = []
    for frame, preds in zip(video.frames, frame_preds):
        ranked = _constrain(preds, cfg, video.vocab)
        det_to_gt = frame.matched_gt if cfg.mode == SGCLS else None
        out.append(match_frame(ranked, frame.gt, cfg.mode, cfg.iou_thresh, det_to_gt))
    return out


def evaluate(videos: list[VideoSample], model: DSGGModel, cfg: EvalConfig = EvalConfig(),
             use_rsnet: bool | None = None, use_fusion: bool | None = None,
             p0_override=None, variant: str | None = None) -> MetricsReport:
    if not videos:
        raise ValueError("nothing to evaluate")
    results = []
    for video in videos:
        preds = predict_video(video, model, cfg.mode, use_rsnet, use_fusion, cfg.person_centric, p0_override)
        results.extend(match_video(video, preds, cfg))
    return build_report(results, cfg, videos[0].vocab, variant or model.variant, len(videos))


def evaluate_predictions(videos: list[VideoSample], dump: dict[str, dict[int, list[TripletPrediction]]],
                         cfg: EvalConfig = EvalConfig(), variant: str = "external") -> MetricsReport:
    """Score a prediction dump (see :func:`rsnet.dsgg.load_predictions`) against GT."""
    results = []
    for video in videos:
        per_frame = dump.get(video.video_id, {})
        preds = [per_frame.get(f.index, []) for f in video.frames]
        results.extend(match_video(video, preds, cfg))
    return build_report(results, cfg, videos[0].vocab, variant, len(videos))
