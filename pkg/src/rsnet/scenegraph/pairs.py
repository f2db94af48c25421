"""Candidate pair enumeration, positive/negative labelling and negative sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import iou_matrix
from .types import Frame, Positivity

PERSON = 0


def enumerate_candidate_pairs(frame: Frame, person_centric: bool = False) -> list[tuple[int, int]]:
    """Ordered (subject, object) pairs, subject ascending then object ascending.

    In person-centric mode subjects are detections whose top-1 class is the
    person class; if there are none the most person-like detection is used.
    """
    n = frame.num_detections
    if n < 2:
        return []
    if person_centric:
        subjects = np.flatnonzero(frame.labels == PERSON)
        if len(subjects) == 0:
            subjects = [int(np.argmax(frame.class_dists[:, PERSON]))]
    else:
        subjects = range(n)
    return [(int(i), j) for i in subjects for j in range(n) if j != i]


def detection_gt_matches(frame: Frame, iou_thresh: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """(N, M) bool match matrix (class equal and IoU >= thresh) and the IoU matrix."""
    ious = iou_matrix(frame.boxes, frame.gt.boxes)
    same = frame.labels[:, None] == frame.gt.labels[None, :]
    return same & (ious >= iou_thresh), ious


@dataclass
class PairLabels:
    labels: list[Positivity]
    gt_relation: list[int | None]

    @property
    def positives(self) -> list[int]:
        return [k for k, lab in enumerate(self.labels) if lab is Positivity.POSITIVE]

    @property
    def negatives(self) -> list[int]:
        return [k for k, lab in enumerate(self.labels) if lab is Positivity.NEGATIVE]


def label_candidates(frame: Frame, pairs, iou_thresh: float = 0.5) -> PairLabels:
    """Positive iff both ends match GT objects of an annotated pair.

    GT relations are visited in order; each claims the unclaimed candidate
    with the largest subject-IoU x object-IoU product (lowest index on ties).
    """
    match, ious = detection_gt_matches(frame, iou_thresh)
    labels = [Positivity.NEGATIVE] * len(pairs)
    gt_ids: list[int | None] = [None] * len(pairs)
    claimed = set()
    for r, rel in enumerate(frame.gt.relations):
        best, best_score = None, -1.0
        for k, (i, j) in enumerate(pairs):
            if k in claimed or not (match[i, rel.subject] and match[j, rel.object]):
                continue
            score = ious[i, rel.subject] * ious[j, rel.object]
            if score > best_score:
                best, best_score = k, score
        if best is not None:
            claimed.add(best)
            labels[best] = Positivity.POSITIVE
            gt_ids[best] = r
    return PairLabels(labels, gt_ids)


def is_excluded_negative(frame: Frame, pair, positive_pairs, iou_thresh: float = 0.5) -> bool:
    """Negative duplicating some positive's class pair with both boxes at IoU > thresh."""
    i, j = pair
    lab = frame.labels
    for a, b in positive_pairs:
        if lab[i] != lab[a] or lab[j] != lab[b]:
            continue
        ious = iou_matrix(frame.boxes[[i, j]], frame.boxes[[a, b]])
        if ious[0, 0] > iou_thresh and ious[1, 1] > iou_thresh:
            return True
    return False


@dataclass
class SampledPairs:
    keep: list[int]  # indices into the candidate list, ascending
    labels: list[Positivity]  # full-length labels with EXCLUDED applied


def negative_cap(n_positive: int, ratio: float = 1.2, min_negatives: int = 4) -> int:
    if n_positive == 0:
        return min_negatives
    return math.floor(Fraction(str(ratio)) * n_positive)


def negative_sampling(
    frame: Frame,
    pairs,
    labels: PairLabels,
    rng: np.random.Generator,
    ratio: float = 1.2,
    iou_thresh: float = 0.5,
    min_negatives: int = 4,
) -> SampledPairs:
    """Drop IoU-duplicate negatives, then cap negatives at floor(ratio * positives).

    Positives are always kept. With no positives at most ``min_negatives``
    negatives survive.
    """
    pos = labels.positives
    pos_pairs = [pairs[k] for k in pos]
    out = list(labels.labels)
    remaining = []
    for k in labels.negatives:
        if is_excluded_negative(frame, pairs[k], pos_pairs, iou_thresh):
            out[k] = Positivity.EXCLUDED
        else:
            remaining.append(k)
    cap = negative_cap(len(pos), ratio, min_negatives)
    if len(remaining) > cap:
        remaining = sorted(int(k) for k in rng.choice(remaining, size=cap, replace=False))
    return SampledPairs(sorted(pos + remaining), out)
