from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

CATEGORIES = ("attention", "spatial", "contact")


class InvalidPairError(ValueError):
    """Subject and object indices name the same (or a missing) detection."""


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(0.0 <= c <= 1.0 for c in coords):
            raise ValueError(f"box coordinates must lie in [0, 1]: {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box: {coords}")

    @classmethod
    def from_array(cls, a) -> "BoundingBox":
        return cls(*(float(v) for v in a))

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2])

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class PredicateVocabulary:
    """Entity classes plus predicates split into attention/spatial/contact.

    Predicates carry global ids laid out category by category.
    """

    entity_classes: tuple[str, ...]
    attention: tuple[str, ...]
    spatial: tuple[str, ...]
    contact: tuple[str, ...]

    def __post_init__(self):
        names = self.attention + self.spatial + self.contact
        if len(set(names)) != len(names):
            raise ValueError("predicate categories must be disjoint")
        if not all(self.category_sizes):
            raise ValueError("every predicate category needs at least one predicate")

    @property
    def predicates(self) -> tuple[str, ...]:
        return self.attention + self.spatial + self.contact

    @property
    def num_predicates(self) -> int:
        return len(self.predicates)

    @property
    def num_classes(self) -> int:
        return len(self.entity_classes)

    @property
    def category_sizes(self) -> tuple[int, int, int]:
        return (len(self.attention), len(self.spatial), len(self.contact))

    @property
    def category_offsets(self) -> tuple[int, int, int]:
        a, s, _ = self.category_sizes
        return (0, a, a + s)

    def category_of(self, predicate: int) -> int:
        for c, (off, n) in enumerate(zip(self.category_offsets, self.category_sizes)):
            if off <= predicate < off + n:
                return c
        raise IndexError(f"predicate id {predicate} outside vocabulary")

    def to_dict(self) -> dict:
        return {
            "entity_classes": list(self.entity_classes),
            "attention": list(self.attention),
            "spatial": list(self.spatial),
            "contact": list(self.contact),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PredicateVocabulary":
        return cls(*(tuple(d[k]) for k in ("entity_classes", "attention", "spatial", "contact")))


@dataclass(frozen=True)
class ObjectDetection:
    feature: np.ndarray
    box: BoundingBox
    class_distribution: np.ndarray
    matched_gt: Optional[int] = None

    @property
    def label(self) -> int:
        return int(np.argmax(self.class_distribution))


@dataclass(frozen=True)
class GTRelation:
    """Annotated ordered pair; ``predicates[c]`` holds global predicate ids of category c."""

    subject: int
    object: int
    predicates: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]

    def all_predicates(self) -> tuple[int, ...]:
        return tuple(p for cat in self.predicates for p in cat)


@dataclass
class SceneGraphGT:
    labels: np.ndarray  # (M,) entity class ids
    boxes: np.ndarray  # (M, 4)
    relations: list[GTRelation] = field(default_factory=list)

    def validate(self, vocab: PredicateVocabulary) -> None:
        m = len(self.labels)
        seen = set()
        for rel in self.relations:
            if not (0 <= rel.subject < m and 0 <= rel.object < m) or rel.subject == rel.object:
                raise ValueError(f"relation endpoints invalid: {rel}")
            if (rel.subject, rel.object) in seen:
                raise ValueError(f"pair annotated twice: {(rel.subject, rel.object)}")
            seen.add((rel.subject, rel.object))
            for c, preds in enumerate(rel.predicates):
                for p in preds:
                    if vocab.category_of(p) != c:
                        raise ValueError(f"predicate {p} filed under wrong category {c}")

    def triplets(self) -> list[tuple[int, int, int]]:
        """GT (subject, object, predicate) triplets; the units counted by recall."""
        return [(r.subject, r.object, p) for r in self.relations for p in r.all_predicates()]


@dataclass
class Frame:
    """One video frame: detections (as arrays), ground truth and latent interactions.

    ``interaction_pairs``/``interaction_codes`` are the generator's latent
    signal for detection pairs that currently interact; the union-region
    feature of a pair is that code plus pair-seeded noise.
    """

    index: int
    features: np.ndarray  # (N, d_v)
    boxes: np.ndarray  # (N, 4)
    class_dists: np.ndarray  # (N, C)
    matched_gt: np.ndarray  # (N,) int, -1 = unmatched
    gt: SceneGraphGT
    interaction_pairs: np.ndarray  # (R, 2) int
    interaction_codes: np.ndarray  # (R, d_u)
    union_seed: int
    union_noise: float
    _union_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def num_detections(self) -> int:
        return len(self.features)

    @property
    def labels(self) -> np.ndarray:
        return self.class_dists.argmax(axis=1)

    @property
    def detections(self) -> list[ObjectDetection]:
        return [
            ObjectDetection(
                self.features[i],
                BoundingBox.from_array(self.boxes[i]),
                self.class_dists[i],
                None if self.matched_gt[i] < 0 else int(self.matched_gt[i]),
            )
            for i in range(self.num_detections)
        ]

    def union_feature(self, i: int, j: int) -> np.ndarray:
        key = (i, j)
        hit = self._union_cache.get(key)
        if hit is not None:
            return hit
        d_u = self.interaction_codes.shape[1]
        rng = np.random.default_rng([self.union_seed, self.index, i, j])
        u = self.union_noise * rng.standard_normal(d_u)
        for r, (a, b) in enumerate(self.interaction_pairs):
            if a == i and b == j:
                u = u + self.interaction_codes[r]
        self._union_cache[key] = u
        return u

    def union_features(self, pairs) -> np.ndarray:
        d_u = self.interaction_codes.shape[1]
        if len(pairs) == 0:
            return np.zeros((0, d_u))
        return np.stack([self.union_feature(int(i), int(j)) for i, j in pairs])


@dataclass
class VideoSample:
    frames: list[Frame]
    seed: int
    vocab: PredicateVocabulary
    video_id: str = ""

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ValueError("a video needs at least one frame")

    @property
    def num_frames(self) -> int:
        return len(self.frames)


class Positivity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    EXCLUDED = "excluded"


@dataclass
class RelationRepresentation:
    x: np.ndarray  # (5 * d_p,)
    subject_idx: int
    object_idx: int
    frame: int
    label: Optional[Positivity] = None
    gt_relation: Optional[int] = None
