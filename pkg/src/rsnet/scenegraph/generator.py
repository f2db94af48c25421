"""Seeded synthetic videos standing in for a detector + annotated dataset.

Shared "world" structure (class feature means, predicate codes, activities)
comes from ``cfg.world_seed``; everything else in a video comes from the
video seed. Generative story per video:

* an activity is drawn; it names the object classes a person tends to
  interact with and a preferred predicate per category;
* one person plus ``min_objects..max_objects`` objects, some of which are
  related to the person (classes drawn from the activity) and the rest
  distractors with uniformly random classes;
* every relation has one predicate per category; relation on/off state and
  predicates persist between consecutive frames with the configured
  probabilities;
* detections are GT objects with Gaussian feature noise, jittered boxes and a
  softmax over noisy class logits;
* an active relation is "visible" in a frame with probability
  ``interaction_visibility``; only then does its union-region feature carry
  the predicate code. Invisible relations must be recovered from context.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..numerics.nn import ConfigError
from .types import Frame, GTRelation, PredicateVocabulary, SceneGraphGT, VideoSample

ENTITY_NAMES = (
    "person", "bag", "bed", "blanket", "book", "box", "broom", "chair", "closet",
    "clothes", "cup", "dish", "door", "doorknob", "doorway", "floor", "food",
    "groceries", "laptop", "light", "medicine", "mirror", "paper", "phone",
    "picture", "pillow", "refrigerator", "sandwich", "shelf", "shoe", "sofa",
    "table", "television", "towel", "vacuum", "window",
)
ATTENTION_NAMES = ("looking_at", "not_looking_at", "unsure")
SPATIAL_NAMES = ("above", "beneath", "in_front_of", "behind", "on_the_side_of", "in")
CONTACT_NAMES = (
    "holding", "touching", "not_contacting", "sitting_on", "wiping", "drinking_from",
    "carrying", "eating", "leaning_on", "lying_on", "wearing", "writing_on",
    "standing_on", "twisting", "covered_by", "have_it_on_the_back", "other_relationship",
)


@dataclass(frozen=True)
class GeneratorConfig:
    n_frames: int = 8
    min_objects: int = 12
    max_objects: int = 16
    min_relations: int = 2
    max_relations: int = 4
    n_entity_classes: int = 13
    n_attention: int = 3
    n_spatial: int = 5
    n_contact: int = 6
    n_activities: int = 6
    classes_per_activity: int = 2
    feature_dim: int = 32
    union_dim: int = 32
    instance_spread: float = 0.3
    feature_noise: float = 0.5
    class_margin: float = 3.0
    class_noise: float = 1.0
    box_jitter: float = 0.02
    box_drift: float = 0.01
    union_noise: float = 0.5
    interaction_strength: float = 1.5
    interaction_visibility: float = 0.4
    relation_persistence: float = 0.9
    predicate_persistence: float = 0.85
    activity_bias: float = 0.7
    predicate_tail: float = 1.0
    object_presence: float = 0.9
    person_centric: bool = True
    world_seed: int = 0

    def validate(self) -> None:
        if self.n_frames < 1:
            raise ConfigError("n_frames must be >= 1")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ConfigError("need 1 <= min_objects <= max_objects")
        if not 0 <= self.min_relations <= self.max_relations:
            raise ConfigError("need 0 <= min_relations <= max_relations")
        if self.min_relations > self.min_objects:
            raise ConfigError(
                f"min_relations={self.min_relations} exceeds the {self.min_objects} "
                "person-object pairs available"
            )
        if self.n_entity_classes < 2:
            raise ConfigError("need a person class and at least one object class")
        if not 1 <= self.classes_per_activity <= self.n_entity_classes - 1:
            raise ConfigError("classes_per_activity must lie in [1, n_entity_classes - 1]")
        if min(self.n_attention, self.n_spatial, self.n_contact, self.n_activities) < 1:
            raise ConfigError("vocabulary and activity sizes must be positive")
        for name in ("interaction_visibility", "relation_persistence", "predicate_persistence",
                     "activity_bias", "object_presence"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be a probability")
        for name in ("instance_spread", "feature_noise", "class_noise", "box_jitter",
                     "box_drift", "union_noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")


def _names(base: tuple[str, ...], n: int, stem: str) -> tuple[str, ...]:
    return tuple(base[i] if i < len(base) else f"{stem}_{i}" for i in range(n))


def make_vocabulary(cfg: GeneratorConfig) -> PredicateVocabulary:
    return PredicateVocabulary(
        _names(ENTITY_NAMES, cfg.n_entity_classes, "class"),
        _names(ATTENTION_NAMES, cfg.n_attention, "attention"),
        _names(SPATIAL_NAMES, cfg.n_spatial, "spatial"),
        _names(CONTACT_NAMES, cfg.n_contact, "contact"),
    )


@dataclass(frozen=True)
class _World:
    class_means: np.ndarray  # (C, d_v)
    predicate_codes: np.ndarray  # (P, d_u)
    activity_classes: np.ndarray  # (A, classes_per_activity)
    activity_predicates: np.ndarray  # (A, 3) global predicate ids
    priors: tuple[np.ndarray, np.ndarray, np.ndarray]  # long-tailed per category


@lru_cache(maxsize=16)
def _world(cfg: GeneratorConfig) -> _World:
    rng = np.random.default_rng([cfg.world_seed, 0x5EED])
    vocab = make_vocabulary(cfg)
    class_means = rng.standard_normal((cfg.n_entity_classes, cfg.feature_dim))
    codes = rng.standard_normal((vocab.num_predicates, cfg.union_dim))
    act_classes = np.stack([
        rng.choice(np.arange(1, cfg.n_entity_classes), cfg.classes_per_activity, replace=False)
        for _ in range(cfg.n_activities)
    ])
    priors = []
    for n in vocab.category_sizes:
        w = 1.0 / np.arange(1, n + 1) ** cfg.predicate_tail
        priors.append(w / w.sum())
    act_preds = np.stack([
        [off + rng.choice(n, p=prior) for off, n, prior in
         zip(vocab.category_offsets, vocab.category_sizes, priors)]
        for _ in range(cfg.n_activities)
    ])
    return _World(class_means, codes, act_classes, act_preds, tuple(priors))


def _valid_box(b: np.ndarray, min_size: float = 0.01) -> np.ndarray:
    b = np.clip(b, 0.0, 1.0)
    for lo, hi in ((0, 2), (1, 3)):
        if b[hi] - b[lo] < min_size:
            mid = np.clip((b[lo] + b[hi]) / 2, min_size / 2, 1 - min_size / 2)
            b[lo], b[hi] = mid - min_size / 2, mid + min_size / 2
    return b


def _random_box(rng, lo: float, hi: float) -> np.ndarray:
    w, h = rng.uniform(lo, hi, size=2)
    cx = rng.uniform(w / 2, 1 - w / 2)
    cy = rng.uniform(h / 2, 1 - h / 2)
    return np.array([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2])


def _sample_predicate(rng, world: _World, cfg: GeneratorConfig, activity: int, cat: int, vocab) -> int:
    if rng.random() < cfg.activity_bias:
        return int(world.activity_predicates[activity, cat])
    off = vocab.category_offsets[cat]
    return int(off + rng.choice(vocab.category_sizes[cat], p=world.priors[cat]))


def generate_synthetic_video(cfg: GeneratorConfig, seed: int, video_id: str = "") -> VideoSample:
    """Pure function of ``(cfg, seed)``."""
    cfg.validate()
    world = _world(cfg)
    vocab = make_vocabulary(cfg)
    rng = np.random.default_rng(seed)
    C = cfg.n_entity_classes

    activity = int(rng.integers(cfg.n_activities))
    n_obj = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    n_rel = int(rng.integers(cfg.min_relations, min(cfg.max_relations, n_obj) + 1))
    rel_classes = rng.choice(world.activity_classes[activity], size=n_rel, replace=True)
    dis_classes = rng.integers(1, C, size=n_obj - n_rel)
    obj_classes = np.concatenate([rel_classes, dis_classes]).astype(int)
    order = rng.permutation(n_obj)
    obj_classes = obj_classes[order]
    related = np.zeros(n_obj, dtype=bool)
    related[np.argsort(order)[:n_rel]] = True

    classes = np.concatenate([[0], obj_classes])  # slot 0 is the person
    n_all = len(classes)
    inst_feat = world.class_means[classes] + cfg.instance_spread * rng.standard_normal(
        (n_all, cfg.feature_dim)
    )
    boxes = np.stack(
        [_random_box(rng, 0.3, 0.5)] + [_random_box(rng, 0.08, 0.25) for _ in range(n_obj)]
    )

    rel_slots = [int(s) + 1 for s in np.flatnonzero(related)]
    active = {s: True for s in rel_slots}
    preds = {s: [_sample_predicate(rng, world, cfg, activity, c, vocab) for c in range(3)]
             for s in rel_slots}

    frames = []
    for t in range(cfg.n_frames):
        if t > 0:
            present = np.concatenate([[True], rng.random(n_obj) < cfg.object_presence])
            boxes = np.stack([
                _valid_box(b + np.tile(cfg.box_drift * rng.standard_normal(2), 2)) for b in boxes
            ])
            for s in rel_slots:
                if rng.random() > cfg.relation_persistence:
                    active[s] = not active[s]
                for c in range(3):
                    if rng.random() > cfg.predicate_persistence:
                        preds[s][c] = _sample_predicate(rng, world, cfg, activity, c, vocab)
        else:
            present = np.ones(n_all, dtype=bool)

        slots = np.flatnonzero(present)
        slot_to_idx = {int(s): i for i, s in enumerate(slots)}
        labels = classes[slots]
        gt_boxes = boxes[slots].copy()
        relations = []
        inter_pairs, inter_codes = [], []
        for s in rel_slots:
            if not (present[s] and active[s]):
                continue
            j = slot_to_idx[s]
            relations.append(GTRelation(0, j, tuple((p,) for p in preds[s])))
            if rng.random() < cfg.interaction_visibility:
                code = world.predicate_codes[preds[s]].sum(axis=0)
                inter_pairs.append((0, j))
                inter_codes.append(cfg.interaction_strength / np.sqrt(3.0) * code)

        n_det = len(slots)
        feats = inst_feat[slots] + cfg.feature_noise * rng.standard_normal((n_det, cfg.feature_dim))
        det_boxes = np.stack([
            _valid_box(b + cfg.box_jitter * rng.standard_normal(4)) for b in gt_boxes
        ])
        logits = cfg.class_margin * np.eye(C)[labels] + cfg.class_noise * rng.standard_normal((n_det, C))
        logits -= logits.max(axis=1, keepdims=True)
        dists = np.exp(logits)
        dists /= dists.sum(axis=1, keepdims=True)

        gt = SceneGraphGT(labels=labels.astype(np.int64), boxes=gt_boxes, relations=relations)
        frames.append(Frame(
            index=t,
            features=feats,
            boxes=det_boxes,
            class_dists=dists,
            matched_gt=np.arange(n_det, dtype=np.int64),
            gt=gt,
            interaction_pairs=np.array(inter_pairs, dtype=np.int64).reshape(-1, 2),
            interaction_codes=np.array(inter_codes, dtype=np.float64).reshape(-1, cfg.union_dim),
            union_seed=int(seed),
            union_noise=cfg.union_noise,
        ))
    return VideoSample(frames=frames, seed=int(seed), vocab=vocab, video_id=video_id)


def derive_seed(master_seed: int, index: int) -> int:
    """Per-item seed: first 32-bit word of ``SeedSequence([master_seed, index])``."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def generate_dataset(cfg: GeneratorConfig, n_videos: int, master_seed: int, prefix: str = "video") -> list[VideoSample]:
    return [
        generate_synthetic_video(cfg, derive_seed(master_seed, i), video_id=f"{prefix}_{i:05d}")
        for i in range(n_videos)
    ]
