from .generator import GeneratorConfig, derive_seed, generate_dataset, generate_synthetic_video, make_vocabulary
from .geometry import iou, iou_matrix, union_box
from .io import load_dataset, load_video, save_dataset, save_video
from .pairs import (
    PairLabels,
    SampledPairs,
    enumerate_candidate_pairs,
    is_excluded_negative,
    label_candidates,
    negative_cap,
    negative_sampling,
)
from .relation import PairInputs, RelationProjector, build_relation_representation, gather_pair_inputs
from .types import (
    CATEGORIES,
    BoundingBox,
    Frame,
    GTRelation,
    InvalidPairError,
    ObjectDetection,
    Positivity,
    PredicateVocabulary,
    RelationRepresentation,
    SceneGraphGT,
    VideoSample,
)

__all__ = [
    "GeneratorConfig",
    "derive_seed",
    "generate_dataset",
    "generate_synthetic_video",
    "make_vocabulary",
    "iou",
    "iou_matrix",
    "union_box",
    "load_dataset",
    "load_video",
    "save_dataset",
    "save_video",
    "PairLabels",
    "SampledPairs",
    "enumerate_candidate_pairs",
    "is_excluded_negative",
    "label_candidates",
    "negative_cap",
    "negative_sampling",
    "PairInputs",
    "RelationProjector",
    "build_relation_representation",
    "gather_pair_inputs",
    "CATEGORIES",
    "BoundingBox",
    "Frame",
    "GTRelation",
    "InvalidPairError",
    "ObjectDetection",
    "Positivity",
    "PredicateVocabulary",
    "RelationRepresentation",
    "SceneGraphGT",
    "VideoSample",
]
