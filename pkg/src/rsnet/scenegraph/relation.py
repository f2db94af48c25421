from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics.nn import Linear, Module
from ..numerics.tensor import Tensor, concat
from .types import Frame, InvalidPairError, RelationRepresentation


@dataclass
class PairInputs:
    """Raw per-pair inputs gathered from a frame, rows aligned with ``pairs``."""

    subj_feat: np.ndarray
    obj_feat: np.ndarray
    union_feat: np.ndarray
    subj_dist: np.ndarray
    obj_dist: np.ndarray

    def __len__(self) -> int:
        return len(self.subj_feat)

    @staticmethod
    def stack(parts: list["PairInputs"]) -> "PairInputs":
        return PairInputs(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                            ("subj_feat", "obj_feat", "union_feat", "subj_dist", "obj_dist")))


def gather_pair_inputs(frame: Frame, pairs, class_dists: np.ndarray | None = None) -> PairInputs:
    dists = frame.class_dists if class_dists is None else class_dists
    idx = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
    return PairInputs(
        frame.features[idx[:, 0]],
        frame.features[idx[:, 1]],
        frame.union_features(idx),
        dists[idx[:, 0]],
        dists[idx[:, 1]],
    )


class RelationProjector(Module):
    """Builds ``[v_s, v_o, u, d_s, d_o]`` with each part linearly projected to ``d_p``.

    Subject and object share the visual and class projections.
    """

    def __init__(self, d_v: int, d_u: int, n_classes: int, d_p: int, rng: np.random.Generator):
        self.visual = Linear(d_v, d_p, rng)
        self.union = Linear(d_u, d_p, rng)
        self.semantic = Linear(n_classes, d_p, rng)
        self._d_p = d_p

    @property
    def out_dim(self) -> int:
        return 5 * self._d_p

    def __call__(self, inp: PairInputs) -> Tensor:
        return concat([
            self.visual(Tensor(inp.subj_feat)),
            self.visual(Tensor(inp.obj_feat)),
            self.union(Tensor(inp.union_feat)),
            self.semantic(Tensor(inp.subj_dist)),
            self.semantic(Tensor(inp.obj_dist)),
        ], axis=1)


def build_relation_representation(frame: Frame, i: int, j: int, proj: RelationProjector) -> RelationRepresentation:
    n = frame.num_detections
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise InvalidPairError(f"invalid pair ({i}, {j}) for a frame with {n} detections")
    x = proj(gather_pair_inputs(frame, [(i, j)])).data[0]
    return RelationRepresentation(x=x, subject_idx=i, object_idx=j, frame=frame.index)
