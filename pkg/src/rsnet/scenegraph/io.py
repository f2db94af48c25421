"""Video dataset files.

One archive per video (see :mod:`rsnet.numerics.checkpoint` for the
container). ``__meta__.json`` holds ``format="rsnet-video"``, ``version``,
``video_id``, ``seed``, the generator config, the vocabulary, per-frame
scalars and GT relations. Arrays are stored per frame under
``f{t:03d}/<name>``: ``features``, ``boxes``, ``class_dists``,
``matched_gt``, ``gt_labels``, ``gt_boxes``, ``inter_pairs``,
``inter_codes``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..config import config_from_dict, config_to_dict
from ..numerics.checkpoint import FormatError, read_archive, write_archive
from .generator import GeneratorConfig
from .types import Frame, GTRelation, PredicateVocabulary, SceneGraphGT, VideoSample

VIDEO_FORMAT = "rsnet-video"
VIDEO_VERSION = 1


def save_video(path, video: VideoSample, cfg: GeneratorConfig) -> None:
    arrays: dict[str, np.ndarray] = {}
    frames_meta = []
    for f in video.frames:
        key = f"f{f.index:03d}"
        arrays[f"{key}/features"] = f.features
        arrays[f"{key}/boxes"] = f.boxes
        arrays[f"{key}/class_dists"] = f.class_dists
        arrays[f"{key}/matched_gt"] = f.matched_gt.astype(np.int64)
        arrays[f"{key}/gt_labels"] = f.gt.labels.astype(np.int64)
        arrays[f"{key}/gt_boxes"] = f.gt.boxes
        arrays[f"{key}/inter_pairs"] = f.interaction_pairs.astype(np.int64)
        arrays[f"{key}/inter_codes"] = f.interaction_codes
        frames_meta.append({
            "index": f.index,
            "union_seed": f.union_seed,
            "union_noise": f.union_noise,
            "relations": [[r.subject, r.object, [list(c) for c in r.predicates]] for r in f.gt.relations],
        })
    meta = {
        "format": VIDEO_FORMAT,
        "version": VIDEO_VERSION,
        "video_id": video.video_id,
        "seed": video.seed,
        "generator": config_to_dict(cfg),
        "vocab": video.vocab.to_dict(),
        "frames": frames_meta,
    }
    write_archive(path, arrays, meta)


def load_video(path) -> tuple[VideoSample, GeneratorConfig]:
    arrays, meta = read_archive(path)
    if meta.get("format") != VIDEO_FORMAT:
        raise FormatError(f"{path}: not a video file (format={meta.get('format')!r})")
    if meta.get("version") != VIDEO_VERSION:
        raise FormatError(f"{path}: video format version {meta.get('version')} unsupported")
    frames = []
    for fm in meta["frames"]:
        key = f"f{fm['index']:03d}"
        rels = [GTRelation(s, o, tuple(tuple(c) for c in preds)) for s, o, preds in fm["relations"]]
        frames.append(Frame(
            index=fm["index"],
            features=arrays[f"{key}/features"],
            boxes=arrays[f"{key}/boxes"],
            class_dists=arrays[f"{key}/class_dists"],
            matched_gt=arrays[f"{key}/matched_gt"],
            gt=SceneGraphGT(arrays[f"{key}/gt_labels"], arrays[f"{key}/gt_boxes"], rels),
            interaction_pairs=arrays[f"{key}/inter_pairs"],
            interaction_codes=arrays[f"{key}/inter_codes"],
            union_seed=fm["union_seed"],
            union_noise=fm["union_noise"],
        ))
    video = VideoSample(frames, meta["seed"], PredicateVocabulary.from_dict(meta["vocab"]), meta["video_id"])
    return video, config_from_dict(meta["generator"], GeneratorConfig)


def save_dataset(out_dir, videos: list[VideoSample], cfg: GeneratorConfig) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for v in videos:
        p = out_dir / f"{v.video_id}.npz"
        save_video(p, v, cfg)
        paths.append(p)
    return paths


def load_dataset(data_dir) -> tuple[list[VideoSample], GeneratorConfig | None]:
    paths = sorted(Path(data_dir).glob("*.npz"))
    videos, cfg = [], None
    for p in paths:
        v, c = load_video(p)
        videos.append(v)
        cfg = cfg or c
    return videos, cfg
