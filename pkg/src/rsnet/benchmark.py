"""Seeded train/test benchmark over the model variants.

One master seed fixes the train split, the test split and the model
initialisation; every variant of that seed sees exactly the same data.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dsgg import SGDET, DSGGModel, score_video
from .metrics import EvalConfig, MetricsReport, evaluate
from .network import ModelConfig
from .scenegraph import GeneratorConfig, generate_dataset
from .scenegraph.pairs import is_excluded_negative, label_candidates
from .scenegraph.types import Positivity, VideoSample
from .training import TrainConfig, train

log = logging.getLogger(__name__)

ABLATION_VARIANTS = ("baseline", "+rsnet", "+rsnet+fusion", "mean-token", "no-temporal")


def split_seeds(master_seed: int) -> tuple[int, int]:
    """Dataset seeds of the train and test split for one master seed."""
    return 1000 * master_seed + 1, 1000 * master_seed + 2


def relation_score_records(videos: list[VideoSample], model: DSGGModel,
                           person_centric: bool = True) -> list[dict]:
    """One record per candidate pair: p0 and its positive/negative/excluded label."""
    rows = []
    for video in videos:
        for frame, fs in zip(video.frames, score_video(video, model, SGDET, person_centric)):
            labels = label_candidates(frame, fs.pairs).labels
            positives = [pr for pr, lab in zip(fs.pairs, labels) if lab is Positivity.POSITIVE]
            for (i, j), p0, lab in zip(fs.pairs, fs.p0, labels):
                if lab is Positivity.NEGATIVE and is_excluded_negative(frame, (i, j), positives):
                    lab = Positivity.EXCLUDED
                rows.append({"video": video.video_id, "frame": frame.index, "subject": int(i),
                             "object": int(j), "p0": float(p0), "label": lab.value})
    return rows


def p0_separation(records: list[dict]) -> tuple[float | None, float | None]:
    """Mean p0 over positive pairs and over (non-excluded) negative pairs."""
    pos = [r["p0"] for r in records if r["label"] == "positive"]
    neg = [r["p0"] for r in records if r["label"] == "negative"]
    return (float(np.mean(pos)) if pos else None, float(np.mean(neg)) if neg else None)


@dataclass
class BenchmarkRun:
    seed: int
    variant: str
    report: MetricsReport
    mean_p0_positive: float | None
    mean_p0_negative: float | None
    seconds: float

    @property
    def p0_gap(self) -> float | None:
        if self.mean_p0_positive is None or self.mean_p0_negative is None:
            return None
        return self.mean_p0_positive - self.mean_p0_negative


@dataclass
class BenchmarkConfig:
    n_train: int = 100
    n_test: int = 20
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def run_seed(seed: int, variants=ABLATION_VARIANTS, cfg: BenchmarkConfig = BenchmarkConfig()) -> list[BenchmarkRun]:
    tr_seed, te_seed = split_seeds(seed)
    train_set = generate_dataset(cfg.generator, cfg.n_train, tr_seed, "train")
    test_set = generate_dataset(cfg.generator, cfg.n_test, te_seed, "test")
    vocab = train_set[0].vocab
    runs = []
    for variant in variants:
        t0 = time.perf_counter()
        model = DSGGModel(cfg.generator.feature_dim, cfg.generator.union_dim, vocab, cfg.model, variant, seed=seed)
        train(train_set, model, replace(cfg.train, variant=variant, seed=seed))
        report = evaluate(test_set, model, cfg.eval)
        pos = neg = None
        if model.rsnet is not None:
            pos, neg = p0_separation(relation_score_records(test_set, model))
        runs.append(BenchmarkRun(seed, variant, report, pos, neg, time.perf_counter() - t0))
        log.info("seed %d %s R@10 %.3f P@10 %.3f", seed, variant, report.recall[10], report.precision[10])
    return runs


def run_benchmark(seeds, variants=ABLATION_VARIANTS, cfg: BenchmarkConfig = BenchmarkConfig()) -> list[BenchmarkRun]:
    return [run for s in seeds for run in run_seed(s, variants, cfg)]


def mean_metric(runs: list[BenchmarkRun], variant: str, metric: str = "recall", k: int = 10) -> float:
    vals = [getattr(r.report, metric)[k] for r in runs if r.variant == variant]
    return float(np.mean(vals))
