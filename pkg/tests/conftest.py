import numpy as np
import pytest

from rsnet.dsgg import DSGGModel
from rsnet.network import ModelConfig
from rsnet.scenegraph import GeneratorConfig, generate_dataset

SMALL_GEN = dict(n_frames=3, min_objects=4, max_objects=6, feature_dim=8, union_dim=8)
SMALL_MODEL = dict(d_p=8, d_model=16, heads=2, spatial_blocks=1, temporal_blocks=1, baseline_blocks=1, t_max=8)


@pytest.fixture(scope="session")
def small_gen():
    return GeneratorConfig(**SMALL_GEN)


@pytest.fixture(scope="session")
def small_videos(small_gen):
    return generate_dataset(small_gen, 4, master_seed=11)


@pytest.fixture
def make_model(small_gen, small_videos):
    def build(variant="+rsnet+fusion", seed=0, **over):
        cfg = ModelConfig(**{**SMALL_MODEL, **over})
        return DSGGModel(small_gen.feature_dim, small_gen.union_dim, small_videos[0].vocab, cfg, variant, seed)

    return build


def perturb(model, seed=0, scale=0.3):
    """Stand-in for training: jitter every parameter so no head sits at init."""
    rng = np.random.default_rng(seed)
    for _, p in model.named_parameters():
        p.data += scale * rng.standard_normal(p.shape)


# --- acceptance report: one line per criterion, printed after the run -------

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records a pass/fail line, then asserts ``ok``."""

    def record(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[n] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
