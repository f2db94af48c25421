import json

import numpy as np
import pytest

from rsnet.cli import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_MISMATCH,
    EXIT_OK,
    EXIT_USAGE,
    load_model,
    main,
    sha256_file,
)
from rsnet.dsgg import DSGGModel
from rsnet.network import ModelConfig
from rsnet.numerics import load_checkpoint
from rsnet.scenegraph import load_dataset
from rsnet.scenegraph.pairs import enumerate_candidate_pairs

GEN = "n_videos = 3\nn_frames = 3\nmin_objects = 4\nmax_objects = 6\nfeature_dim = 8\nunion_dim = 8\n"
TRAIN = ("epochs = 2\nd_p = 8\nd_model = 16\nheads = 2\nspatial_blocks = 1\ntemporal_blocks = 1\n"
         "baseline_blocks = 1\nt_max = 8\n")


def _write(path, text):
    path.write_text(text)
    return str(path)


def _digests(d):
    """Output digests; the manifest itself records timings and paths."""
    return {p.name: sha256_file(p) for p in sorted(d.iterdir()) if p.is_file() and p.name != "manifest.json"}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    gen_cfg = _write(root / "gen.cfg", GEN)
    train_cfg = _write(root / "train.cfg", TRAIN)
    assert main(["gen-data", "--config", gen_cfg, "--seed", "4", "--out", str(root / "data")]) == EXIT_OK
    for v in ("+rsnet", "+rsnet+fusion"):
        assert main(["train", "--config", train_cfg, "--data", str(root / "data"), "--variant", v,
                     "--seed", "1", "--out", str(root / f"run_{v}")]) == EXIT_OK
    return root


def test_gen_data_is_deterministic(workspace, tmp_path):
    assert main(["gen-data", "--config", str(workspace / "gen.cfg"), "--seed", "4", "--out", str(tmp_path)]) == EXIT_OK
    a, b = _digests(workspace / "data"), _digests(tmp_path)
    assert a == b
    assert len([n for n in a if n.endswith(".npz")]) == 3
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "gen-data" and manifest["seed"] == 4
    assert manifest["params"]["generator"]["n_frames"] == 3


def test_gen_data_with_zero_videos(tmp_path):
    cfg = _write(tmp_path / "g.cfg", "n_videos = 0\n")
    assert main(["gen-data", "--config", cfg, "--out", str(tmp_path / "d")]) == EXIT_OK
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert manifest["outputs"] == {}
    assert load_dataset(tmp_path / "d")[0] == []


def test_train_writes_checkpoint_and_trace(workspace):
    run = workspace / "run_+rsnet+fusion"
    model, meta, opt = load_model(run / "checkpoint.npz")
    assert meta["variant"] == "+rsnet+fusion" and meta["epochs_done"] == 2
    assert opt and np.ravel(opt["step"])[0] == 2 * 3
    rows = [json.loads(l) for l in (run / "loss_trace.jsonl").read_text().splitlines()]
    assert len(rows) == 2 * 3
    assert {"epoch", "video", "L_od", "L_rel", "L_RSN", "total"} <= set(rows[0])


def test_zero_epochs_checkpoint_is_initialisation(workspace, tmp_path):
    cfg = _write(tmp_path / "t.cfg", TRAIN.replace("epochs = 2", "epochs = 0"))
    assert main(["train", "--config", cfg, "--data", str(workspace / "data"), "--seed", "9",
                 "--out", str(tmp_path / "r")]) == EXIT_OK
    model, _, _ = load_model(tmp_path / "r" / "checkpoint.npz")
    videos, gen = load_dataset(workspace / "data")
    mcfg = ModelConfig(d_p=8, d_model=16, heads=2, spatial_blocks=1, temporal_blocks=1, baseline_blocks=1, t_max=8)
    fresh = DSGGModel(gen.feature_dim, gen.union_dim, videos[0].vocab, mcfg, "+rsnet+fusion", seed=9)
    for (k, a), (_, b) in zip(fresh.named_parameters(), model.named_parameters()):
        assert a.data.tobytes() == b.data.tobytes(), k


def test_resume_with_no_extra_epochs_is_identical(workspace, tmp_path):
    run = workspace / "run_+rsnet"
    assert main(["train", "--config", str(workspace / "train.cfg"), "--data", str(workspace / "data"),
                 "--variant", "+rsnet", "--seed", "1", "--init", str(run / "checkpoint.npz"),
                 "--out", str(tmp_path)]) == EXIT_OK
    a, meta_a = load_checkpoint(run / "checkpoint.npz")
    b, meta_b = load_checkpoint(tmp_path / "checkpoint.npz")
    assert a.keys() == b.keys()
    for k in a:
        assert a[k].tobytes() == b[k].tobytes(), k
    assert (run / "checkpoint.npz").read_bytes() == (tmp_path / "checkpoint.npz").read_bytes()


def test_eval_reports_and_table(workspace, tmp_path):
    ckpts = [str(workspace / f"run_{v}" / "checkpoint.npz") for v in ("+rsnet", "+rsnet+fusion")]
    inputs_before = _digests(workspace / "data")
    argv = ["eval", "--data", str(workspace / "data"), "--k", "5,10", "--out", str(tmp_path),
            "--variant", "baseline,+rsnet,+rsnet+fusion", "--save-predictions"]
    for c in ckpts:
        argv += ["--checkpoint", c]
    assert main(argv) == EXIT_OK
    base = json.loads((tmp_path / "report_baseline.json").read_text())
    rs = json.loads((tmp_path / "report_+rsnet.json").read_text())
    assert base["n_frames"] == rs["n_frames"] == 9
    table = (tmp_path / "table.txt").read_text().strip().splitlines()
    assert len(table) == 1 + 3
    assert _digests(workspace / "data") == inputs_before

    # an exported dump scores the same as the model it came from
    out2 = tmp_path / "ext"
    assert main(["eval", "--data", str(workspace / "data"), "--k", "5,10", "--out", str(out2),
                 "--predictions", str(tmp_path / "predictions_+rsnet.jsonl")]) == EXIT_OK
    ext = json.loads((out2 / "report_external.json").read_text())
    assert ext["recall"] == rs["recall"] and ext["precision"] == rs["precision"]


def test_score_dump_records(workspace, tmp_path):
    ckpt = workspace / "run_+rsnet+fusion" / "checkpoint.npz"
    assert main(["score-dump", "--data", str(workspace / "data"), "--checkpoint", str(ckpt),
                 "--out", str(tmp_path)]) == EXIT_OK
    rows = [json.loads(l) for l in (tmp_path / "scores.jsonl").read_text().splitlines()]
    videos, _ = load_dataset(workspace / "data")
    n_pairs = sum(len(enumerate_candidate_pairs(f, True)) for v in videos for f in v.frames)
    assert len(rows) == n_pairs
    assert all(0.0 < r["p0"] < 1.0 for r in rows)
    assert {r["label"] for r in rows} <= {"positive", "negative", "excluded"}
    summary = json.loads((tmp_path / "summary.json").read_text())
    pos = [r["p0"] for r in rows if r["label"] == "positive"]
    assert summary["mean_p0_positive"] == pytest.approx(np.mean(pos))


def test_replay_reproduces_every_command(workspace, tmp_path):
    ckpt = str(workspace / "run_+rsnet+fusion" / "checkpoint.npz")
    runs = {
        "gen": ["gen-data", "--config", str(workspace / "gen.cfg"), "--seed", "2"],
        "train": ["train", "--config", str(workspace / "train.cfg"), "--data", str(workspace / "data")],
        "eval": ["eval", "--data", str(workspace / "data"), "--checkpoint", ckpt, "--save-predictions"],
        "dump": ["score-dump", "--data", str(workspace / "data"), "--checkpoint", ckpt],
    }
    for name, argv in runs.items():
        out = tmp_path / name
        assert main(argv + ["--out", str(out)]) == EXIT_OK
        assert main(["replay", str(out / "manifest.json"), "--out", str(tmp_path / f"{name}_again")]) == EXIT_OK
        assert _digests(out) == _digests(tmp_path / f"{name}_again"), name


def test_replay_detects_tampering(workspace, tmp_path):
    out = tmp_path / "g"
    assert main(["gen-data", "--config", str(workspace / "gen.cfg"), "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    first = sorted(manifest["outputs"])[0]
    manifest["outputs"][first] = "0" * 64
    (out / "manifest.json").write_text(json.dumps(manifest))
    assert main(["replay", str(out / "manifest.json"), "--out", str(tmp_path / "g2")]) == EXIT_MISMATCH


def test_exit_codes(workspace, tmp_path, capsys):
    data = str(workspace / "data")
    bad_key = _write(tmp_path / "bad.cfg", "n_vidoes = 3\n")
    assert main(["gen-data", "--config", bad_key, "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "n_vidoes" in capsys.readouterr().err
    assert main(["train", "--data", data, "--variant", "fancy", "--out", str(tmp_path / "y")]) == EXIT_USAGE
    assert "+rsnet+fusion" in capsys.readouterr().err
    assert main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "z")]) == EXIT_DATA
    assert main(["eval", "--data", data, "--out", str(tmp_path / "w")]) == EXIT_USAGE
    ckpt = str(workspace / "run_+rsnet" / "checkpoint.npz")
    assert main(["eval", "--data", data, "--checkpoint", ckpt, "--variant", "mean-token",
                 "--out", str(tmp_path / "v")]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--data", data])
    assert exc.value.code == EXIT_USAGE
