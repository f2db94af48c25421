"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 4, 7 and 8 share one benchmark (5 master seeds x 5 variants,
100 train / 20 test videos, default configs), trained once per module.
"""

import time

import numpy as np
import pytest

from conftest import perturb
from oracles import (
    VOCAB,
    brute_constraint,
    oracle_match,
    oracle_metrics,
    random_detection_frame,
    random_metric_frame,
)
from rsnet.benchmark import ABLATION_VARIANTS, BenchmarkConfig, mean_metric, run_benchmark
from rsnet.cli import EXIT_OK, main, sha256_file
from rsnet.dsgg import DSGGModel, FrameScores, apply_constraint, predict_frame, predict_video
from rsnet.losses import FocalLossConfig, loss_od, loss_rel, loss_rsn, loss_total
from rsnet.metrics import match_frame, mean_recall_at_k, precision_at_k, recall_at_k
from rsnet.network import ModelConfig, SpatialContextEncoder, TemporalContextEncoder
from rsnet.numerics import Tensor, grad_check_detail
from rsnet.scenegraph import (
    BoundingBox,
    GeneratorConfig,
    Positivity,
    enumerate_candidate_pairs,
    generate_dataset,
    iou,
    label_candidates,
    negative_sampling,
)
from rsnet.training import TrainConfig, compute_losses, prepare_video

SEEDS = (0, 1, 2, 3, 4)


# --- 1. gradient fidelity -------------------------------------------------------


def test_criterion_1_gradient_fidelity(criterion):
    """Central differences of the total loss through every module, all losses on."""
    gen = GeneratorConfig(n_frames=3, min_objects=4, max_objects=6, feature_dim=8, union_dim=8)
    mcfg = ModelConfig(d_p=8, d_model=16, heads=2, t_max=8)
    t0 = time.perf_counter()
    worst, coords, kinks, tiny = 0.0, 0, 0, 0
    for seed in SEEDS:
        video = generate_dataset(gen, 1, 100 + seed)[0]
        model = DSGGModel(gen.feature_dim, gen.union_dim, video.vocab, mcfg, "+rsnet+fusion", seed)
        cfg = TrainConfig(seed=seed)
        prep = prepare_video(video, np.random.default_rng(seed), cfg)
        parts = compute_losses(model, prep, cfg)
        assert parts.od is not None and parts.rel is not None and parts.rsn is not None

        def f():
            return compute_losses(model, prep, cfg).total

        # 40 coordinates from each stage so no module goes unchecked
        groups = [model.projector, model.object_head, model.baseline, model.rsnet.spatial,
                  model.rsnet.temporal, model.rsnet.decoder, model.fusion]
        for g in groups:
            # eps 1e-5: round-off in the difference quotient shrinks as 1/eps.
            # ReLU/hinge breakpoints inside +-eps are resampled; slopes below
            # the quotient's resolution are compared in absolute terms.
            res = grad_check_detail(f, g.parameters(), eps=1e-5, n_coords=40, rng=np.random.default_rng(seed),
                                    skip_kinks=True, resolution=None)
            worst = max(worst, res.worst)
            coords += res.checked
            kinks += res.skipped_kinks
            tiny += res.below_resolution
    secs = time.perf_counter() - t0
    ok = worst <= 1e-4 and coords >= 200 * len(SEEDS) and secs < 120
    criterion(1, ok, f"max rel err {worst:.2e} over {coords} coords ({len(SEEDS)} seeds) in {secs:.0f}s; "
                     f"{kinks} kink coords resampled, {tiny} zero-slope coords matched absolutely")


# --- 2. structural invariants ------------------------------------------------------


def test_criterion_2_structural_invariants(criterion):
    d = 128
    spatial_err = temporal_err = 0.0
    order_diff = np.inf
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        enc = SpatialContextEncoder(40, d, 2, 4, rng)
        x = rng.standard_normal((7, 40))
        perm = rng.permutation(7)
        c, xh = enc(Tensor(x))
        cp, xhp = enc(Tensor(x[perm]))
        spatial_err = max(spatial_err, np.abs(c.data - cp.data).max(), np.abs(xh.data[perm] - xhp.data).max())

        tmp = TemporalContextEncoder(d, 4, 4, 8, rng)
        frames = rng.standard_normal((8, d))
        active = tmp(Tensor(frames)).data
        order_diff = min(order_diff, np.abs(active - tmp(Tensor(frames[::-1].copy())).data).max())
        tmp.pos.data[...] = 0.0
        base = tmp(Tensor(frames)).data
        temporal_err = max(temporal_err, np.abs(base - tmp(Tensor(frames[rng.permutation(8)])).data).max())

    # queries/keys get LN(z) + pos, values LN(z): restate the first block by hand
    rng = np.random.default_rng(9)
    tmp = TemporalContextEncoder(d, 4, 4, 8, rng)
    tmp.pos.data[...] = rng.standard_normal(tmp.pos.shape)
    z = Tensor(np.concatenate([tmp.token.data[None], rng.standard_normal((5, d))]))
    pos = Tensor(tmp.pos.data[:6])
    block = tmp.encoder.blocks[0]
    h = block.norm1(z)
    qk = Tensor(h.data + pos.data)
    mid = z.data + block.attn(qk, qk, h).data
    ref = mid + block.ff(block.norm2(Tensor(mid))).data
    qk_err = np.abs(block(z, pos=pos).data - ref).max()
    leak = np.abs(block(z, pos=pos, pos_in_value=True).data - ref).max()

    ok = spatial_err <= 1e-9 and temporal_err <= 1e-9 and order_diff >= 1e-6 and qk_err <= 1e-12 and leak > 1e-6
    criterion(2, ok, f"spatial perm {spatial_err:.1e}, zero-pos perm {temporal_err:.1e}, "
                     f"order sensitivity {order_diff:.1e}, Q/K-only {qk_err:.1e}")


# --- 3. loss identities ------------------------------------------------------------


def test_criterion_3_loss_identities(criterion, make_model, small_videos):
    rng = np.random.default_rng(0)
    p = rng.uniform(0.01, 1.0, (1000, 2))
    p /= p.sum(axis=1, keepdims=True)
    labels = rng.integers(0, 2, 1000)
    ce = -np.log(p[np.arange(1000), labels])
    focal_err = max(abs(loss_rsn(p[i:i + 1], labels[i:i + 1], FocalLossConfig(1.0, 1.0, 0.0)).item() - ce[i])
                    for i in range(1000))

    s = rng.standard_normal(7)
    rel_ref = sum(max(0.0, 1 - s[m] + s[n]) for m in (0, 3) for n in (1, 2, 5))
    rel_err = abs(loss_rel(s, [0, 3], [1, 2, 5]).item() - rel_ref)

    d = rng.uniform(0.01, 1.0, (30, 5))
    d /= d.sum(axis=1, keepdims=True)
    y = rng.integers(0, 5, 30)
    od_err = abs(loss_od(d, y).item() - sum(-np.log(d[i, y[i]]) for i in range(30)))

    cfg = FocalLossConfig()
    rsn_ref = sum(-0.5 * (1 - p[i, c]) ** 2 * np.log(p[i, c]) for i, c in enumerate(labels[:50]))
    rsn_err = abs(loss_rsn(p[:50], labels[:50], cfg).item() - rsn_ref)

    parts = compute_losses(make_model(), prepare_video(small_videos[0], rng, TrainConfig()), TrainConfig())
    additive = parts.total.item() == parts.od.item() + parts.rel.item() + parts.rsn.item() \
        and loss_total(Tensor(1.0), Tensor(2.0), Tensor(3.0)).item() == 6.0

    worst = max(focal_err, rel_err, od_err, rsn_err)
    criterion(3, worst <= 1e-12 and additive,
              f"focal=CE {focal_err:.1e}, rel {rel_err:.1e}, od {od_err:.1e}, rsn {rsn_err:.1e}, additive {additive}")


# --- shared benchmark ---------------------------------------------------------------


@pytest.fixture(scope="module")
def benchmark():
    t0 = time.perf_counter()
    runs = run_benchmark(SEEDS, ABLATION_VARIANTS, BenchmarkConfig())
    return runs, time.perf_counter() - t0


# --- 4. metric oracles ---------------------------------------------------------------


def test_criterion_4_metric_oracles(criterion, benchmark):
    rng = np.random.default_rng(4)
    results, frames, agree = [], [], True
    for _ in range(100):
        gt, preds = random_metric_frame(rng)
        ranked = apply_constraint(preds)
        agree &= ranked == brute_constraint(preds, lambda t: (t.subject, t.object))
        per_cat = apply_constraint(preds, VOCAB, per_category=True)
        agree &= per_cat == brute_constraint(preds, lambda t: (t.subject, t.object, VOCAB.category_of(t.predicate)))
        res = match_frame(ranked, gt)
        matches, gt_pred = oracle_match(ranked, gt)
        agree &= res.matches == matches
        results.append(res)
        frames.append((matches, gt_pred, len(ranked)))
    for k in (10, 20, 50):
        r, p, mr = oracle_metrics(frames, k)
        agree &= recall_at_k(results, k) == r and precision_at_k(results, k) == p \
            and mean_recall_at_k(results, k, VOCAB) == mr

    runs, _ = benchmark
    monotone = all(r.report.recall[10] <= r.report.recall[20] <= r.report.recall[50] for r in runs)
    criterion(4, agree and monotone, f"oracle agreement on 100 frames {agree}, "
                                     f"R@10<=R@20<=R@50 on all {len(runs)} benchmark runs {monotone}")


# --- 5. sampling contract ------------------------------------------------------------


def test_criterion_5_sampling_contract(criterion):
    rng = np.random.default_rng(5)
    violations = zero_pos = 0
    for _ in range(1000):
        f = random_detection_frame(rng)
        pairs = enumerate_candidate_pairs(f)
        s = negative_sampling(f, pairs, label_candidates(f, pairs), rng)
        pos = [k for k in s.keep if s.labels[k] is Positivity.POSITIVE]
        neg = [k for k in s.keep if s.labels[k] is Positivity.NEGATIVE]
        # frames without positives fall under the documented min_negatives rule
        cap = (12 * len(pos)) // 10 if pos else 4
        zero_pos += not pos
        if len(neg) > cap:
            violations += 1
        boxes = [BoundingBox.from_array(b) for b in f.boxes]
        for k in neg:
            i, j = pairs[k]
            for a, b in (pairs[q] for q in pos):
                if f.labels[i] == f.labels[a] and f.labels[j] == f.labels[b] \
                        and iou(boxes[i], boxes[a]) > 0.5 and iou(boxes[j], boxes[b]) > 0.5:
                    violations += 1
    criterion(5, violations == 0, f"{violations} violations on 1000 random frames "
                                  f"({zero_pos} without positives, capped at min_negatives=4)")


# --- 6. ranking semantics ----------------------------------------------------------------


def test_criterion_6_ranking_semantics(criterion, make_model, small_videos):
    base = make_model("baseline", seed=6)
    full = make_model("+rsnet+fusion", seed=6)
    perturb(base, 6)
    full.load_state_dict({**full.state_dict(), **base.state_dict()})
    identical = all(
        repr(predict_video(v, base)) == repr(predict_video(v, full, use_rsnet=False, use_fusion=False))
        for v in small_videos
    )

    rng = np.random.default_rng(6)
    scale_ok = oracle_ok = True
    for _ in range(200):
        n = int(rng.integers(2, 6))
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
        lo = rng.uniform(0, 0.5, (n, 2))
        sc = FrameScores(0, pairs, rng.integers(0, 3, n), rng.uniform(0.1, 1, n), np.hstack([lo, lo + 0.4]),
                         rng.uniform(0.05, 1, (len(pairs), 5)), rng.uniform(0.05, 1, len(pairs)))
        ref = [(t.subject, t.object, t.predicate) for t in apply_constraint(predict_frame(sc))]
        scaled = apply_constraint(predict_frame(sc, p0_override=rng.uniform(0.01, 1) * sc.p0))
        scale_ok &= [(t.subject, t.object, t.predicate) for t in scaled] == ref
        got = sorted(predict_frame(sc), key=lambda t: t.sort_key())
        brute = sorted((-(sc.confidence[i] * sc.confidence[j] * sc.predicate_probs[k, p] * sc.p0[k]), i, j, p)
                       for k, (i, j) in enumerate(pairs) for p in range(5))
        oracle_ok &= [(-t.score, t.subject, t.object, t.predicate) for t in got] == brute
    criterion(6, identical and scale_ok and oracle_ok,
              f"p0=1 byte-identical {identical}, scale-invariant {scale_ok}, product-sort oracle {oracle_ok}")


# --- 7 and 8. end-to-end benchmark ------------------------------------------------------


def _table(runs):
    lines = []
    for r in runs:
        gap = "" if r.p0_gap is None else f" gap {r.p0_gap:+.3f}"
        lines.append(f"  seed {r.seed} {r.variant:14s} R@10 {r.report.recall[10]:.3f} "
                     f"P@10 {r.report.precision[10]:.3f}{gap}")
    return "\n".join(lines)


def test_criterion_7_directional_result(criterion, benchmark):
    runs, secs = benchmark
    by = {(r.seed, r.variant): r for r in runs}
    wins = [s for s in SEEDS
            if by[s, "+rsnet+fusion"].report.recall[10] > by[s, "baseline"].report.recall[10]
            and by[s, "+rsnet+fusion"].report.precision[10] > by[s, "baseline"].report.precision[10]]
    pos = np.mean([by[s, "+rsnet+fusion"].mean_p0_positive for s in SEEDS])
    neg = np.mean([by[s, "+rsnet+fusion"].mean_p0_negative for s in SEEDS])
    print(_table(runs))
    ok = len(wins) >= 4 and pos - neg >= 0.2 and secs <= 15 * 60
    criterion(7, ok, f"R@10 and P@10 above baseline on {len(wins)}/5 seeds; mean p0 positive {pos:.3f} "
                     f"vs negative {neg:.3f} (gap {pos - neg:.3f}); benchmark {secs / 60:.1f} min")


def test_criterion_8_ablation_ordering(criterion, benchmark):
    runs, _ = benchmark
    m = {v: mean_metric(runs, v) for v in ABLATION_VARIANTS}
    ok = m["+rsnet+fusion"] >= m["mean-token"] >= m["no-temporal"] and m["+rsnet+fusion"] >= m["+rsnet"]
    criterion(8, ok, "mean R@10 learnable {:.3f}, mean-token {:.3f}, no-temporal {:.3f}; "
                     "fusion {:.3f} vs no-fusion {:.3f}".format(
                         m["+rsnet+fusion"], m["mean-token"], m["no-temporal"], m["+rsnet+fusion"], m["+rsnet"]))


# --- 9. determinism ---------------------------------------------------------------------


def test_criterion_9_replay_determinism(criterion, tmp_path):
    gen = tmp_path / "gen.cfg"
    gen.write_text("n_videos = 3\nn_frames = 3\nmin_objects = 4\nmax_objects = 6\nfeature_dim = 8\nunion_dim = 8\n")
    tr = tmp_path / "train.cfg"
    tr.write_text("epochs = 2\nd_p = 8\nd_model = 16\nheads = 2\nt_max = 8\n")
    data, run = tmp_path / "data", tmp_path / "run"
    ckpt = str(run / "checkpoint.npz")
    commands = {
        "gen-data": ["gen-data", "--config", str(gen), "--seed", "9", "--out", str(data)],
        "train": ["train", "--config", str(tr), "--data", str(data), "--seed", "9", "--out", str(run)],
        "eval": ["eval", "--data", str(data), "--checkpoint", ckpt, "--variant", "+rsnet+fusion",
                 "--save-predictions", "--out", str(tmp_path / "eval")],
        "score-dump": ["score-dump", "--data", str(data), "--checkpoint", ckpt, "--out", str(tmp_path / "dump")],
    }
    failed = []
    for name, argv in commands.items():
        out = argv[argv.index("--out") + 1]
        if main(argv + ["--threads", "1"]) != EXIT_OK:
            failed.append(f"{name} (run)")
            continue
        again = tmp_path / f"{name}_replay"
        code = main(["replay", f"{out}/manifest.json", "--out", str(again), "--threads", "1"])
        digests = lambda d: {p.name: sha256_file(p) for p in sorted(d.iterdir()) if p.name != "manifest.json"}
        if code != EXIT_OK or digests(tmp_path / out) != digests(again):
            failed.append(name)
    criterion(9, not failed, "bit-identical replays: " + (", ".join(commands) if not failed else f"FAILED {failed}"))
