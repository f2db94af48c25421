"""Command-line entry point: ``rsnet {gen-data,train,eval,score-dump,replay}``.

Every command writes into an output directory and finishes by writing
``manifest.json`` there (atomically). The manifest embeds the resolved
configs, seeds, package version, input/output SHA-256 digests and the wall
clock duration; ``rsnet replay MANIFEST`` re-runs the command from it and
checks every output digest.

Exit codes: 0 success, 2 usage, 3 config, 4 data, 5 numerical failure,
6 replay mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .config import ConfigKeyError, ConfigValueError, config_from_dict, config_to_dict, load_split_config
from .benchmark import p0_separation, relation_score_records
from .dsgg import MODES, VARIANTS, DSGGModel, UnknownVariantError, dump_predictions, load_predictions, predict_video
from .metrics import EvalConfig, MetricsReport, evaluate, evaluate_predictions, format_table
from .network import ModelConfig
from .numerics.checkpoint import FormatError, load_checkpoint, save_checkpoint
from .numerics.nn import ConfigError
from .numerics.tensor import NonFiniteError
from .optim import AdamW
from .scenegraph.generator import GeneratorConfig, derive_seed, generate_synthetic_video
from .scenegraph.io import load_dataset, save_dataset
from .scenegraph.types import PredicateVocabulary
from .training import TrainConfig, TrainingDiverged, train

log = logging.getLogger("rsnet")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5
EXIT_MISMATCH = 6

MANIFEST = "manifest.json"
MANIFEST_FORMAT = "rsnet-manifest"


class DataError(RuntimeError):
    pass


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    n_videos: int = 100
    prefix: str = "video"

    def validate(self) -> None:
        if self.n_videos < 0:
            raise ConfigError("n_videos must be >= 0")


# --------------------------------------------------------------------------
# helpers


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest_inputs(path) -> dict[str, str]:
    p = Path(path)
    if p.is_dir():
        return {str(f): sha256_file(f) for f in sorted(p.glob("*.npz"))}
    return {str(p): sha256_file(p)}


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_jsonl(path: Path, rows) -> None:
    _atomic_write_text(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def _load_videos(data_dir):
    if not Path(data_dir).is_dir():
        raise DataError(f"dataset directory {data_dir} does not exist")
    videos, gen_cfg = load_dataset(data_dir)
    return videos, gen_cfg


def _checkpoint_meta(model: DSGGModel, train_cfg: TrainConfig, epochs_done: int) -> dict:
    return {
        "variant": model.variant,
        "model": config_to_dict(model.config),
        "train": config_to_dict(train_cfg),
        "dims": list(model.dims),
        "vocab": model.vocab.to_dict(),
        "epochs_done": epochs_done,
    }


def save_model(path, model: DSGGModel, train_cfg: TrainConfig, epochs_done: int,
               optimizer: AdamW | None = None) -> None:
    state = model.state_dict()
    if optimizer is not None:
        state.update({f"optimizer/{k}": v for k, v in optimizer.state_dict().items()})
    save_checkpoint(path, state, _checkpoint_meta(model, train_cfg, epochs_done))


def load_model(path) -> tuple[DSGGModel, dict, dict]:
    """Rebuild the model a checkpoint was saved from; returns (model, meta,
    optimizer state)."""
    arrays, meta = load_checkpoint(path)
    try:
        d_v, d_u = meta["dims"]
        model = DSGGModel(d_v, d_u, PredicateVocabulary.from_dict(meta["vocab"]),
                          config_from_dict(meta["model"], ModelConfig), meta["variant"])
    except KeyError as exc:
        raise FormatError(f"{path}: checkpoint metadata lacks {exc}") from exc
    params = {k: v for k, v in arrays.items() if not k.startswith("optimizer/")}
    opt = {k[len("optimizer/"):]: v for k, v in arrays.items() if k.startswith("optimizer/")}
    model.load_state_dict(params)
    return model, meta, opt


def _parse_variants(text: str) -> list[str]:
    names = [v.strip() for v in text.split(",") if v.strip()]
    for v in names:
        if v not in VARIANTS:
            raise UsageError(str(UnknownVariantError(v)))
    return names


def _parse_ks(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(k) for k in text.split(",") if k.strip())
    except ValueError as exc:
        raise UsageError(f"--k expects comma-separated integers, got {text!r}") from exc


# --------------------------------------------------------------------------
# commands; each takes the resolved parameter dict stored in the manifest
# and returns the output files it wrote


def run_gen_data(params: dict) -> list[Path]:
    gen = config_from_dict(params["generator"], GeneratorConfig)
    ds = config_from_dict(params["dataset"], DatasetConfig)
    gen.validate()
    ds.validate()
    out = Path(params["out"])
    videos = [
        generate_synthetic_video(gen, derive_seed(params["seed"], i), video_id=f"{ds.prefix}_{i:05d}")
        for i in range(ds.n_videos)
    ]
    out.mkdir(parents=True, exist_ok=True)
    return save_dataset(out, videos, gen)


def run_train(params: dict) -> list[Path]:
    videos, gen_cfg = _load_videos(params["data"])
    if not videos:
        raise DataError(f"no videos found in {params['data']}")
    tcfg = config_from_dict({**params["train"], "seed": params["seed"]}, TrainConfig)
    tcfg.validate()
    mcfg = config_from_dict(params["model"], ModelConfig)
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)
    d_v, d_u = gen_cfg.feature_dim, gen_cfg.union_dim
    start = 0
    opt_state: dict = {}
    if params.get("init"):
        model, meta, opt_state = load_model(params["init"])
        if model.variant != tcfg.variant:
            raise ConfigError(f"--init checkpoint is variant {model.variant!r}, config says {tcfg.variant!r}")
        start = int(meta.get("epochs_done", 0))
    else:
        model = DSGGModel(d_v, d_u, videos[0].vocab, mcfg, tcfg.variant, seed=tcfg.seed)
    opt = AdamW(model.named_parameters(), tcfg.lr, (tcfg.beta1, tcfg.beta2), tcfg.adam_eps, tcfg.weight_decay)
    if opt_state:
        opt.load_state_dict(opt_state)
    try:
        result = train(videos, model, tcfg, optimizer=opt, start_epoch=start)
    except TrainingDiverged as exc:
        model.load_state_dict(exc.last_good_state)
        save_model(out / "last_good.npz", model, tcfg, start, None)
        raise
    ckpt = out / "checkpoint.npz"
    save_model(ckpt, model, tcfg, max(start, tcfg.epochs), opt)
    trace = out / "loss_trace.jsonl"
    _write_jsonl(trace, result.trace)
    return [ckpt, trace]


def _pick_checkpoint(variant: str, loaded: list[tuple[str, DSGGModel]]):
    """Exact variant match, else ``baseline`` on a ``+rsnet`` checkpoint (p0 = 1)."""
    for path, model in loaded:
        if model.variant == variant:
            return path, model, None, None
    if variant == "baseline":
        for path, model in loaded:
            if model.variant == "+rsnet":
                return path, model, False, False
    have = ", ".join(m.variant for _, m in loaded) or "none"
    raise ConfigError(f"no checkpoint compatible with variant {variant!r} (checkpoints: {have})")


def run_eval(params: dict) -> list[Path]:
    videos, _ = _load_videos(params["data"])
    if not videos:
        raise DataError(f"no videos found in {params['data']}")
    cfg = config_from_dict(params["eval"], EvalConfig)
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)
    reports: list[MetricsReport] = []
    written = []
    loaded = [(p, load_model(p)[0]) for p in params["checkpoints"]]
    for variant in params["variants"]:
        path, model, use_rsnet, use_fusion = _pick_checkpoint(variant, loaded)
        rep = evaluate(videos, model, cfg, use_rsnet, use_fusion, variant=variant)
        rep.extra["checkpoint"] = Path(path).name
        reports.append(rep)
        if params.get("save_predictions"):
            preds = out / f"predictions_{variant}.jsonl"
            rows = []
            for video in videos:
                for frame_preds in predict_video(video, model, cfg.mode, use_rsnet, use_fusion, cfg.person_centric):
                    rows.extend((video.video_id, tr) for tr in frame_preds)
            dump_predictions(preds, rows)
            written.append(preds)
    if params.get("predictions"):
        reports.append(evaluate_predictions(videos, load_predictions(params["predictions"]), cfg, "external"))
    for rep in reports:
        p = out / f"report_{rep.variant}.json"
        rep.save(p)
        written.append(p)
    if reports:
        table = out / "table.txt"
        _atomic_write_text(table, format_table(reports))
        written.append(table)
        print(format_table(reports), end="")
    return written


def run_score_dump(params: dict) -> list[Path]:
    videos, _ = _load_videos(params["data"])
    model, _, _ = load_model(params["checkpoint"])
    if model.rsnet is None:
        raise ConfigError(f"checkpoint variant {model.variant!r} has no relation scoring network")
    person_centric = params.get("person_centric", True)
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows = relation_score_records(videos, model, person_centric)
    scores = out / "scores.jsonl"
    _write_jsonl(scores, rows)
    mean_pos, mean_neg = p0_separation(rows)
    summary = {
        "records": len(rows),
        "positives": sum(r["label"] == "positive" for r in rows),
        "negatives": sum(r["label"] == "negative" for r in rows),
        "mean_p0_positive": mean_pos,
        "mean_p0_negative": mean_neg,
    }
    summary_path = out / "summary.json"
    _atomic_write_text(summary_path, json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return [scores, summary_path]


COMMANDS = {
    "gen-data": run_gen_data,
    "train": run_train,
    "eval": run_eval,
    "score-dump": run_score_dump,
}


def _input_paths(command: str, params: dict) -> list[str]:
    paths = [params["data"]] if "data" in params else []
    if params.get("init"):
        paths.append(params["init"])
    if params.get("checkpoint"):
        paths.append(params["checkpoint"])
    paths.extend(params.get("checkpoints", []))
    if params.get("predictions"):
        paths.append(params["predictions"])
    return paths


def execute(command: str, params: dict, threads: int = 1) -> dict:
    """Run one command and write its manifest; returns the manifest."""
    t0 = time.perf_counter()
    inputs = {}
    for p in _input_paths(command, params):
        if Path(p).exists():
            inputs.update(_digest_inputs(p))
    with threadpool_limits(limits=threads):
        outputs = COMMANDS[command](params)
    out = Path(params["out"])
    manifest = {
        "format": MANIFEST_FORMAT,
        "command": command,
        "params": params,
        "seed": params.get("seed"),
        "threads": threads,
        "version": __version__,
        "inputs": inputs,
        "outputs": {str(Path(p).relative_to(out)): sha256_file(p) for p in outputs},
        "wall_clock_seconds": round(time.perf_counter() - t0, 3),
    }
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(out / MANIFEST, json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def replay(manifest_path, out: str | None = None, threads: int = 1) -> tuple[dict, list[str]]:
    """Re-run a manifest (optionally into another directory); returns the new
    manifest and the outputs whose digests differ."""
    old = json.loads(Path(manifest_path).read_text())
    if old.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"{manifest_path}: not a run manifest")
    params = dict(old["params"])
    if out is not None:
        params["out"] = str(out)
    new = execute(old["command"], params, threads)
    bad = sorted(k for k in set(old["outputs"]) | set(new["outputs"])
                 if old["outputs"].get(k) != new["outputs"].get(k))
    return new, bad


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rsnet", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1, bit-reproducible)")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="master seed")

    p = sub.add_parser("gen-data", help="generate a synthetic video dataset")
    common(p)

    p = sub.add_parser("train", help="train one variant")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--variant", help=f"one of {', '.join(VARIANTS)} (overrides the config)")
    p.add_argument("--init", help="resume from this checkpoint")

    p = sub.add_parser("eval", help="evaluate checkpoints, one report per variant")
    common(p, seed=False)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", action="append", default=[], help="repeatable")
    p.add_argument("--variant", help="comma-separated variants (default: those of the checkpoints)")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--k", help="comma-separated k values, e.g. 10,20,50")
    p.add_argument("--predictions", help="also score an external prediction dump")
    p.add_argument("--save-predictions", action="store_true", help="write a prediction dump per variant")

    p = sub.add_parser("score-dump", help="dump relation scores of every candidate pair")
    common(p, seed=False)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("replay", help="re-run a manifest and verify its outputs")
    p.add_argument("manifest")
    p.add_argument("--out", help="write into this directory instead of the recorded one")
    p.add_argument("--threads", type=int, default=1)
    return ap


def resolve_params(args: argparse.Namespace) -> dict:
    """Turn parsed arguments into the self-contained parameter dict stored
    in the manifest (config files are inlined)."""
    cmd = args.command
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if cmd == "gen-data":
        gen, ds = load_split_config(args.config, GeneratorConfig, DatasetConfig)
        return {"generator": config_to_dict(config_from_dict(gen, GeneratorConfig)),
                "dataset": config_to_dict(config_from_dict(ds, DatasetConfig)),
                "seed": args.seed, "out": args.out}
    if cmd == "train":
        tr, model = load_split_config(args.config, TrainConfig, ModelConfig)
        if args.variant:
            _parse_variants(args.variant)
            tr["variant"] = args.variant
        tr["seed"] = args.seed
        return {"data": args.data, "train": config_to_dict(config_from_dict(tr, TrainConfig)),
                "model": config_to_dict(config_from_dict(model, ModelConfig)),
                "seed": args.seed, "init": args.init, "out": args.out}
    if cmd == "eval":
        (ev,) = load_split_config(args.config, EvalConfig)
        if args.mode:
            ev["mode"] = args.mode
        if args.k:
            ev["ks"] = _parse_ks(args.k)
        if not args.checkpoint and not args.predictions:
            raise UsageError("eval needs --checkpoint and/or --predictions")
        if args.variant:
            variants = _parse_variants(args.variant)
        else:
            variants = []
            for c in args.checkpoint:
                v = load_checkpoint(c)[1].get("variant")
                if v not in variants:
                    variants.append(v)
        return {"data": args.data, "checkpoints": list(args.checkpoint), "variants": variants,
                "eval": config_to_dict(config_from_dict(ev, EvalConfig)),
                "predictions": args.predictions, "save_predictions": bool(args.save_predictions),
                "out": args.out}
    if cmd == "score-dump":
        return {"data": args.data, "checkpoint": args.checkpoint, "out": args.out}
    raise UsageError(f"unknown command {cmd!r}")


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            _, bad = replay(args.manifest, args.out, args.threads)
            if bad:
                print(f"replay mismatch in: {', '.join(bad)}", file=sys.stderr)
                return EXIT_MISMATCH
            print("replay: all outputs bit-identical")
            return EXIT_OK
        execute(args.command, resolve_params(args), args.threads)
    except (UsageError, UnknownVariantError) as exc:
        ap.print_usage(sys.stderr)
        print(f"rsnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigKeyError, ConfigValueError, ConfigError) as exc:
        print(f"rsnet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, NonFiniteError) as exc:
        print(f"rsnet: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FormatError, FileNotFoundError) as exc:
        print(f"rsnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
