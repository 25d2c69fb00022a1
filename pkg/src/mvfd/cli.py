"""Command-line entry point: ``mvfd <subcommand> ...``.

Configuration is layered: built-in defaults, then ``--config`` JSON, then the
``MVFD_SEED`` environment variable, then explicit flags.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import subprocess
import sys
import time
from dataclasses import asdict
from pathlib import Path


from . import __version__
from .analysis import (
    ablation_suite,
    ablation_to_json,
    compute_heatmap,
    grid_sweep,
    write_ablation_csv,
    write_heatmap_csv,
    write_heatmap_pgm,
)
from .data import CorruptionSpec, from_csv, from_mat, load_dataset, save_dataset, simulate_incompleteness
from .errors import TrainingDiverged, ValidationError
from .metrics import FIELDS, MetricsReport, evaluate, summarize
from .model import load_checkpoint, save_checkpoint
from .train import TrainConfig, predict, train_one_stage, train_stage1, train_stage2

log = logging.getLogger("mvfd")

CONFIG_SCHEMA = "mvfd-config/1"
EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --------------------------------------------------------------------- config


def default_config() -> dict:
    return {"schema": CONFIG_SCHEMA, "train": TrainConfig().to_dict(), "corruption": asdict(CorruptionSpec())}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


_TRAIN_FLAGS = {
    "seed": ("seed",),
    "lr": ("lr",),
    "epochs1": ("epochs_stage1",),
    "epochs2": ("epochs_stage2",),
    "batch_size": ("batch_size",),
    "embed_dim": ("embed_dim",),
    "delta": ("mask_ratio",),
    "dtype": ("dtype",),
    "alpha": ("weights", "alpha"),
    "beta": ("weights", "beta"),
    "gamma": ("weights", "gamma"),
    "lam": ("weights", "lam"),
    "tau": ("weights", "tau"),
}


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = default_config()
    if getattr(args, "config", None):
        try:
            user = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {args.config} is not valid JSON: {exc}") from exc
        schema = user.get("schema", CONFIG_SCHEMA)
        if schema != CONFIG_SCHEMA:
            raise ValidationError(f"unsupported config schema {schema!r}")
        unknown = set(user) - {"schema", "train", "corruption"}
        if unknown:
            raise ValidationError(f"unknown config sections: {sorted(unknown)}")
        cfg = _merge(cfg, user)
    env_seed = os.environ.get("MVFD_SEED")
    if env_seed is not None:
        try:
            cfg["train"]["seed"] = int(env_seed)
        except ValueError as exc:
            raise ValidationError(f"MVFD_SEED must be an integer, got {env_seed!r}") from exc
    for flag, path in _TRAIN_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            target = cfg["train"]
            for key in path[:-1]:
                target = target[key]
            target[path[-1]] = value
    if getattr(args, "hidden", None):
        cfg["train"]["hidden"] = [int(h) for h in args.hidden.split(",")]
    for term in ("cp", "sc", "rec", "gd"):
        if getattr(args, f"no_{term}", False):
            cfg["train"][f"use_{term}"] = False
    for flag, key in (
        ("view_missing", "view_missing_rate"),
        ("label_missing", "label_missing_rate"),
        ("train_fraction", "train_fraction"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            cfg["corruption"][key] = value
    if getattr(args, "split_seed", None) is not None:
        cfg["corruption"]["seed"] = args.split_seed
    # validate eagerly so bad configs fail before any work
    TrainConfig.from_dict(cfg["train"]).validate()
    CorruptionSpec(**cfg["corruption"]).validate()
    return cfg


# ------------------------------------------------------------------- manifest


def fingerprint(path: str | Path) -> str:
    path = Path(path)
    h = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for p in files:
        h.update(p.name.encode())
        with open(p, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def _artifact_version() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


class RunManifest:
    def __init__(self, path: Path, command: str, config: dict | None, inputs: dict, outputs: list[str]):
        self.path = path
        self.record = {
            "command": command,
            "argv": sys.argv[1:],
            "version": _artifact_version(),
            "config": config,
            "seeds": {
                "train": (config or {}).get("train", {}).get("seed"),
                "corruption": (config or {}).get("corruption", {}).get("seed"),
            },
            "inputs": {k: {"path": str(v), "sha256": fingerprint(v)} for k, v in inputs.items()},
            "outputs": outputs,
            "started": time.time(),
            "finished": None,
            "status": "running",
        }
        self._write()

    def _write(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.record, indent=2))
        os.replace(tmp, self.path)

    def finish(self, status: str = "ok", **extra) -> None:
        self.record.update(finished=time.time(), status=status, **extra)
        self.record["elapsed"] = self.record["finished"] - self.record["started"]
        self._write()


# -------------------------------------------------------------------- parsing


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    g = p.add_argument_group("training overrides")
    g.add_argument("--seed", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--epochs1", type=int, help="stage-1 epochs")
    g.add_argument("--epochs2", type=int, help="stage-2 epochs")
    g.add_argument("--batch-size", type=int)
    g.add_argument("--embed-dim", type=int)
    g.add_argument("--hidden", help="comma-separated hidden widths, e.g. 1024")
    g.add_argument("--delta", type=float, help="feature mask ratio")
    g.add_argument("--dtype", choices=["float32", "float64"])
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--tau", type=float)
    for term in ("cp", "sc", "rec", "gd"):
        g.add_argument(f"--no-{term}", action="store_true", help=f"disable the {term} loss")


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _axis(text: str) -> tuple[str, list[float]]:
    if "=" not in text:
        raise argparse.ArgumentTypeError("axis must look like name=v1,v2,...")
    name, values = text.split("=", 1)
    try:
        return name.strip(), [float(v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvfd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="import CSV or MATLAB data into the canonical format")
    p.add_argument("--csv-views", nargs="+", help="one CSV per view (rows = samples)")
    p.add_argument("--csv-labels", help="label CSV (0/1 or -1/1)")
    p.add_argument("--mat", help="MATLAB file with an 'X' cell array and a label matrix")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="drop views/labels and split into train/test")
    p.add_argument("--data", required=True, help="complete dataset directory")
    p.add_argument("--out", required=True, help="directory receiving train/ and test/")
    p.add_argument("--config")
    p.add_argument("--print-config", action="store_true")
    p.add_argument("--view-missing", type=float)
    p.add_argument("--label-missing", type=float)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--split-seed", type=int)

    p = sub.add_parser("train", help="train MVFD")
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--stage", choices=["1", "2", "both", "one"], default="both")
    p.add_argument("--init", help="stage-1 checkpoint (required for --stage 2)")
    p.add_argument("--checkpoint-epochs", type=_int_list, default=[], help="stage-2 epochs to snapshot")
    _add_train_flags(p)

    p = sub.add_parser("eval", help="evaluate checkpoints on a dataset")
    p.add_argument("--checkpoint", required=True, nargs="+", help="one checkpoint per seed")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="JSON report path")

    p = sub.add_parser("grid", help="two-axis hyperparameter sweep")
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--test", required=True, help="evaluation dataset directory")
    p.add_argument("--axis1", required=True, type=_axis, help="e.g. alpha=0.05,0.1,0.5")
    p.add_argument("--axis2", required=True, type=_axis, help="e.g. beta=0.05,0.1,0.5")
    p.add_argument("--metric", default="AP", choices=list(FIELDS))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    _add_train_flags(p)

    p = sub.add_parser("ablate", help="loss-term ablation table")
    p.add_argument("--data", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    _add_train_flags(p)

    p = sub.add_parser("heatmap", help="similarity heat map for one sample")
    p.add_argument("--checkpoint", required=True, help="checkpoint file, or a training output directory")
    p.add_argument("--data", required=True)
    p.add_argument("--sample", type=int, required=True)
    p.add_argument("--epoch", type=int, help="stage-2 epoch snapshot to read from a training directory")
    p.add_argument("--out", required=True, help="output prefix (.csv and .pgm are appended)")
    return parser


# ------------------------------------------------------------------ commands


def cmd_convert(args) -> int:
    if args.mat and args.csv_views:
        raise ValidationError("give either --mat or --csv-views/--csv-labels, not both")
    if args.mat:
        ds = from_mat(args.mat, standardize=args.standardize)
        inputs = {"mat": args.mat}
    elif args.csv_views and args.csv_labels:
        ds = from_csv(args.csv_views, args.csv_labels, standardize=args.standardize)
        inputs = {"labels": args.csv_labels, **{f"view{i}": p for i, p in enumerate(args.csv_views)}}
    else:
        raise ValidationError("convert needs --mat, or --csv-views together with --csv-labels")
    out = Path(args.out)
    manifest = RunManifest(out.parent / f"{out.name}.run_manifest.json", "convert", None, inputs, [str(out)])
    save_dataset(ds, out)
    manifest.finish(n=ds.n, m=ds.m, c=ds.c)
    print(json.dumps(ds.meta))
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    if args.print_config:
        print(json.dumps(cfg, indent=2))
        return EXIT_OK
    out = Path(args.out)
    manifest = RunManifest(
        out / "run_manifest.json", "simulate", cfg, {"data": args.data}, [str(out / "train"), str(out / "test")]
    )
    train_ds, test_ds = simulate_incompleteness(load_dataset(args.data), CorruptionSpec(**cfg["corruption"]))
    save_dataset(train_ds, out / "train")
    save_dataset(test_ds, out / "test")
    manifest.finish(n_train=train_ds.n, n_test=test_ds.n)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    if args.print_config:
        print(json.dumps(cfg, indent=2))
        return EXIT_OK
    if args.stage == "2" and not args.init:
        raise ValidationError("--stage 2 requires --init <stage-1 checkpoint>")
    tc = TrainConfig.from_dict(cfg["train"])
    out = Path(args.out)
    outputs = {
        "1": ["stage1.ckpt"],
        "2": ["stage2.ckpt"],
        "both": ["stage1.ckpt", "stage2.ckpt"],
        "one": ["one_stage.ckpt"],
    }[args.stage]
    outputs += ["train_log.jsonl", "history.json"]
    outputs += [f"stage2_epoch{e}.ckpt" for e in args.checkpoint_epochs]
    inputs = {"data": args.data, **({"init": args.init} if args.init else {})}
    manifest = RunManifest(out / "run_manifest.json", "train", cfg, inputs, [str(out / o) for o in outputs])
    ds = load_dataset(args.data)
    log_path = out / "train_log.jsonl"
    log_path.unlink(missing_ok=True)
    history: list[dict] = []
    meta = {"config": cfg["train"], "seed": tc.seed}

    def snapshot(net, epoch, summary):
        if epoch in args.checkpoint_epochs:
            save_checkpoint(net, out / f"stage2_epoch{epoch}.ckpt", stage="stage2", epoch=epoch, **meta)

    if args.stage == "one":
        net, h = train_one_stage(ds, tc, log_path)
        history += h
        save_checkpoint(net, out / "one_stage.ckpt", stage="one_stage", epoch=len(h), **meta)
    else:
        if args.stage in ("1", "both"):
            net, h = train_stage1(ds, tc, log_path)
            history += h
            save_checkpoint(net, out / "stage1.ckpt", stage="stage1", epoch=len(h), **meta)
        else:
            net, _ = load_checkpoint(args.init)
        if args.stage in ("2", "both"):
            if 0 in args.checkpoint_epochs:
                snapshot(net, 0, {})
            net, h = train_stage2(ds, net, tc, log_path, epoch_hook=snapshot)
            history += h
            save_checkpoint(net, out / "stage2.ckpt", stage="stage2", epoch=len(h), **meta)
    (out / "history.json").write_text(json.dumps(history, indent=2))
    manifest.finish()
    return EXIT_OK


def cmd_eval(args) -> int:
    out = Path(args.out)
    inputs = {"data": args.data, **{f"checkpoint{i}": c for i, c in enumerate(args.checkpoint)}}
    manifest = RunManifest(out.with_name(out.name + ".manifest.json"), "eval", None, inputs, [str(out)])
    ds = load_dataset(args.data)
    runs = []
    for ckpt in args.checkpoint:
        net, meta = load_checkpoint(ckpt)
        report = evaluate(predict(net, ds), ds.labels)
        runs.append({"checkpoint": ckpt, "seed": meta.get("seed"), **report.as_dict()})
    reports = [MetricsReport(**{f: r[f] for f in FIELDS}) for r in runs]
    stats = summarize(reports)
    result = {**stats["mean"], "per_seed": runs, "mean": stats["mean"], "std": stats["std"]}
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(result, indent=2))
    manifest.finish()
    return EXIT_OK


def cmd_grid(args) -> int:
    cfg = resolve_config(args)
    if args.print_config:
        print(json.dumps(cfg, indent=2))
        return EXIT_OK
    out = Path(args.out)
    manifest = RunManifest(
        out / "run_manifest.json",
        "grid",
        cfg,
        {"data": args.data, "test": args.test},
        [str(out / "grid.csv"), str(out / "grid.json")],
    )
    result = grid_sweep(
        load_dataset(args.data),
        load_dataset(args.test),
        TrainConfig.from_dict(cfg["train"]),
        args.axis1,
        args.axis2,
        workers=args.workers,
    )
    result.write_csv(out / "grid.csv", args.metric)
    (out / "grid.json").write_text(json.dumps(result.to_json(), indent=2))
    manifest.finish()
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    if args.print_config:
        print(json.dumps(cfg, indent=2))
        return EXIT_OK
    out = Path(args.out)
    manifest = RunManifest(
        out / "run_manifest.json",
        "ablate",
        cfg,
        {"data": args.data, "test": args.test},
        [str(out / "ablation.csv"), str(out / "ablation.json")],
    )
    rows = ablation_suite(
        load_dataset(args.data),
        load_dataset(args.test),
        TrainConfig.from_dict(cfg["train"]),
        seeds=args.seeds,
        workers=args.workers,
    )
    write_ablation_csv(rows, out / "ablation.csv")
    (out / "ablation.json").write_text(json.dumps(ablation_to_json(rows), indent=2))
    manifest.finish()
    return EXIT_OK


def cmd_heatmap(args) -> int:
    ckpt = Path(args.checkpoint)
    if ckpt.is_dir():
        name = f"stage2_epoch{args.epoch}.ckpt" if args.epoch is not None else "stage2.ckpt"
        ckpt = ckpt / name
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint {ckpt} not found")
    prefix = Path(args.out)
    outputs = [str(prefix) + ".csv", str(prefix) + ".pgm"]
    manifest = RunManifest(
        Path(str(prefix) + ".manifest.json"), "heatmap", None, {"checkpoint": ckpt, "data": args.data}, outputs
    )
    net, _ = load_checkpoint(ckpt)
    hm = compute_heatmap(net, load_dataset(args.data), args.sample)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_heatmap_csv(hm, outputs[0])
    write_heatmap_pgm(hm, outputs[1])
    manifest.finish()
    return EXIT_OK


COMMANDS = {
    "convert": cmd_convert,
    "simulate": cmd_simulate,
    "train": cmd_train,
    "eval": cmd_eval,
    "grid": cmd_grid,
    "ablate": cmd_ablate,
    "heatmap": cmd_heatmap,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"mvfd {args.command}: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, TrainingDiverged, RuntimeError) as exc:
        print(f"mvfd {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
