"""Command-line entry point: ``gift <subcommand> ...``.

Settings come from an optional flat ``key = value`` config file (``#``
starts a comment) and are overridden by flags. Exit status is 0 on
success, 1 on runtime failure and 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path


from . import __version__
from .annotation import parse_clip, validate_clip, dataset_stats, derive_velocities, ValidationReport, Finding
from .dataset import MANIFEST_NAME, load_split
from .errors import ConfigError, GiftError
from .evaluation import MatchConfig, evaluate, predictions_table
from .model import TrainConfig, load_checkpoint, save_checkpoint, train, forecast_occurrence
from .synth import SynthConfig, generate_dataset

SYNTH_KEYS = {"seed", "n_clips", "T", "fps", "occurrence_min", "occurrence_max", "difficulty"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
MATCH_KEYS = {"delta"}
CONFIG_KEYS = SYNTH_KEYS | TRAIN_KEYS | MATCH_KEYS

# flag dest -> config key
FLAG_KEYS = {
    "seed": "seed", "tau": "tau", "epochs": "epochs", "lr": "learning_rate",
    "weight_decay": "weight_decay", "embed_dim": "embed_dim", "delta": "delta",
    "threshold": "threshold", "n_clips": "n_clips", "difficulty": "difficulty", "T": "T",
}


class UsageError(Exception):
    pass


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; unknown keys are rejected."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            out[key] = value
    return out


def resolve_config(args) -> dict:
    settings = read_config(args.config) if getattr(args, "config", None) else {}
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            settings[key] = value
    return settings


def synth_config(settings: dict) -> SynthConfig:
    kw = {k: settings[k] for k in ("seed", "n_clips", "T", "fps", "difficulty") if k in settings}
    if "occurrence_min" in settings or "occurrence_max" in settings:
        lo, hi = SynthConfig.occurrence_range
        kw["occurrence_range"] = (settings.get("occurrence_min", lo), settings.get("occurrence_max", hi))
    return SynthConfig(**kw)


def train_config(settings: dict) -> TrainConfig:
    return TrainConfig.from_dict({k: v for k, v in settings.items() if k in TRAIN_KEYS})


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GIFT_THREADS", "1")))
    except ValueError:
        raise ConfigError("GIFT_THREADS must be an integer") from None


def _pmap(fn, items):
    n = _threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _emit(text: str, out: str | None, name: str):
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if path.suffix == "":
        path.mkdir(parents=True, exist_ok=True)
        path = path / name
    path.write_text(text)


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    if args.out is None:
        raise UsageError("synth needs --out")
    manifest = generate_dataset(synth_config(resolve_config(args)), args.out)
    print(f"wrote {len(manifest.clips)} clips to {args.out} (manifest {manifest.digest()[:12]})")
    return 0


def _clip_files(directory) -> list:
    d = _require_file(directory, "dataset directory")
    return sorted(p for p in d.glob("*.json") if p.name != MANIFEST_NAME)


def cmd_validate(args) -> int:
    reports = []
    for path in _clip_files(args.data):
        try:
            reports.append(validate_clip(parse_clip(path.read_bytes(), strict=not args.lenient)).to_dict())
        except GiftError as exc:
            bad = ValidationReport(path.name, [Finding(type(exc).__name__, str(exc))])
            reports.append(bad.to_dict())
    doc = {"n_files": len(reports), "n_invalid": sum(not r["ok"] for r in reports), "reports": reports}
    _emit(json.dumps(doc, sort_keys=True, indent=1) + "\n", args.out, "validation.json")
    return 0 if doc["n_invalid"] == 0 else 1


def cmd_stats(args) -> int:
    clips = [parse_clip(p.read_bytes()) for p in _clip_files(args.data)]
    _emit(json.dumps(dataset_stats(clips).to_dict(), sort_keys=True, indent=1) + "\n", args.out, "stats.json")
    return 0


def cmd_train(args) -> int:
    if args.out is None:
        raise UsageError("train needs --out")
    cfg = train_config(resolve_config(args))
    _require_file(Path(args.data) / MANIFEST_NAME, "manifest")
    tr = [derive_velocities(c) for c in load_split(args.data, "train")]
    va = [derive_velocities(c) for c in load_split(args.data, "val")]
    model, history = train(tr, va, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, args.checkpoint or out / "checkpoint.json")
    (out / "history.csv").write_text(history.to_csv())
    (out / "history.json").write_text(history.to_json())
    print(f"trained {cfg.epochs} epochs, best epoch {history.best_epoch}")
    return 0


def _load_model(args):
    if args.checkpoint is None:
        raise UsageError("--checkpoint is required")
    return load_checkpoint(_require_file(args.checkpoint, "checkpoint"))


def cmd_forecast(args) -> int:
    model = _load_model(args)
    clip = derive_velocities(parse_clip(_require_file(args.clip, "clip").read_bytes()))
    settings = resolve_config(args)
    pred = forecast_occurrence(model, clip, settings.get("tau"), settings.get("threshold"))
    _emit(json.dumps(pred.to_dict(), sort_keys=True) + "\n", args.out, "forecast.json")
    return 0


def _test_clips(args):
    _require_file(Path(args.data) / MANIFEST_NAME, "manifest")
    return [derive_velocities(c) for c in load_split(args.data, args.split)]


def cmd_eval(args) -> int:
    model = _load_model(args)
    settings = resolve_config(args)
    clips = _test_clips(args)
    predictor = model.predictor(settings.get("tau"), settings.get("threshold"))
    cache = dict(zip((c.clip_id for c in clips), _pmap(predictor, clips)))
    report = evaluate(lambda c: cache[c.clip_id], clips, match=MatchConfig(settings.get("delta", 0)))
    if args.out is None:
        sys.stdout.write(report.to_json())
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json())
        (out / "report.csv").write_text(report.to_csv())
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    results = run_suite(seed=resolve_config(args).get("seed", 0))
    for name, err in results.items():
        print(f"{name:<28s} max rel err {err:.3e}")
    worst = max(results.values())
    print(f"max rel err {worst:.3e}")
    return 0 if worst < 1e-4 else 1


def cmd_plot_data(args) -> int:
    if args.out is None:
        raise UsageError("plot-data needs --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.history:
        doc = json.loads(_require_file(args.history, "history").read_text())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = sorted(doc["epochs"][0]["train"]) if doc["epochs"] else []
        w.writerow(["epoch"] + [f"train_{k}" for k in keys] + [f"val_{k}" for k in keys])
        for row in doc["epochs"]:
            w.writerow([row["epoch"]] + [repr(row["train"][k]) for k in keys] + [repr(row["val"][k]) for k in keys])
        (out / "loss_curve.csv").write_text(buf.getvalue())
    if args.checkpoint:
        model = _load_model(args)
        settings = resolve_config(args)
        rows = predictions_table(model.predictor(settings.get("tau"), settings.get("threshold")), _test_clips(args))
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["clip_id", "predicted", "truth", "abs_error", "crossed"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        (out / "clip_errors.csv").write_text(buf.getvalue())
    if not args.history and not args.checkpoint:
        raise UsageError("plot-data needs --history and/or --checkpoint")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gift", description="Group intention forecasting toolkit.")
    parser.add_argument("--version", action="version", version=f"gift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, data=False, checkpoint=False):
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output file or directory (default: stdout where sensible)")
        if data:
            p.add_argument("data", help="dataset directory")
        if checkpoint:
            p.add_argument("--checkpoint")
        return p

    def model_flags(p):
        p.add_argument("--tau", type=int)
        p.add_argument("--threshold", type=float)
        return p

    p = common(sub.add_parser("synth", help="generate a synthetic dataset"))
    p.add_argument("--n-clips", dest="n_clips", type=int)
    p.add_argument("--difficulty", choices=("easy", "hard"))
    p.add_argument("-T", dest="T", type=int, help="frames per clip")
    p.set_defaults(func=cmd_synth)

    p = common(sub.add_parser("validate", help="check every clip file in a directory"), data=True)
    p.add_argument("--lenient", action="store_true", help="ignore unknown JSON fields")
    p.set_defaults(func=cmd_validate)

    common(sub.add_parser("stats", help="dataset statistics"), data=True).set_defaults(func=cmd_stats)

    p = model_flags(common(sub.add_parser("train", help="train a model"), data=True, checkpoint=True))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.set_defaults(func=cmd_train)

    p = model_flags(common(sub.add_parser("forecast", help="forecast one clip"), checkpoint=True))
    p.add_argument("clip", help="clip JSON file")
    p.set_defaults(func=cmd_forecast)

    p = model_flags(common(sub.add_parser("eval", help="score a checkpoint on a split"), data=True, checkpoint=True))
    p.add_argument("--delta", type=int)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_eval)

    common(sub.add_parser("gradcheck", help="finite-difference gradient checks")).set_defaults(func=cmd_gradcheck)

    p = model_flags(common(sub.add_parser("plot-data", help="CSV series for external plotting"),
                           data=True, checkpoint=True))
    p.add_argument("--history", help="history.json written by train")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"gift {args.command}: {exc}", file=sys.stderr)
        return 2
    except (GiftError, OSError, ValueError, KeyError) as exc:
        print(f"gift {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
