"""Command-line entry point: ``oamdetect <subcommand> [--config FILE] [--set KEY=VALUE ...]``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace

from . import experiment as ex
from .dataset import LabelScheme, Normalizer, draw_test_set, load, save
from .errors import DomainError, OamError, StageError
from .metrics import evaluate
from .util import atomic_write_text, write_json

log = logging.getLogger("oamdetect")


def _pairs(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise DomainError(f"override must look like KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v
    return out


def _config(args) -> ex.ExperimentConfig:
    overrides = _pairs(args.overrides)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "out", None):
        overrides["output_dir"] = args.out
    try:
        return ex.load_config(args.config, overrides)
    except (OamError, OSError) as exc:
        raise StageError("config", exc) from exc


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_dataset(args):
    cfg = _config(args)
    try:
        train, test = ex.build_datasets(cfg)
    except Exception as exc:  # noqa: BLE001
        raise StageError("dataset", exc) from exc
    ext = "." + args.format
    os.makedirs(cfg.output_dir, exist_ok=True)
    save(train, os.path.join(cfg.output_dir, "train" + ext))
    save(test, os.path.join(cfg.output_dir, "test" + ext))
    print(f"train: {len(train)} samples, test: {len(test)} samples -> {cfg.output_dir}")


def cmd_train(args):
    cfg = _config(args)
    try:
        train = load(args.train) if args.train else ex.build_datasets(
            replace(cfg, test_per_class=1))[0]
        if train.norm is None:
            train.norm = Normalizer.fit(train)
    except Exception as exc:  # noqa: BLE001
        raise StageError("dataset", exc) from exc
    try:
        det = ex.train_detector(args.classifier, cfg, train)
    except Exception as exc:  # noqa: BLE001
        raise StageError(f"train:{args.classifier}", exc) from exc
    path = args.model or os.path.join(cfg.output_dir, "models", f"{args.classifier}.json")
    write_json(path, {"scheme": train.scheme.to_dict(), "model": ex.detector_to_dict(det)})
    print(f"{det.name} trained on {len(train)} samples -> {path}")


def cmd_eval(args):
    cfg = _config(args)
    try:
        with open(args.model) as fh:
            blob = json.load(fh)
        scheme = LabelScheme.from_dict(blob["scheme"])
        det = ex.detector_from_dict(blob["model"], scheme)
    except (OSError, ValueError, KeyError) as exc:
        raise StageError("load", exc) from exc
    try:
        if args.test:
            test = load(args.test, scheme)
        else:
            test = draw_test_set(
                scheme, cfg.geometry(), (cfg.test_d_min, cfg.test_d_max),
                (math.radians(cfg.test_alpha_min_deg), math.radians(cfg.test_alpha_max_deg)),
                cfg.test_per_class, cfg.seed, cfg.snr_db, cfg.feature_kind, cfg.embed)
    except Exception as exc:  # noqa: BLE001
        raise StageError("dataset", exc) from exc
    try:
        rep = evaluate(det, test, det.name)
    except Exception as exc:  # noqa: BLE001
        raise StageError(f"eval:{det.name.lower()}", exc) from exc
    if args.report:
        write_json(args.report, rep.to_dict())
    print(f"{rep.method}: accuracy {100 * rep.accuracy:.2f}% on {rep.n_samples} samples "
          f"({rep.test_time:.3f}s)")


def cmd_experiment(args):
    cfg = _config(args)
    res = ex.run_experiment(cfg, write=True, log=log.info)
    for name, rep in res["reports"].items():
        print(f"{rep.method}: accuracy {100 * rep.accuracy:.2f}%")
    print(f"artifacts in {cfg.output_dir}")


def cmd_sweep(args):
    cfg = _config(args)
    if args.values:
        values = _floats(args.values)
    else:
        if args.step <= 0:
            raise DomainError("--step must be positive")
        count = int(math.floor((args.stop - args.start) / args.step + 1e-9)) + 1
        values = [args.start + i * args.step for i in range(max(count, 0))]
    try:
        rows = ex.sweep(cfg, args.axis, values, n_per_class=args.per_class)
    except OamError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise StageError("sweep", exc) from exc
    path = args.csv or os.path.join(cfg.output_dir, f"sweep_{args.axis}.csv")
    atomic_write_text(path, ex.sweep_csv(rows))
    print(f"{len(rows)} rows -> {path}")


def cmd_phasefield(args):
    cfg = _config(args)
    modes = [int(m) for m in args.modes.split(",")]
    parts = []
    for k, a in enumerate(_floats(args.alpha)):
        text = ex.phase_field_csv(ex.phase_field(cfg, modes, a, args.distance, args.extent, args.points), a)
        parts.append(text if k == 0 else text.split("\n", 1)[1])
    path = args.csv or os.path.join(cfg.output_dir, "phase_field.csv")
    atomic_write_text(path, "".join(parts))
    print(f"phase field -> {path}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("--set", nargs="+", action="extend", default=[], dest="overrides",
                        metavar="KEY=VALUE",
                        help="configuration overrides, e.g. --set scenario=multi-mode r_rx=2")

    p = argparse.ArgumentParser(prog="oamdetect", description="OAM mode detection under misalignment")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("dataset", parents=[common], help="write training grid and test set")
    s.add_argument("--out", help="output directory")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.set_defaults(func=cmd_dataset)

    s = sub.add_parser("train", parents=[common], help="train one classifier")
    s.add_argument("classifier", choices=ex.CLASSIFIERS)
    s.add_argument("--train", help="training set file (default: build from config)")
    s.add_argument("--model", help="where to write the model JSON")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="evaluate a saved model")
    s.add_argument("model", help="model JSON written by 'train'")
    s.add_argument("--test", help="test set file (default: draw from config)")
    s.add_argument("--report", help="write the evaluation report JSON here")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("experiment", parents=[common], help="full train/evaluate run")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("sweep", parents=[common], help="accuracy along one axis")
    s.add_argument("--axis", choices=ex.SWEEP_AXES, required=True)
    s.add_argument("--values", help="comma-separated axis values")
    s.add_argument("--start", type=float, default=0.0)
    s.add_argument("--stop", type=float, default=30.0)
    s.add_argument("--step", type=float, default=2.0)
    s.add_argument("--per-class", type=int, default=None, dest="per_class")
    s.add_argument("--csv", help="output CSV path")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("phasefield", parents=[common], help="receive-plane phase map")
    s.add_argument("--modes", default="2")
    s.add_argument("--alpha", default="0,5", help="comma-separated tilt angles in degrees")
    s.add_argument("--distance", type=float, default=300.0)
    s.add_argument("--extent", type=float, default=30.0)
    s.add_argument("--points", type=int, default=101)
    s.add_argument("--csv", help="output CSV path")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_phasefield)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OamError, OSError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
