"""Command-line front end.

    logitcal synth   -o bench.csv
    logitcal fit     bench.csv --bins 22 -o model.json
    logitcal score   bench.csv --model model.json --method ml --preset rgb -o scored.csv
    logitcal eval    scored.csv -o report/
    logitcal sweep   bench.csv --lambdas 1e-6,1e-3 --bins-list 20,22 -o sweep.csv
    logitcal upsample --cloud 000000.bin --calib 000000.txt -o rav.pgm

Errors and warnings go to stderr as one JSON object per line; the exit
status is 0 only when no error was reported.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings

import numpy as np

from . import __version__
from .datamodel import (DatasetSplit, DumpError, ScoringConfig, TrainingRecord, read_dump,
                        validate_split, write_dump, fmt_float)
from .density import DensityModel, FitError, fit_model
from .lidarmaps import (CHANNELS, MAP_FORMATS, bilateral_upsample, project, read_kitti_calib,
                        read_velodyne_bin, write_map)
from .metrics import evaluate, sweep, tiers_present
from .presets import BUILTIN_PRESETS, get_preset, load_presets
from .scoring import ScoredDetection, UndefinedScoreError, fit_temperature, score_records
from .synth import SyntheticSpec, generate


class CliError(Exception):
    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


def _emit(level, kind, message):
    print(json.dumps({"level": level, "kind": kind, "message": str(message)}), file=sys.stderr)


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _training_records(dump):
    if dump.splits is not None:
        return dump.to_split().train
    return [TrainingRecord.from_detection(r) for r in dump.records if r.match.is_tp]


# --------------------------------------------------------------------------
# subcommands


def cmd_fit(args):
    dump = read_dump(args.dump, args.format)
    bins = args.bins
    if bins is None:
        bins = get_preset(args.preset, args.config).config(args.method).bins if args.preset else 22
    train = _training_records(dump)
    split = DatasetSplit(train, [], [])
    for d in validate_split(split, bins):
        if d.level == "warning":
            _emit("warning", "SparseClass", d.message)
    model = fit_model(train, bins, K=dump.K, normalize=args.normalize)
    model.save(args.output)


def _resolve_config(args, method):
    if args.preset:
        cfg = get_preset(args.preset, args.config).config(method, not args.no_objectness)
    else:
        cfg = ScoringConfig(method=method, use_objectness=not args.no_objectness)
    overrides = {}
    if args.smoothing is not None:
        overrides["smoothing"] = args.smoothing
    if args.bins is not None:
        overrides["bins"] = args.bins
    if args.temperature is not None:
        overrides["temperature"] = args.temperature
    if args.prior is not None:
        overrides["prior"] = args.prior
    if overrides:
        cfg = ScoringConfig(**{**cfg.__dict__, **overrides})
    return cfg


def cmd_score(args):
    dump = read_dump(args.dump, args.format)
    model = DensityModel.load(args.model) if args.model else None
    train = None
    if args.train:
        train = _training_records(read_dump(args.train))
    extras = dict(dump.extras)
    for method in args.method or ["ml"]:
        cfg = _resolve_config(args, method)
        m = None
        if cfg.method in ("ML", "MAP"):
            if train is not None:
                m = fit_model(train, cfg.bins, K=dump.K)
            elif model is not None:
                m = model
                if m.bins != cfg.bins:
                    _emit("warning", "BinsMismatch",
                          f"model has {m.bins} bins but {cfg.method} config asks for {cfg.bins}")
            else:
                raise CliError("MissingModel", f"method {cfg.method} needs --model or --train")
        scored = score_records(dump.records, m, cfg)
        key = cfg.method.lower()
        extras[f"score_{key}"] = [fmt_float(s.confidence) for s in scored]
        extras[f"pred_class_{key}"] = [str(s.predicted_class) for s in scored]
    write_dump(dump.records, args.output, args.out_format or args.format, K=dump.K,
               splits=dump.splits, extras=extras)


def _scored_from_dump(dump, method, rows):
    scores = dump.extras[f"score_{method}"]
    preds = dump.extras[f"pred_class_{method}"]
    return [ScoredDetection(dump.records[i], np.empty(0), int(preds[i]), float(scores[i]))
            for i in rows]


def cmd_eval(args):
    dump = read_dump(args.dump, args.format)
    methods = sorted(k[len("score_"):] for k in dump.extras if k.startswith("score_"))
    if not methods:
        raise CliError("MissingScores", f"{args.dump} has no score_<method> columns; run 'score' first")
    for m in methods:
        if f"pred_class_{m}" not in dump.extras:
            raise CliError("MissingScores", f"score_{m} without pred_class_{m}")
    if dump.splits is not None and args.split != "all":
        rows = [i for i, s in enumerate(dump.splits) if s == args.split]
    else:
        rows = list(range(len(dump.records)))
    if not rows:
        raise CliError("EmptyDump", "no detections to evaluate")
    os.makedirs(args.output, exist_ok=True)
    tiers = tiers_present([dump.records[i] for i in rows])
    reports = [evaluate(_scored_from_dump(dump, m, rows), m, dump.K, args.ece_bins, tiers)
               for m in methods]

    def table(name, header, body):
        with open(os.path.join(args.output, name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(body)

    table("ece.csv", ["method", "ece", "n", "ece_bins"],
          [[r.method, fmt_float(r.ece), len(rows), args.ece_bins] for r in reports])
    table("auc.csv", ["method", "class", "difficulty", "auc", "auc_pct", "n_positive", "diagnostic"],
          [[r.method, c.class_index, c.difficulty, fmt_float(c.auc), f"{100 * c.auc:.2f}",
            c.n_positive, c.diagnostic or ""] for r in reports for c in r.curves])
    table("pr_curves.csv", ["method", "class", "difficulty", "recall", "precision"],
          [[r.method, c.class_index, c.difficulty, fmt_float(x), fmt_float(y)]
           for r in reports for c in r.curves for x, y in c.points])
    table("score_stats.csv", ["method", "population", "count", "mean", "variance"],
          [[r.method, s.population, s.count, fmt_float(s.mean), fmt_float(s.variance)]
           for r in reports for s in r.stats.values()])
    table("reliability.csv", ["method", "bin", "low", "high", "count", "accuracy", "confidence"],
          [[r.method, b.index, fmt_float(b.low), fmt_float(b.high), b.count,
            fmt_float(b.accuracy), fmt_float(b.confidence)] for r in reports for b in r.reliability])
    for r in reports:
        for s in r.stats.values():
            if s.diagnostic:
                _emit("warning", "EmptyPopulation", f"{r.method}: {s.diagnostic}")
        for c in r.curves:
            if c.diagnostic:
                _emit("warning", "EmptyCurve", f"{r.method}: {c.diagnostic}")


def cmd_sweep(args):
    dump = read_dump(args.dump, args.format)
    split = dump.to_split()
    rows = sweep(split, _floats(args.lambdas), _ints(args.bins_list), args.method,
                 M=args.ece_bins, use_objectness=not args.no_objectness, n_jobs=args.jobs)
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "bins", "ece", "mean_auc", "error"])
        for r in rows:
            w.writerow([fmt_float(r.smoothing), r.bins, fmt_float(r.ece), fmt_float(r.mean_auc),
                        r.error or ""])
            if r.error:
                _emit("warning", "SweepCell", f"lambda={r.smoothing} bins={r.bins}: {r.error}")


def cmd_synth(args):
    kw = dict(seed=args.seed, n_tp=args.n_tp, n_fp=args.n_fp, n_train=args.n_train,
              n_val=args.n_val)
    if args.noise_sigma is not None:
        kw["noise_sigma"] = args.noise_sigma
    if args.tp_means:
        kw["tp_logit_means"] = tuple(_floats(args.tp_means))
    if args.fp_means:
        kw["fp_logit_means"] = tuple(_floats(args.fp_means))
    spec = SyntheticSpec.with_classes(args.k, **kw)
    write_dump(generate(spec), args.output, args.format, K=spec.K)


def cmd_fit_temperature(args):
    dump = read_dump(args.dump, args.format)
    if dump.splits is not None:
        recs = [r for r, s in zip(dump.records, dump.splits) if s == "validation"]
    else:
        recs = dump.records
    print(fmt_float(fit_temperature(recs)))


def cmd_upsample(args):
    w, h = (int(v) for v in args.image_size.lower().split("x"))
    calib = read_kitti_calib(args.calib, (w, h))
    cloud = read_velodyne_bin(args.cloud)
    sparse = project(cloud, calib, args.channel)
    dense = bilateral_upsample(sparse, args.mask_size, args.iterations,
                               range_weight=not args.distance_only)
    write_map(dense, args.output, args.map_format)


def cmd_presets(args):
    for name, p in sorted(load_presets(args.config).items()):
        tag = "" if name in BUILTIN_PRESETS else " (user)"
        print(f"{name}{tag}: ml lambda={p.ml_smoothing:g} bins={p.ml_bins}; "
              f"map lambda={p.map_smoothing:g} bins={p.map_bins}; temperature={p.temperature:g}")


# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="logitcal", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="preset INI file (default: $LOGITCAL_CONFIG)")
    sub = p.add_subparsers(dest="command", required=True)

    def dump_arg(sp):
        sp.add_argument("dump", help="logit dump (.csv or .jsonl)")
        sp.add_argument("--format", choices=["csv", "jsonl"], help="input format (default: by extension)")

    sp = sub.add_parser("fit", help="fit per-class logit densities")
    dump_arg(sp)
    sp.add_argument("--bins", type=int)
    sp.add_argument("--preset", help="take bins from a preset (with --method)")
    sp.add_argument("--method", type=str.upper, choices=["ML", "MAP"], default="ML")
    sp.add_argument("--normalize", action="store_true", help="standardize logits before binning")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("score", help="append score_<method>/pred_class_<method> columns")
    dump_arg(sp)
    sp.add_argument("--model", help="density model JSON from 'fit'")
    sp.add_argument("--train", help="dump to fit densities from on the fly (uses each method's bins)")
    sp.add_argument("--method", action="append", type=str.lower,
                    choices=["sg", "softmax", "ml", "map"], help="repeatable; default ml")
    sp.add_argument("--preset")
    sp.add_argument("--lambda", dest="smoothing", type=float)
    sp.add_argument("--bins", type=int)
    sp.add_argument("--temperature", type=float)
    sp.add_argument("--prior", choices=["gaussian", "frequency"])
    sp.add_argument("--no-objectness", action="store_true")
    sp.add_argument("--out-format", choices=["csv", "jsonl"])
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("eval", help="ECE, PR curves, AUC and TP/FP score statistics")
    dump_arg(sp)
    sp.add_argument("--ece-bins", type=int, default=10)
    sp.add_argument("--split", choices=["train", "validation", "test", "all"], default="test",
                    help="rows to evaluate when the dump has a split column")
    sp.add_argument("-o", "--output", required=True, help="report directory")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", help="grid over lambda and bins")
    dump_arg(sp)
    sp.add_argument("--lambdas", required=True, help="comma-separated")
    sp.add_argument("--bins-list", required=True, help="comma-separated")
    sp.add_argument("--method", type=str.upper, choices=["ML", "MAP"], default="ML")
    sp.add_argument("--ece-bins", type=int, default=10)
    sp.add_argument("--no-objectness", action="store_true")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("synth", help="write a seeded synthetic dump")
    sp.add_argument("--seed", type=int, default=SyntheticSpec.seed)
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--n-tp", type=int, default=SyntheticSpec.n_tp)
    sp.add_argument("--n-fp", type=int, default=SyntheticSpec.n_fp)
    sp.add_argument("--n-train", type=int, default=SyntheticSpec.n_train)
    sp.add_argument("--n-val", type=int, default=SyntheticSpec.n_val)
    sp.add_argument("--tp-means", help="comma-separated, K values")
    sp.add_argument("--fp-means", help="comma-separated, K values")
    sp.add_argument("--noise-sigma", type=float)
    sp.add_argument("--format", choices=["csv", "jsonl"])
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("fit-temperature", help="fit a softmax temperature on validation TPs")
    dump_arg(sp)
    sp.set_defaults(func=cmd_fit_temperature)

    sp = sub.add_parser("upsample", help="project a velodyne scan and densify it")
    sp.add_argument("--cloud", required=True, help="KITTI velodyne .bin")
    sp.add_argument("--calib", required=True, help="KITTI calibration .txt")
    sp.add_argument("--channel", choices=CHANNELS, default="depth")
    sp.add_argument("--mask-size", type=int, default=13)
    sp.add_argument("--iterations", type=int, default=1)
    sp.add_argument("--distance-only", action="store_true", help="drop the value-similarity weight")
    sp.add_argument("--image-size", default="1242x375", help="WIDTHxHEIGHT")
    sp.add_argument("--format", dest="map_format", choices=MAP_FORMATS, default="pgm16")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_upsample)

    sp = sub.add_parser("presets", help="list known presets")
    sp.set_defaults(func=cmd_presets)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            args.func(args)
        for w in caught:
            _emit("warning", w.category.__name__, w.message)
    except CliError as exc:
        _emit("error", exc.kind, exc)
        return 1
    except (DumpError, FitError, UndefinedScoreError, KeyError, ValueError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        _emit("error", type(exc).__name__, msg)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
