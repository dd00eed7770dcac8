"""Command-line front end.

Subcommands:
  run       drive the pipeline on file or synthetic input, persist products
  generate  write a synthetic flow CSV (with optional attack episodes)
  evaluate  injection protocol: precision/recall, optional parameter sweep
  report    summarize an alert log
  diag      per-window tail estimates from the three estimators

Exit codes: 0 success, 1 config error, 2 input/output error, 3 internal
error. Attack episodes are given as
kind:magnitude:start:end:key[+key...][:fanout], e.g.
many_to_one:5000000:40:45:10.0.0.7 adds five megabytes per window toward
one destination during windows 40-45.
"""

import argparse
import itertools
import json
import logging
import math
import sys
import time
from collections import Counter
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import tail
from .databrick import Databrick
from .errors import ConfigError, FlowbrickError, InputFormatError, TailEstimationError
from .evaluate import evaluate
from .ingest import AttackSpec, generate_batches, parse_key, write_csv
from .pipeline import PipelineConfig, _input_batches, run

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_INTERNAL = 3

# PipelineConfig fields exposed as flags on run/evaluate/diag
_FLAG_FIELDS = (
    "m", "m_prime", "hash_seed", "seed", "windows", "rate", "tail_alpha",
    "input_path", "window_seconds", "window_records", "value_kind",
    "key_mode", "top_k", "detectors", "p0_frechet", "p0_relvol",
    "p0_community", "lam", "lam_community", "lam_p", "chart_L", "k",
    "mc_reps", "relvol_array", "topn", "clique_threshold", "clique_limit",
    "grace_windows", "output_dir",
)


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage as a config error (exit 1)."""

    def error(self, message):
        raise ConfigError(message)


def parse_attack(text):
    """Parse one attack episode flag value into an AttackSpec."""
    parts = text.split(":")
    if len(parts) not in (5, 6):
        raise ConfigError(
            "attack spec needs kind:magnitude:start:end:keys[:fanout], got %r" % (text,))
    try:
        keys = tuple(parse_key(t) for t in parts[4].split("+") if t)
        return AttackSpec(kind=parts[0], magnitude=int(parts[1]),
                          start_window=int(parts[2]), end_window=int(parts[3]),
                          target_keys=keys,
                          fanout=int(parts[5]) if len(parts) == 6 else 20)
    except ValueError as e:
        raise ConfigError("bad attack spec %r: %s" % (text, e)) from e


def _comma_tuple(s):
    return tuple(x for x in s.split(",") if x)


def _add_config_flags(p):
    g = p.add_argument_group("pipeline configuration")
    g.add_argument("--config", metavar="FILE", help="key=value config file")
    g.add_argument("--m", type=int)
    g.add_argument("--m-prime", type=int)
    g.add_argument("--hash-seed", type=int)
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--windows", type=int, help="synthetic window count")
    g.add_argument("--rate", type=int, help="synthetic records per window")
    g.add_argument("--tail-alpha", type=float)
    g.add_argument("--input", dest="input_path", metavar="CSV",
                   help="flow file input (timestamp,src,dst,bytes,packets)")
    g.add_argument("--window-seconds", type=float)
    g.add_argument("--window-records", type=int,
                   help="group by record count instead of time")
    g.add_argument("--value-kind", choices=("bytes", "packets"))
    g.add_argument("--key-mode", choices=("src_dst", "src", "dst"))
    g.add_argument("--top-k", type=int, help="hitter candidates per window")
    g.add_argument("--detectors", type=_comma_tuple,
                   help="comma list from: frechet,relvol,community,clique")
    g.add_argument("--p0-frechet", type=float)
    g.add_argument("--p0-relvol", type=float)
    g.add_argument("--p0-community", type=float)
    g.add_argument("--lam", type=float, help="tail smoothing weight")
    g.add_argument("--lam-community", type=float)
    g.add_argument("--lam-p", type=float, help="z-chart smoothing weight")
    g.add_argument("--chart-L", type=float, help="z-chart alarm limit")
    g.add_argument("--k", type=int, help="relative-volume top bins")
    g.add_argument("--mc-reps", type=int)
    g.add_argument("--relvol-array", choices=("dst", "src"))
    g.add_argument("--topn", type=int, help="graph edges per window")
    g.add_argument("--clique-threshold", type=int)
    g.add_argument("--clique-limit", type=int)
    g.add_argument("--grace", dest="grace_windows", type=int)
    g.add_argument("--out", dest="output_dir", metavar="DIR")


def _config_from_args(args):
    cfg = (PipelineConfig.from_file(args.config) if args.config
           else PipelineConfig())
    overrides = {name: getattr(args, name) for name in _FLAG_FIELDS
                 if getattr(args, name, None) is not None}
    return replace(cfg, **overrides) if overrides else cfg


def _make_run_dir(base, prefix):
    stamp = time.strftime("%Y%m%d-%H%M%S")
    for i in itertools.count():
        suffix = "" if i == 0 else "-%d" % i
        path = Path(base) / ("%s-%s%s" % (prefix, stamp, suffix))
        try:
            path.mkdir(parents=True)
        except FileExistsError:
            continue
        return path


def _cmd_run(args):
    cfg = _config_from_args(args)
    attacks = tuple(parse_attack(s) for s in (args.attack or []))
    run_dir = _make_run_dir(cfg.output_dir, "run")
    summary = run(cfg, out_dir=run_dir, attacks=attacks)
    (run_dir / "summary.json").write_text(
        json.dumps(summary.to_json_dict(), sort_keys=True, indent=1) + "\n",
        encoding="utf-8")
    print("run directory: %s" % run_dir)
    print("windows processed: %d" % summary.windows)
    print("records processed: %d" % summary.records)
    print("throughput: %.0f records/sec" % summary.records_per_sec)
    fired = " ".join("%s=%d" % kv for kv in sorted(summary.alerts.items()))
    print("alerts: %s" % (fired or "(none)"))
    if summary.detector_errors:
        print("detector errors: %d" % summary.detector_errors)
    return EXIT_OK


def _cmd_generate(args):
    attacks = [parse_attack(s) for s in (args.attack or [])]
    counts = [0, 0]

    def counted():
        for w, batch in generate_batches(args.seed, args.windows, args.rate,
                                         attacks, duration=args.duration,
                                         tail_alpha=args.tail_alpha):
            counts[0] = w + 1
            counts[1] += len(batch)
            yield w, batch

    write_csv(args.out, counted())
    print("wrote %d records across %d windows to %s"
          % (counts[1], counts[0], args.out))
    return EXIT_OK


def _cmd_evaluate(args):
    cfg = _config_from_args(args)
    attacks = [parse_attack(s) for s in (args.attack or [])]
    if not attacks:
        raise ConfigError("evaluate needs at least one --attack episode")
    grid = None
    if args.p0_grid or args.lam_grid:
        p0s = [float(x) for x in (args.p0_grid or str(cfg.p0_frechet)).split(",")]
        lams = [float(x) for x in (args.lam_grid or str(cfg.lam)).split(",")]
        grid = [(p0, lam) for p0 in p0s for lam in lams]
    out_dir = None if args.no_out else _make_run_dir(cfg.output_dir, "eval")
    res = evaluate(cfg, attacks, trials=args.trials, param_grid=grid,
                   out_dir=out_dir, require_target_bin=args.target_bin)
    print("%-13s %-11s %6s %5s %10s %8s %5s %5s"
          % ("detector", "array", "p0", "lam", "precision", "recall", "tp", "fp"))
    for r in res.rows:
        print("%-13s %-11s %6.4g %5.3g %10.3f %8.3f %5d %5d"
              % (r.detector, r.array, r.p0, r.lam, r.precision, r.recall,
                 r.tp, r.fp))
    if out_dir is not None:
        print("eval directory: %s" % out_dir)
    return EXIT_OK


def _cmd_report(args):
    path = Path(args.path)
    if path.is_dir():
        path = path / "alerts.jsonl"
    per_key = Counter()
    windows = {}
    bins = {}
    total = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except ValueError as e:
                raise InputFormatError("bad alert record: %s" % e, line_no) from e
            total += 1
            key = (rec["detector"], rec["array"])
            per_key[key] += 1
            windows.setdefault(key, set()).add(rec["window"])
            bins.setdefault(key, Counter()).update(rec["bins"])
    print("alerts: %d (%s)" % (total, path))
    for key in sorted(per_key):
        ws = sorted(windows[key])
        top = ", ".join("%d(x%d)" % (b, c)
                        for b, c in bins[key].most_common(5)) or "-"
        print("  %-13s %-11s fired %3d times over %3d windows [%d..%d], top bins: %s"
              % (key[0], key[1], per_key[key], len(ws), ws[0], ws[-1], top))
    return EXIT_OK


def _fmt_alpha(value):
    return "%8.3f" % value if math.isfinite(value) else "%8s" % "-"


def _cmd_diag(args):
    cfg = _config_from_args(args)
    brick = Databrick(cfg.m, cfg.hash_seed, cfg.value_kind)
    print("%6s %8s %8s %8s %8s %10s"
          % ("window", "n_pos", "spectrum", "hill", "ccdf", "scale_c"))
    spectrum = []
    for w, batch in itertools.islice(_input_batches(cfg, ()), args.limit):
        brick.add_batch(batch)
        _, arrays = brick.emit()
        x = arrays.dst if args.array == "dst" else arrays.src
        n_pos = int(np.count_nonzero(x))
        a_spec = a_hill = a_ccdf = c = float("nan")
        try:
            est = tail.max_spectrum(x)
            a_spec, c = est.alpha, est.c
            spectrum.append(a_spec)
        except TailEstimationError:
            pass
        try:
            a_hill = tail.hill_alpha(x[x > 0])
        except (TailEstimationError, ValueError):
            pass
        try:
            a_ccdf, _ = tail.ccdf_alpha(x)
        except (TailEstimationError, ValueError):
            pass
        c_txt = "%10.4g" % c if math.isfinite(c) else "%10s" % "-"
        print("%6d %8d %s %s %s %s"
              % (w, n_pos, _fmt_alpha(a_spec), _fmt_alpha(a_hill),
                 _fmt_alpha(a_ccdf), c_txt))
    if spectrum:
        print("median spectrum alpha over %d windows: %.3f"
              % (len(spectrum), float(np.median(spectrum))))
    return EXIT_OK


def _build_parser():
    parser = _Parser(prog="flowbrick",
                     description="streaming traffic monitor: hash-binned "
                                 "matrices, majority sketches, tail detectors")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("run", help="process input and persist products")
    _add_config_flags(p)
    p.add_argument("--attack", action="append", metavar="SPEC",
                   help="inject an episode into synthetic input (repeatable)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("generate", help="write a synthetic flow CSV")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--windows", type=int, default=60)
    p.add_argument("--rate", type=int, default=2000)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--tail-alpha", type=float, default=1.6)
    p.add_argument("--attack", action="append", metavar="SPEC")
    p.add_argument("--out", required=True, metavar="CSV")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", help="injection precision/recall")
    _add_config_flags(p)
    p.add_argument("--attack", action="append", metavar="SPEC")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--p0-grid", metavar="P0,P0,...")
    p.add_argument("--lam-grid", metavar="LAM,LAM,...")
    p.add_argument("--target-bin", action="store_true",
                   help="count recall only from alerts naming the target bin")
    p.add_argument("--no-out", action="store_true",
                   help="skip writing the eval directory")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="summarize an alert log")
    p.add_argument("path", help="alerts.jsonl file or run directory")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("diag", help="per-window tail estimates")
    _add_config_flags(p)
    p.add_argument("--array", choices=("dst", "src"), default="dst")
    p.add_argument("--limit", type=int, default=30,
                   help="windows to analyze")
    p.set_defaults(func=_cmd_diag)

    return parser


def main(argv=None):
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _build_parser().parse_args(argv)
        if not hasattr(args, "func"):
            raise ConfigError("a subcommand is required "
                              "(run, generate, evaluate, report, diag)")
        return args.func(args)
    except ConfigError as e:
        print("config error: %s" % e, file=sys.stderr)
        return EXIT_CONFIG
    except (InputFormatError, OSError) as e:
        print("input error: %s" % e, file=sys.stderr)
        return EXIT_IO
    except FlowbrickError as e:
        print("internal error: %s" % e, file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
