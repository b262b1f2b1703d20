"""Command-line front end.

    python -m bloomlab <subcommand> [--config FILE] [--depth L] [--p P] [--seed S]
                       [--trials N] [--mode M] [--out report.json] [--csv rows.csv]
                       [--reproducible]

Exit codes: 0 success, 1 identity-suite failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .dyadic import depth_of
from .experiments import CSV_COLUMNS, STUDIES, ConfigError, ExperimentConfig
from .model import SpecError
from .weights import CapabilityError

log = logging.getLogger("bloomlab")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    return x


def atomic_write(path: str, text: str):
    """Write to a sibling temp file, then rename over ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def save_grid(path: str, f):
    """Grid function as CSV: one line per x1 cell, N values along x2."""
    f = np.asarray(f, dtype=float)
    depth_of(f)
    atomic_write(path, "".join(",".join(repr(float(v)) for v in row) + "\n" for row in f))


def load_grid(path: str) -> np.ndarray:
    f = np.loadtxt(path, delimiter=",", ndmin=2)
    depth_of(f)
    return f


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    b = data.get("b") if isinstance(data, dict) else None
    if isinstance(b, dict) and b.get("kind") == "given" and "path" in b:
        base = os.path.dirname(os.path.abspath(path))
        try:
            b["values"] = load_grid(os.path.join(base, b.pop("path"))).tolist()
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read b grid: {exc}")
    return ExperimentConfig.from_dict(data)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bloomlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"bloomlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in STUDIES:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config with sections experiment, weights, operators, b")
        sp.add_argument("--depth", type=int)
        sp.add_argument("--p", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--mode", choices=("auto", "exact", "greedy", "rect"))
        sp.add_argument("--out", help="JSON report path (default: stdout)")
        sp.add_argument("--csv", help="per-trial CSV path")
        sp.add_argument("--reproducible", action="store_true", default=None,
                        help="serial execution, deterministic output")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).override(depth=args.depth, p=args.p, seed=args.seed,
                                                trials=args.trials, mode=args.mode,
                                                reproducible=args.reproducible)
        report = STUDIES[args.command](cfg)
    except (ConfigError, SpecError, CapabilityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    header = {"tool": "bloomlab", "version": __version__, "command": args.command,
              "config": cfg.to_dict(), "seed": cfg.seed}
    text = json.dumps(_jsonable({"header": header, "report": report}), indent=1, sort_keys=True) + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    if args.csv:
        atomic_write(args.csv, rows_to_csv(report.get("rows", [])))
    if args.command == "identities" and not report["passed"]:
        for fl in report["failures"]:
            print(f"identity failure: case={fl['case']} trial={fl['trial_id']} seed={fl['seed']} "
                  f"residual={fl['residual']:.3e}", file=sys.stderr)
        return 1
    if args.command == "lemmas" and not report["passed"]:
        return 1
    return 0


def main():
    sys.exit(run())
