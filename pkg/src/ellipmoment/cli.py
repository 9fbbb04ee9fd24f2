"""``ellipmoment`` command line: constants tables, moments, verification, sampling."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from .elliptical import EllipticalDistribution
from .errors import EllipMomentError
from .generators import normalizing_constants, parse_family
from .moments import (
    Budget,
    normal_power_moment,
    normal_product_moment,
    product_moment,
    stein_first_moment,
    x1sq_moment_thm1,
    x1sq_moment_thm2,
)
from .smooth import from_spec as function_from_spec
from .verification import CHECKS, run_verification

__all__ = ["main", "build_parser", "dumps"]

CONSTANT_COLUMNS = ("n", "c", "c_star", "c_dstar", "b_star", "b_dstar", "discrepancy")


class UsageError(Exception):
    """Bad input that argparse itself cannot detect."""


def _fmt(x: float) -> str:
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    return format(x, ".17g")


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    return obj


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with sorted keys and reals printed to 17 significant digits."""
    obj = _plain(obj)
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(_plain(v), (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _parse_dims(text: str) -> list:
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must look like A..B or N, got {text!r}") from None
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"invalid dimension range {text!r}")
    return list(range(lo, hi + 1))


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ellipmoment", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--family", help="normal | t(p=<real>) | logistic | laplace")
        p.add_argument("--dims", type=_parse_dims, help="dimension or range A..B")
        p.add_argument("--spec", help="JSON file")
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=_positive)
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--workers", type=_positive, default=1, help="threads for sampling")

    p = sub.add_parser("constants", help="normalizing constants across dimensions")
    common(p)
    p.add_argument("--json", action="store_true", help="emit JSON instead of a text table")

    p = sub.add_parser("moment", help="evaluate an identity described by --spec")
    common(p)

    p = sub.add_parser("verify", help="run the acceptance suite")
    common(p)
    p.add_argument("--checks", help="comma-separated subset of: " + ", ".join(CHECKS))
    p.add_argument("--timing", action="store_true", help="record wall time per check in the report")

    p = sub.add_parser("sample", help="write draws as CSV")
    common(p)
    p.add_argument("--level", type=int, choices=(0, 1, 2), default=0, help="0 = X, 1 = X*, 2 = X**")
    return parser


def _read_spec(path):
    if path is None:
        raise UsageError("--spec is required for this command")
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _cmd_constants(args) -> int:
    if args.family is None:
        raise UsageError("--family is required")
    fam = parse_family(args.family)
    rows = []
    for n in args.dims or [1, 2, 3, 4, 5]:
        k = normalizing_constants(fam, n, cross_check=True)
        rows.append({"n": n, "c": k.c, "c_star": k.c_star, "c_dstar": k.c_dstar,
                     "b_star": k.b_star, "b_dstar": k.b_dstar, "discrepancy": k.discrepancy})
    if args.json:
        _emit(dumps({"family": str(fam), "rows": rows}) + "\n", args.out)
        return 0
    width = 24
    lines = [f"# family: {fam}", "".join(c.rjust(width) if i else c.rjust(3) for i, c in enumerate(CONSTANT_COLUMNS))]
    for r in rows:
        cells = [str(r["n"]).rjust(3)]
        for c in CONSTANT_COLUMNS[1:]:
            cells.append(("-" if r[c] is None else format(r[c], ".17g")).rjust(width))
        lines.append("".join(cells))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _budget(spec: dict, args) -> Budget:
    b = dict(spec.get("budget", {}))
    if args.seed is not None:
        b["seed"] = args.seed
    if args.samples is not None:
        b["samples"] = args.samples
    b.setdefault("workers", args.workers)
    return Budget.from_dict(b)


def _distribution(spec: dict, args) -> EllipticalDistribution:
    dist = dict(spec.get("distribution", spec))
    if args.family is not None:
        dist["family"] = args.family
    missing = {"family", "mu", "sigma"} - set(dist)
    if missing:
        raise UsageError(f"distribution spec lacks {sorted(missing)}")
    return EllipticalDistribution.from_spec(dist)


def _cmd_moment(args) -> int:
    spec = _read_spec(args.spec)
    d = _distribution(spec, args)
    identity = spec.get("identity", "thm1")
    budget = _budget(spec, args)
    index = int(spec.get("index", 0))
    if identity in ("thm1", "thm2", "stein", "normal_power"):
        if "f" not in spec:
            raise UsageError(f"identity {identity!r} needs an \"f\" entry")
        f = function_from_spec(spec["f"])
    if identity == "thm1":
        est = x1sq_moment_thm1(d, f, budget, index=index)
    elif identity == "thm2":
        est = x1sq_moment_thm2(d, f, budget, index=index)
    elif identity == "stein":
        est = stein_first_moment(d, f, budget, index=index)
    elif identity == "normal_power":
        est = normal_power_moment(d, int(spec.get("p1", 2)), f, budget, index=index)
    elif identity == "product":
        est = product_moment(d, spec["exponents"], budget, form=spec.get("form", "derived"))
    elif identity == "normal_product":
        value = normal_product_moment(d.mu, d.sigma, spec["exponents"])
        _emit(dumps({"identity": identity, "value": value, "stderr": 0.0, "method": "recursion"}) + "\n", args.out)
        return 0
    else:
        raise UsageError(f"unknown identity {identity!r}")
    out = {"identity": identity, "value": est.value, "stderr": est.stderr, "method": est.method}
    if est.breakdown is not None:
        out["breakdown"] = est.breakdown
    _emit(dumps(out) + "\n", args.out)
    return 0


def _cmd_verify(args) -> int:
    checks = None
    if args.checks:
        checks = [c.strip() for c in args.checks.split(",") if c.strip()]
        unknown = [c for c in checks if c not in CHECKS]
        if unknown:
            raise UsageError(f"unknown checks {unknown}; choose from {list(CHECKS)}")

    def progress(name, runs, seconds):
        bad = sum(not r["pass"] for r in runs)
        print(f"{name}: {len(runs) - bad}/{len(runs)} pass ({seconds:.1f} s)", file=sys.stderr)

    report = run_verification(seed=42 if args.seed is None else args.seed,
                              samples=args.samples or 1_000_000, checks=checks,
                              timing=args.timing, progress=progress)
    _emit(dumps(report) + "\n", args.out)
    for r in report["runs"]:
        if not r["pass"]:
            print(f"FAIL {r['check']} family={r['family']} n={r['n']} expected={r['expected']!r} "
                  f"got={r['got']!r} tol={r['tolerance']!r}", file=sys.stderr)
    return 0 if report["pass"] else 1


def _cmd_sample(args) -> int:
    if args.spec is not None:
        spec = _read_spec(args.spec)
        d = _distribution(spec, args)
    elif args.family is not None and args.dims is not None and len(args.dims) == 1:
        n = args.dims[0]
        d = EllipticalDistribution.create(args.family, np.zeros(n), np.eye(n))
    else:
        raise UsageError("sample needs --spec, or --family with a single --dims value")
    if args.level:
        d = d.at_level(args.level)
    x = d.sample(0 if args.seed is None else args.seed, args.samples or 1000, args.workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(d.n)])
    for row in x:
        w.writerow([format(float(v), ".17g") for v in row])
    _emit(buf.getvalue(), args.out)
    return 0


COMMANDS = {"constants": _cmd_constants, "moment": _cmd_moment, "verify": _cmd_verify, "sample": _cmd_sample}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, EllipMomentError, ValueError, KeyError, TypeError) as exc:
        msg = f"missing key {exc.args[0]!r}" if isinstance(exc, KeyError) and exc.args else exc
        print(f"ellipmoment: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
