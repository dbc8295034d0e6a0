"""Command-line surface.

One job per process. Jobs come from subcommand flags, optionally seeded
by a flat key=value config file (flags win). Results go to stdout or a
file as CSV (fixed header, 10-significant-digit floats) or JSON; all
diagnostics go to stderr. Exit codes: 0 success, 2 bad job, 3 infeasible
everywhere, 4 enumeration budget exceeded (1 is reserved for selftest
failures).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .core import DistortionMatrix, Pmf, RateCurve
from .errors import BudgetExceeded, CliError, SimidError, TooLarge
from .rates import (
    closed_form_binary_symmetric,
    enumerate_sign_patterns,
    hamming_lower_bound,
    r_id_curve,
    r_id_general,
    r_id_hamming,
    r_id_lc,
    r_id_tc,
)
from .simulator import build_codebook, estimate_maybe_probability
from .solver import Status, distortion_rate, rate_distortion
from .transport import rho_bar, rho_bar_hamming

CSV_HEADER = ["D", "R", "status", "pattern_index", "u_size", "tol"]
SIM_HEADER = [
    "n",
    "rate_budget",
    "rate_realized",
    "codebook_size",
    "uncovered",
    "D",
    "p_maybe",
    "halfwidth",
    "trials",
    "seed",
    "false_negatives",
]
COMMANDS = (
    "rid",
    "rid-general",
    "tc",
    "lc",
    "rd",
    "rhobar",
    "bound",
    "sweep",
    "simulate",
    "selftest",
)
TABLE_COUNTS = {2: 1, 3: 20, 4: 1001, 5: 142506}


@dataclass(frozen=True)
class JobSpec:
    command: str
    px: Pmf | None = None
    py: Pmf | None = None
    rho: DistortionMatrix | None = None
    d_grid: tuple = ()
    r_grid: tuple = ()
    tol: float = 1e-4
    u_size: int | None = None
    strict_cardinality: bool = False
    full_enumeration: bool = False
    curves: tuple = ()
    n: int | None = None
    rate_budget: float | None = None
    trials: int = 10_000
    seed: int = 0
    cover_tol: float | None = None
    typical_gamma: float | None = None
    fmt: str = "csv"
    output: str | None = None
    threads: int = 1


def q10(x: float) -> float:
    """Quantize to the emitted precision so files round-trip exactly."""
    return float(f"{float(x):.10g}")


def _parse_pmf(text: str, field: str) -> Pmf:
    try:
        vals = [float(t) for t in text.split(",")]
        return Pmf(vals)
    except (ValueError, SimidError) as e:
        raise CliError(f"{field}: {e}") from e


def _parse_rho(text: str, size: int) -> DistortionMatrix:
    if text.strip().lower() == "hamming":
        return DistortionMatrix.hamming(size)
    try:
        rows = [
            [float(t) for t in row.split(",")] for row in text.split(";")
        ]
        return DistortionMatrix(rows)
    except (ValueError, SimidError) as e:
        raise CliError(f"--rho: {e}") from e


def _parse_grid(text: str, field: str) -> tuple:
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError as e:
        raise CliError(f"{field}: {e}") from e
    if not vals:
        raise CliError(f"{field}: empty grid")
    for a, b in zip(vals, vals[1:]):
        if b <= a:
            raise CliError(f"{field}: grid must be strictly increasing")
    return tuple(vals)


def _read_config(path: str) -> dict:
    cfg = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, raw in enumerate(f, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise CliError(
                        f"{path}:{lineno}: expected key=value, got {line!r}"
                    )
                key, _, value = line.partition("=")
                cfg[key.strip().replace("-", "_")] = value.strip()
    except OSError as e:
        raise CliError(f"cannot read config {path}: {e}") from e
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simid",
        description="Identification-rate computations and scheme simulation.",
    )
    parser.add_argument(
        "--config",
        help="flat key=value file supplying default flag values",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, dist=True, grid_d=True):
        if dist:
            p.add_argument("--px", help="source pmf, comma-separated")
            p.add_argument("--py", help="query pmf, comma-separated")
            p.add_argument(
                "--rho",
                default="hamming",
                help="'hamming' or semicolon-separated rows: 0,1;1,0",
            )
        if grid_d:
            p.add_argument("--D", dest="d_grid", help="distortion level(s)")
        p.add_argument("--tol", default="1e-4", help="solver tolerance")
        p.add_argument("--format", default="csv", choices=["csv", "json"])
        p.add_argument("--output", help="output file (default stdout)")
        p.add_argument("--threads", default=None, help="worker threads")

    p = sub.add_parser("rid", help="identification rate, Hamming distortion")
    add_common(p)
    p.add_argument("--u-size", dest="u_size", help="|X| or |X|+1")

    p = sub.add_parser("rid-general", help="identification rate, general rho")
    add_common(p)
    p.add_argument("--u-size", dest="u_size", help="auxiliary cardinality")
    p.add_argument(
        "--full-enumeration",
        action="store_true",
        help="solve duplicate vertex assignments too (cross-check mode)",
    )

    p = sub.add_parser("tc", help="type-covering triangle-scheme rate")
    add_common(p)

    p = sub.add_parser("lc", help="lossy-compression triangle-scheme rate")
    add_common(p)

    p = sub.add_parser("rd", help="classical rate-distortion")
    add_common(p)
    p.add_argument("--R", dest="r_grid", help="rate grid for D(R) instead of --D")

    p = sub.add_parser("rhobar", help="transportation distance of px, py")
    add_common(p, grid_d=False)

    p = sub.add_parser("bound", help="divergence lower bound, Hamming")
    add_common(p)

    p = sub.add_parser("sweep", help="rate curves over a distortion grid")
    add_common(p)
    p.add_argument(
        "--curves",
        default="rid,tc,lc",
        help="comma-separated subset of rid,tc,lc",
    )
    p.add_argument(
        "--strict-cardinality",
        action="store_true",
        help="use u = |X|+1 pointwise instead of the |X| envelope",
    )

    p = sub.add_parser("simulate", help="triangle-scheme Monte Carlo")
    add_common(p)
    p.add_argument("--n", help="blocklength")
    p.add_argument("--rate", dest="rate_budget", help="codebook rate budget")
    p.add_argument("--trials", default="10000")
    p.add_argument("--seed", default="0")
    p.add_argument("--cover-tol", dest="cover_tol", help="joint-type tolerance")
    p.add_argument(
        "--gamma",
        dest="typical_gamma",
        help="typical-set halfwidth (default: cover all sequences)",
    )

    p = sub.add_parser("selftest", help="built-in consistency checks")
    p.add_argument("--format", default="csv", choices=["csv", "json"])
    p.add_argument("--output", help=argparse.SUPPRESS)
    p.add_argument("--threads", default=None, help=argparse.SUPPRESS)

    return parser


def parse_job(argv) -> JobSpec:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(list(argv))
    parser = _build_parser()
    if known.config:
        cfg = _read_config(known.config)
        subparsers = parser._subparsers._group_actions[0].choices.values()
        known_keys = set()
        for sp in subparsers:
            alias = {}
            for action in sp._actions:
                for opt in action.option_strings:
                    alias[opt.lstrip("-").replace("-", "_")] = action.dest
            known_keys.update(alias)
            sp.set_defaults(
                **{alias[k]: v for k, v in cfg.items() if k in alias}
            )
        unknown = sorted(set(cfg) - known_keys)
        if unknown:
            raise CliError(f"unknown config key(s): {', '.join(unknown)}")
    ns = parser.parse_args(rest)
    return _validate(ns)


def _to_float(value, field: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise CliError(f"{field}: not a number: {value!r}") from e


def _to_int(value, field: str) -> int:
    try:
        return int(str(value), 10)
    except (TypeError, ValueError) as e:
        raise CliError(f"{field}: not an integer: {value!r}") from e


def _to_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def _validate(ns) -> JobSpec:
    cmd = ns.command
    if cmd == "selftest":
        return JobSpec(command=cmd, fmt=getattr(ns, "format", "csv"))

    tol = _to_float(ns.tol, "--tol")
    if not (0.0 < tol <= 1e-2):
        raise CliError(f"--tol: must lie in (0, 1e-2], got {tol}")

    threads = ns.threads
    if threads is None:
        threads = os.environ.get("SIMID_THREADS", "1")
    threads = _to_int(threads, "--threads")
    if threads < 1:
        raise CliError(f"--threads: must be >= 1, got {threads}")

    if not getattr(ns, "px", None):
        raise CliError("--px: required")
    px = _parse_pmf(ns.px, "--px")
    py = _parse_pmf(ns.py, "--py") if getattr(ns, "py", None) else None
    rho = None
    if hasattr(ns, "rho"):
        rho = _parse_rho(ns.rho, px.alphabet_size)

    needs_py = cmd in ("rid", "rid-general", "tc", "lc", "rhobar", "bound", "sweep")
    if needs_py and py is None:
        raise CliError("--py: required for this command")

    d_grid = ()
    if getattr(ns, "d_grid", None):
        d_grid = _parse_grid(ns.d_grid, "--D")
    r_grid = ()
    if getattr(ns, "r_grid", None):
        r_grid = _parse_grid(ns.r_grid, "--R")

    needs_d = cmd in ("rid", "rid-general", "tc", "lc", "bound", "sweep")
    if needs_d and not d_grid:
        raise CliError("--D: required for this command")
    if cmd == "rd" and not d_grid and not r_grid:
        raise CliError("rd: needs --D or --R")
    if cmd == "rd" and d_grid and r_grid:
        raise CliError("rd: give --D or --R, not both")

    u_size = None
    if getattr(ns, "u_size", None) is not None:
        u_size = _to_int(ns.u_size, "--u-size")
        if cmd == "rid" and u_size not in (px.alphabet_size, px.alphabet_size + 1):
            raise CliError(
                f"--u-size: must be {px.alphabet_size} or "
                f"{px.alphabet_size + 1} for rid"
            )
        if u_size < 1:
            raise CliError(f"--u-size: must be >= 1, got {u_size}")

    curves = ()
    if cmd == "sweep":
        curves = tuple(t.strip() for t in str(ns.curves).split(",") if t.strip())
        bad = [c for c in curves if c not in ("rid", "tc", "lc")]
        if bad:
            raise CliError(f"--curves: unknown curve(s) {', '.join(bad)}")
        if not curves:
            raise CliError("--curves: empty")
        if len(curves) > 1 and not ns.output:
            raise CliError(
                "--output: required as a filename prefix for multi-curve sweeps"
            )

    n = None
    rate_budget = None
    trials = 10_000
    seed = 0
    cover_tol = None
    typical_gamma = None
    if cmd == "simulate":
        if getattr(ns, "n", None) is None:
            raise CliError("--n: required for simulate")
        n = _to_int(ns.n, "--n")
        if n < 1:
            raise CliError(f"--n: must be >= 1, got {n}")
        if getattr(ns, "rate_budget", None) is None:
            raise CliError("--rate: required for simulate")
        rate_budget = _to_float(ns.rate_budget, "--rate")
        if rate_budget < 0:
            raise CliError(f"--rate: must be >= 0, got {rate_budget}")
        if not d_grid or len(d_grid) != 1:
            raise CliError("simulate: needs a single --D value")
        trials = _to_int(ns.trials, "--trials")
        if trials < 1:
            raise CliError(f"--trials: must be >= 1, got {trials}")
        seed = _to_int(ns.seed, "--seed")
        if getattr(ns, "cover_tol", None) is not None:
            cover_tol = _to_float(ns.cover_tol, "--cover-tol")
        if getattr(ns, "typical_gamma", None) is not None:
            typical_gamma = _to_float(ns.typical_gamma, "--gamma")
        if py is None:
            py = px

    return JobSpec(
        command=cmd,
        px=px,
        py=py,
        rho=rho,
        d_grid=d_grid,
        r_grid=r_grid,
        tol=tol,
        u_size=u_size,
        strict_cardinality=_to_bool(getattr(ns, "strict_cardinality", False)),
        full_enumeration=_to_bool(getattr(ns, "full_enumeration", False)),
        curves=curves,
        n=n,
        rate_budget=rate_budget,
        trials=trials,
        seed=seed,
        cover_tol=cover_tol,
        typical_gamma=typical_gamma,
        fmt=ns.format,
        output=ns.output,
        threads=threads,
    )


def _row(d, r, status, pattern_index, u_size, tol, channel=None):
    return {
        "D": q10(d),
        "R": q10(r),
        "status": status,
        "pattern_index": pattern_index,
        "u_size": u_size,
        "tol": q10(tol),
        "channel": None if channel is None else [list(map(float, row))
                                                 for row in channel.cond],
    }


def _emit_rows(rows, fmt: str, out) -> None:
    if fmt == "json":
        payload = json.dumps(rows, indent=2)
        out.write(payload + "\n")
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(
            [
                f"{row['D']:.10g}",
                f"{row['R']:.10g}",
                row["status"],
                row["pattern_index"],
                row["u_size"],
                f"{row['tol']:.10g}",
            ]
        )


def rows_to_curve(rows, label: str = "curve") -> RateCurve:
    """Rebuild a RateCurve from emitted rows (exact for quantized emission)."""
    pts = [(r["D"], r["R"]) for r in rows if math.isfinite(r["R"])]
    return RateCurve([p[0] for p in pts], [p[1] for p in pts], label=label)


def read_curve_csv(path_or_file, label: str = "curve") -> RateCurve:
    if hasattr(path_or_file, "read"):
        reader = csv.DictReader(path_or_file)
        rows = [
            {"D": float(r["D"]), "R": float(r["R"])} for r in reader
        ]
    else:
        with open(path_or_file, "r", encoding="utf-8", newline="") as f:
            return read_curve_csv(f, label)
    return rows_to_curve(rows, label)


def _id_status(result) -> str:
    if not math.isfinite(result.rate):
        return Status.INFEASIBLE.value
    if result.rate <= 0.0:
        return Status.CONSTRAINT_INACTIVE.value
    return Status.OPTIMAL.value


def _curve_rows(spec: JobSpec, which: str):
    px, py, rho, tol = spec.px, spec.py, spec.rho, spec.tol
    m = px.alphabet_size
    rows = []
    if which == "rid":
        if spec.strict_cardinality:
            for d in spec.d_grid:
                res = (
                    r_id_hamming(px, py, d, m + 1, tol, threads=spec.threads)
                    if rho.is_hamming
                    else r_id_general(
                        px, py, rho, d, m + 1, tol, threads=spec.threads
                    )
                )
                rows.append(
                    _row(d, res.rate, _id_status(res), res.winning_index,
                         res.u_cardinality_used, tol, res.achieving_channel)
                )
        else:
            curve = r_id_curve(px, py, rho, spec.d_grid, tol, threads=spec.threads)
            for d, r in zip(curve.d, curve.r):
                rows.append(_row(d, r, Status.OPTIMAL.value, -1, m, tol))
    elif which == "tc":
        for d in spec.d_grid:
            rep = r_id_tc(px, py, rho, d, tol)
            rows.append(
                _row(d, rep.optimal_rate, rep.status.value, -1,
                     rho.shape[1], tol, rep.channel)
            )
    else:
        for d in spec.d_grid:
            r = r_id_lc(px, py, rho, d, tol)
            status = Status.OPTIMAL.value if math.isfinite(r) else Status.INFEASIBLE.value
            if math.isfinite(r) and r <= 0.0:
                status = Status.CONSTRAINT_INACTIVE.value
            rows.append(_row(d, r, status, -1, m, tol))
    return rows


def run_job(spec: JobSpec) -> int:
    """Execute a validated job; returns the process exit code."""
    try:
        rows, extra_files = _dispatch(spec)
    except (BudgetExceeded, TooLarge) as e:
        print(f"simid: budget exceeded: {e}", file=sys.stderr)
        return 4
    except SimidError as e:
        print(f"simid: {e}", file=sys.stderr)
        return 2
    if rows is None:
        return extra_files  # selftest path returns its own code

    for path, file_rows in extra_files:
        with open(path, "w", encoding="utf-8", newline="") as f:
            _emit_rows(file_rows, spec.fmt, f)
    if rows is not STDOUT_DONE:
        if spec.output:
            with open(spec.output, "w", encoding="utf-8", newline="") as f:
                _emit_rows(rows, spec.fmt, f)
        else:
            _emit_rows(rows, spec.fmt, sys.stdout)

    finite = [r for r in rows if r["status"] != Status.INFEASIBLE.value] \
        if rows is not STDOUT_DONE else [True]
    if not finite:
        print("simid: infeasible at every grid point", file=sys.stderr)
        return 3
    return 0


STDOUT_DONE = object()


def _dispatch(spec: JobSpec):
    cmd = spec.command
    if cmd == "selftest":
        return None, _selftest()

    px, py, rho, tol = spec.px, spec.py, spec.rho, spec.tol
    m = px.alphabet_size if px is not None else 0

    if cmd == "rid":
        if not rho.is_hamming:
            raise CliError("rid is the Hamming command; use rid-general")
        u = spec.u_size if spec.u_size is not None else m
        rows = []
        for d in spec.d_grid:
            res = r_id_hamming(px, py, d, u, tol, threads=spec.threads)
            rows.append(
                _row(d, res.rate, _id_status(res), res.winning_index,
                     res.u_cardinality_used, tol, res.achieving_channel)
            )
        return rows, []

    if cmd == "rid-general":
        u = spec.u_size if spec.u_size is not None else m
        rows = []
        for d in spec.d_grid:
            res = r_id_general(
                px, py, rho, d, u, tol,
                threads=spec.threads,
                full_enumeration=spec.full_enumeration,
            )
            rows.append(
                _row(d, res.rate, _id_status(res), res.winning_index,
                     res.u_cardinality_used, tol, res.achieving_channel)
            )
        return rows, []

    if cmd == "tc":
        return _curve_rows(spec, "tc"), []

    if cmd == "lc":
        return _curve_rows(spec, "lc"), []

    if cmd == "rd":
        rows = []
        if spec.d_grid:
            for d in spec.d_grid:
                rep = rate_distortion(px, rho, d, tol)
                rows.append(
                    _row(d, rep.optimal_rate, rep.status.value, -1,
                         rho.shape[1], tol, rep.channel)
                )
        else:
            for r in spec.r_grid:
                d_of_r, channel = distortion_rate(px, rho, r, tol)
                rows.append(
                    _row(d_of_r, r, Status.OPTIMAL.value, -1,
                         rho.shape[1], tol, channel)
                )
        return rows, []

    if cmd == "rhobar":
        if rho.is_hamming:
            value = rho_bar_hamming(px, py)
        else:
            value, _ = rho_bar(px, py, rho)
        return [_row(value, 0.0, Status.OPTIMAL.value, -1, 0, tol)], []

    if cmd == "bound":
        rows = [
            _row(d, hamming_lower_bound(px, py, d),
                 Status.OPTIMAL.value, -1, 0, tol)
            for d in spec.d_grid
        ]
        return rows, []

    if cmd == "sweep":
        if len(spec.curves) == 1:
            return _curve_rows(spec, spec.curves[0]), []
        suffix = "json" if spec.fmt == "json" else "csv"
        files = [
            (f"{spec.output}.{c}.{suffix}", _curve_rows(spec, c))
            for c in spec.curves
        ]
        return STDOUT_DONE, files

    if cmd == "simulate":
        d = spec.d_grid[0]
        rho_sim = spec.rho
        target_d, channel = distortion_rate(px, rho_sim, spec.rate_budget, tol)
        del target_d
        cb = build_codebook(
            spec.n,
            px,
            channel,
            spec.rate_budget,
            rho=rho_sim,
            cover_tol=spec.cover_tol,
            typical_gamma=spec.typical_gamma,
        )
        result = estimate_maybe_probability(
            cb, px, py, d, spec.trials, spec.seed
        )
        row = {
            "n": spec.n,
            "rate_budget": q10(spec.rate_budget),
            "rate_realized": q10(cb.rate),
            "codebook_size": len(cb.codewords),
            "uncovered": cb.uncovered_count,
            "D": q10(d),
            "p_maybe": q10(result.p_maybe_estimate),
            "halfwidth": q10(result.confidence_halfwidth),
            "trials": result.trials,
            "seed": result.seed,
            "false_negatives": result.false_negative_count,
        }
        out = sys.stdout
        buf = io.StringIO()
        if spec.fmt == "json":
            buf.write(json.dumps([row], indent=2) + "\n")
        else:
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(SIM_HEADER)
            writer.writerow([row[k] if not isinstance(row[k], float)
                             else f"{row[k]:.10g}" for k in SIM_HEADER])
        if spec.output:
            with open(spec.output, "w", encoding="utf-8", newline="") as f:
                f.write(buf.getvalue())
        else:
            out.write(buf.getvalue())
        return STDOUT_DONE, []

    raise CliError(f"unknown command {cmd!r}")


def _selftest() -> int:
    failures = 0
    for m, want in sorted(TABLE_COUNTS.items()):
        got = sum(1 for _ in enumerate_sign_patterns(m, m))
        ok = got == want
        failures += 0 if ok else 1
        print(f"pattern-count |X|={m}: {'PASS' if ok else 'FAIL'} ({got})")
    b = Pmf([0.5, 0.5])
    got = rho_bar_hamming(Pmf([0.1, 0.9]), b)
    ok = abs(got - 0.4) <= 1e-12
    failures += 0 if ok else 1
    print(f"transport half-L1: {'PASS' if ok else 'FAIL'} ({got:.10g})")
    got = closed_form_binary_symmetric(0.5, 0.1)
    ok = abs(got - 0.02905) <= 1e-4
    failures += 0 if ok else 1
    print(f"closed-form binary: {'PASS' if ok else 'FAIL'} ({got:.10g})")
    return 1 if failures else 0


def main(argv=None) -> int:
    try:
        spec = parse_job(sys.argv[1:] if argv is None else argv)
    except CliError as e:
        print(f"simid: {e}", file=sys.stderr)
        return 2
    except SimidError as e:
        print(f"simid: {e}", file=sys.stderr)
        return 2
    return run_job(spec)


if __name__ == "__main__":
    sys.exit(main())
