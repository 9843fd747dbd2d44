"""Command-line front end: solve, check, sweep and figure datasets.

Exit codes: 0 success, 1 invalid parameters or usage, 2 convergence or
verification failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import deviation as dev
from . import figures
from . import liouville as lv
from . import observables as obs
from .params import InvalidParameterError, LaserRates, NormalizedParams, normalize, validate_normalized
from .state import build_solution

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_IO = 0, 1, 2, 3

NORMALIZED_KEYS = ("a0sq", "nu0", "mu0", "eta")
RAW_KEYS = ("kappa", "g", "r12", "r21", "gamma")

RESIDUAL_TOL = 1e-9
DEVIATION_TOL = 1e-10
TAIL_TOL = 1e-12
ORACLE_DISTANCE_TOL = 1e-7
ORACLE_ROBUST_TOL = 1e-9
ORACLE_LEAKAGE_TOL = 1e-10
ORACLE_N_START, ORACLE_N_STEP, ORACLE_N_CAP = 40, 20, 400
UNCOUPLED_TOL = 1e-12


class UsageError(Exception):
    """Bad command line or config file (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for convergence failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _nmax(text: str):
    if text == "auto":
        return None
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"nmax must be >= 1, got {n}")
    return n


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return n


# option name -> (converter, default); these may also come from --config
OPTIONS = {
    **{k: (float, None) for k in NORMALIZED_KEYS + RAW_KEYS},
    "nmax": (_nmax, None),
    "tol": (float, 1e-12),
    "s_tol": (float, 1e-3),
    "out": (str, "."),
    "format": (str, None),
    "jobs": (_positive_int, 1),
}


def _add_common(p: argparse.ArgumentParser):
    g = p.add_argument_group("parameters (normalized or raw rates, not both)")
    for k in NORMALIZED_KEYS + RAW_KEYS:
        g.add_argument(f"--{k}", type=float, default=None, metavar="X")
    p.add_argument("--nmax", type=_nmax, default=None, metavar="auto|N", help="Fock truncation (default auto)")
    p.add_argument("--tol", type=float, default=None, help="deviation solver tolerance in (0, 1e-6] (default 1e-12)")
    p.add_argument("--s-tol", dest="s_tol", type=float, default=None, help="bisection width in s, [1e-4, 1e-2] (default 1e-3)")
    p.add_argument("--out", default=None, metavar="DIR", help="output directory (default .)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--jobs", type=_positive_int, default=None, help="worker processes for independent points")
    p.add_argument("--config", default=None, metavar="FILE", help="key=value lines; flags take precedence")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ncslaser", description="Stationary state of the one-atom laser.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("solve", help="solve one parameter set, write solution JSON and distributions CSV")
    _add_common(p)
    p = sub.add_parser("figure", help="emit the dataset behind a figure")
    p.add_argument("name", help="fig1 .. fig6")
    _add_common(p)
    p = sub.add_parser("check", help="residual suite and oracle comparison for one parameter set")
    _add_common(p)
    p = sub.add_parser("sweep", help="observables along one normalized parameter")
    _add_common(p)
    p.add_argument("--param", required=True, choices=figures.SWEEP_PARAMS)
    p.add_argument("--start", type=float, required=True)
    p.add_argument("--stop", type=float, required=True)
    p.add_argument("--points", type=_positive_int, required=True)
    p.add_argument("--spacing", choices=("lin", "log"), default="lin")
    p.add_argument("--s0", action="store_true", help="also locate the nonclassicality order (slow)")
    return parser


def read_config(path: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = OPTIONS[key][0](value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{lineno}: {exc}") from None
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags over config file over defaults."""
    conf = read_config(args.config) if args.config else {}
    cfg = {}
    for key, (_, default) in OPTIONS.items():
        flag = getattr(args, key, None)
        cfg[key] = flag if flag is not None else conf.get(key, default)
    if cfg["format"] not in (None, "csv", "json"):
        raise UsageError(f"format must be csv or json, got {cfg['format']!r}")
    if not 0 < cfg["tol"] <= 1e-6:
        raise UsageError(f"tol must lie in (0, 1e-6], got {cfg['tol']}")
    if not 1e-4 <= cfg["s_tol"] <= 1e-2:
        raise UsageError(f"s-tol must lie in [1e-4, 1e-2], got {cfg['s_tol']}")
    return cfg


def parameter_source(cfg: dict):
    """Exactly one of the normalized set or the raw-rate set, complete."""
    norm = {k: cfg[k] for k in NORMALIZED_KEYS if cfg[k] is not None}
    raw = {k: cfg[k] for k in RAW_KEYS if cfg[k] is not None}
    if norm and raw:
        raise UsageError("give either --a0sq/--nu0/--mu0/--eta or --kappa/--g/--r12/--r21/--gamma, not both")
    if not norm and not raw:
        raise UsageError("missing parameters: give --a0sq --nu0 --mu0 --eta or --kappa --g --r12 --r21 --gamma")
    if norm:
        missing = [k for k in NORMALIZED_KEYS if k not in norm]
        if missing:
            raise UsageError("missing " + " ".join(f"--{k}" for k in missing))
        p = NormalizedParams(**norm)
        validate_normalized(p)
        return p
    missing = [k for k in RAW_KEYS if k not in raw]
    if missing:
        raise UsageError("missing " + " ".join(f"--{k}" for k in missing))
    return LaserRates(**raw)


def normalized(source) -> NormalizedParams:
    return normalize(source) if isinstance(source, LaserRates) else source


# output -----------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


def _json_number(v):
    v = float(v)
    return v if math.isfinite(v) else None


def write_csv(table: figures.Table, path: Path):
    lines = [",".join(table.columns)]
    lines += [",".join(_fmt(v) for v in row) for row in table.rows]
    path.write_text("\n".join(lines) + "\n")


def _json_value(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return int(v)
    return _json_number(v)


def write_table_json(table: figures.Table, path: Path):
    rows = [[_json_value(v) for v in r] for r in table.rows]
    _write_json({"name": table.name, "columns": table.columns, "rows": rows}, path)


def _write_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=1, allow_nan=False) + "\n")


def write_table(table: figures.Table, out: Path, fmt: str | None):
    if fmt == "json":
        path = out / f"{table.name}.json"
        write_table_json(table, path)
    else:
        path = out / f"{table.name}.csv"
        write_csv(table, path)
    return [path]


def solution_record(sol) -> dict:
    """JSON-ready dump of a stationary solution (see data/solution.schema.json)."""
    n = sol.nmax
    return {
        "params": sol.params.as_dict(),
        "nmax": n,
        "buffer": int(sol.deviation.buffer),
        "d": [_json_number(x) for x in sol.deviation.d_ext[: n + 1]],
        "f11": [_json_number(x) for x in sol.f11.F[:n]],
        "rho11": [float(x) for x in sol.rho11],
        "rho22": [float(x) for x in sol.rho22],
        "rhof": [float(x) for x in sol.rhof.p],
        "ground_weight": float(sol.ground_weight),
        "diagnostics": {k: float(sol.diagnostics[k]) for k in ("pump_balance", "excited_field", "deviation_field", "ground_ladder")},
    }


def schema() -> dict:
    return json.loads(resources.files("ncslaser").joinpath("data/solution.schema.json").read_text())


def distributions_table(sol) -> figures.Table:
    t = figures.Table("distributions", ["n (photons)", "rho11 (probability)", "rho22 (probability)", "rhof (probability)"])
    for n in range(sol.nmax + 1):
        t.add(n, sol.rho11[n], sol.rho22[n], sol.rhof.p[n])
    return t


# commands ---------------------------------------------------------------


def cmd_solve(cfg: dict) -> list[Path]:
    p = normalized(parameter_source(cfg))
    sol = build_solution(p, cfg["tol"], cfg["nmax"])
    out = _outdir(cfg)
    written = []
    if cfg["format"] in (None, "json"):
        path = out / "solution.json"
        _write_json(solution_record(sol), path)
        written.append(path)
    if cfg["format"] in (None, "csv"):
        path = out / "distributions.csv"
        write_csv(distributions_table(sol), path)
        written.append(path)
    return written


def cmd_figure(name: str, cfg: dict) -> list[Path]:
    if name not in figures.FIGURES:
        raise UsageError(f"unknown figure {name!r}; expected one of {', '.join(figures.FIGURES)}")
    fn = figures.FIGURES[name]
    kwargs = {"tol": cfg["tol"], "jobs": cfg["jobs"]}
    if name in ("fig5", "fig6"):
        kwargs["s_tol"] = cfg["s_tol"]
    table = fn(**kwargs)
    return write_table(table, _outdir(cfg), cfg["format"])


def cmd_sweep(args, cfg: dict) -> list[Path]:
    base = normalized(parameter_source(cfg))
    if args.spacing == "log":
        if args.start <= 0 or args.stop <= 0:
            raise UsageError("log spacing needs positive --start and --stop")
        values = np.logspace(math.log10(args.start), math.log10(args.stop), args.points)
    else:
        values = np.linspace(args.start, args.stop, args.points)
    table = figures.sweep(base, args.param, values, cfg["tol"], cfg["jobs"], args.s0, cfg["s_tol"])
    return write_table(table, _outdir(cfg), cfg["format"])


def _check(name: str, value: float, tol: float, detail: str = "") -> dict:
    return {"name": name, "value": _json_number(value), "tolerance": tol, "passed": bool(value <= tol), "detail": detail}


def oracle_cutoff(rates: LaserRates) -> tuple[int, lv.OracleSolution]:
    """Smallest cutoff on the ORACLE_N grid whose leakage meets tolerance (or the cap)."""
    N = ORACLE_N_START
    while True:
        sol = lv.solve(rates, N)
        if sol.leakage <= ORACLE_LEAKAGE_TOL or N >= ORACLE_N_CAP:
            return N, sol
        N += ORACLE_N_STEP


def run_checks(source, tol: float = 1e-12, nmax=None) -> dict:
    """Residual suite plus oracle comparison; returns the report dictionary."""
    checks = []
    if isinstance(source, LaserRates) and source.g == 0:
        # no coupling: compare the oracle with the closed-form uncoupled state
        N = ORACLE_N_START if nmax is None else max(2, nmax)
        osol = lv.solve(source, N)
        r11, r22 = lv.uncoupled_state(source, N)
        err = max(np.max(np.abs(osol.rho11 - r11)), np.max(np.abs(osol.rho22 - r22)))
        checks.append(_check("uncoupled_closed_form", err, UNCOUPLED_TOL, f"ntrunc={N}"))
        checks.append(_check("oracle_residual", osol.residual, UNCOUPLED_TOL))
        report = {"params": {k: getattr(source, k) for k in RAW_KEYS}, "checks": checks}
    else:
        p = normalized(source)
        sol = build_solution(p, tol, nmax)
        table = sol.deviation
        checks.append(_check("deviation_residual", table.max_residual, DEVIATION_TOL))
        n = np.arange(1, table.nmax + 1)
        d = table.d_ext[1 : table.nmax + 1]
        inside = np.all(d > 0) and np.all(d < dev.upper_bound(p, n))
        checks.append(_check("deviation_bound", 0.0 if inside else 1.0, 0.0, "0 < d(n) < upper_bound(n), n >= 1"))
        for key, res in obs.balance_residuals(sol).items():
            checks.append(_check(key, float(np.max(res)) if len(res) else 0.0, RESIDUAL_TOL))
        checks.append(_check("truncation", sol.tail_bound, TAIL_TOL, f"nmax={sol.nmax}, omitted mass bound"))
        rates = p.to_rates() if isinstance(source, NormalizedParams) else source
        N, osol = oracle_cutoff(rates)
        checks.append(_check("oracle_leakage", osol.leakage, ORACLE_LEAKAGE_TOL, f"ntrunc={N}"))
        m = max(len(osol.rhof), len(sol.rhof.p))
        D = 0.5 * math.fsum(np.abs(sol.rhof.padded(m) - np.pad(osol.rhof, (0, m - len(osol.rhof)))))
        checks.append(_check("oracle_distance", D, ORACLE_DISTANCE_TOL, f"ntrunc={N}"))
        wider = lv.solve(rates, N + ORACLE_N_STEP)
        shift = float(np.max(np.abs(wider.rhof[: N + 1] - osol.rhof)))
        shift = max(shift, float(np.max(np.abs(wider.rhof[N + 1 :]))))
        checks.append(_check("oracle_robustness", shift, ORACLE_ROBUST_TOL, f"ntrunc {N} -> {N + ORACLE_N_STEP}"))
        report = {"params": p.as_dict(), "checks": checks}
    report["passed"] = all(c["passed"] for c in checks)
    report["failed"] = [c["name"] for c in checks if not c["passed"]]
    return report


def cmd_check(cfg: dict) -> tuple[list[Path], dict]:
    source = parameter_source(cfg)
    report = run_checks(source, cfg["tol"], cfg["nmax"])
    path = _outdir(cfg) / "check_report.json"
    _write_json(report, path)
    return [path], report


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors (exit 1) and --help (exit 0) come back as return codes
        return int(exc.code or 0)
    try:
        cfg = resolve(args)
        if args.command == "solve":
            written = cmd_solve(cfg)
        elif args.command == "figure":
            written = cmd_figure(args.name, cfg)
        elif args.command == "sweep":
            written = cmd_sweep(args, cfg)
        else:
            written, report = cmd_check(cfg)
            for c in report["checks"]:
                print(f"{'ok  ' if c['passed'] else 'FAIL'} {c['name']}: {c['value']!r} (tol {c['tolerance']:g}) {c['detail']}".rstrip())
            if not report["passed"]:
                print(f"check failed: {', '.join(report['failed'])}", file=sys.stderr)
                for path in written:
                    print(path)
                return EXIT_FAILED
    except (UsageError, InvalidParameterError) as exc:
        parser.print_usage(sys.stderr)
        print(f"ncslaser: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (dev.ConvergenceError, ArithmeticError, lv.RankDeficiencyError) as exc:
        print(f"ncslaser: convergence failure: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except OSError as exc:
        print(f"ncslaser: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
