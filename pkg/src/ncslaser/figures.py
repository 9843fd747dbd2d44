"""Tabular datasets for the fig1..fig6 commands, plus the generic sweep.

Every builder returns a :class:`Table`; writing is left to the caller so
that all file output comes from a single place.  Independent points are
farmed out through ``pmap``, which keeps results in input order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import deviation as dev
from . import observables as obs
from . import phasespace as ps
from .params import NormalizedParams
from .state import build_solution, strong_coupling_solution

FIG1 = NormalizedParams(a0sq=1.0, nu0=1.0, mu0=3.0, eta=5.0)
FIG1_N = 40
FIG1_RUNS = ((60, 1.0), (80, 100.0))  # (n_start, seed multiple of the asymptotic value)

FIG2_SETS = {
    "coherent": NormalizedParams(a0sq=1.0, nu0=1.0, mu0=3.0, eta=5.0),
    "dephasing": NormalizedParams(a0sq=5.0, nu0=5.0, mu0=200.0, eta=5.0),
}
FIG2_N = 300

FIG3_SETS = {
    "a5_nu0_eta30": NormalizedParams(a0sq=5.0, nu0=0.0, mu0=5.0, eta=30.0),
    "a5_nu0_eta200": NormalizedParams(a0sq=5.0, nu0=0.0, mu0=5.0, eta=200.0),
    "a1_nu1_eta5": NormalizedParams(a0sq=1.0, nu0=1.0, mu0=3.0, eta=5.0),
    "a1_nu1_eta15": NormalizedParams(a0sq=1.0, nu0=1.0, mu0=3.0, eta=15.0),
    "a1_nu1_eta50": NormalizedParams(a0sq=1.0, nu0=1.0, mu0=3.0, eta=50.0),
}

FIG4_FAMILIES = ((0.0, 5.0), (1.0, 1.0))  # (nu0, a0sq)
FIG4_MU0 = (5.0, 10.0)
FIG4_ETA = (5.0, 15.0, 50.0, 200.0)

FIG5_A0SQ = 1.0
FIG5_NU0 = (-0.5, -0.25, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0)
FIG5_ETA = (5.0, 50.0)

FIG6_NU0 = (1.0, 0.0, -0.5)
FIG6_ETA = 50.0
FIG6_A0SQ = tuple(float(x) for x in np.logspace(-1, 1, 9))

SWEEP_PARAMS = ("a0sq", "nu0", "mu0", "eta")


@dataclass
class Table:
    """Column headers (with units) and rows of equal length."""

    name: str
    columns: list[str]
    rows: list[tuple] = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values, table {self.name} has {len(self.columns)} columns")
        self.rows.append(tuple(values))


def pmap(fn, items, jobs: int = 1) -> list:
    """``map`` over independent points, in input order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def fig1(tol: float = 1e-12, jobs: int = 1) -> Table:
    p = FIG1
    table = dev.solve(p, FIG1_N, tol)
    runs = []
    for n_start, mult in FIG1_RUNS:
        seeds = (mult * dev.asymptotic(p, n_start + 1), mult * dev.asymptotic(p, n_start + 2))
        runs.append(dev.backward_sweep(p, n_start, *seeds))
    cols = [
        "n (photons)",
        "d (dimensionless)",
        "lower (dimensionless)",
        "upper (dimensionless)",
        "asymptotic (dimensionless)",
    ]
    cols += [f"d_start{n}_x{m:g} (dimensionless)" for n, m in FIG1_RUNS]
    cols += ["refined_lower (dimensionless)", "refined_upper (dimensionless)"]
    t = Table("fig1", cols)
    for n in range(FIG1_N + 1):
        lo, hi = dev.refined_bounds(p, n)
        t.add(
            n,
            table.value(n),
            0.0,
            float(dev.upper_bound(p, n)),
            float(dev.asymptotic(p, n)),
            *(float(r[n]) for r in runs),
            lo,
            hi,
        )
    return t


def _fig2_set(item):
    name, p, tol = item
    sol = build_solution(p, tol)
    prof = obs.effective_w(sol, FIG2_N)
    n = np.arange(FIG2_N + 1, dtype=float)
    asym = np.full_like(n, math.nan)
    asym[1:] = obs.w_asymptotic(p, n[1:])
    const = prof.w[0]
    return [(name, int(k), float(prof.total[k]), float((k + 1) * asym[k]), float((k + 1) * const)) for k in range(FIG2_N + 1)]


def fig2(tol: float = 1e-12, jobs: int = 1) -> Table:
    t = Table(
        "fig2",
        ["set", "n (photons)", "total_w_exact (g^2/kappa)", "total_w_asymptotic (g^2/kappa)", "total_w_const (g^2/kappa)"],
    )
    for rows in pmap(_fig2_set, [(k, p, tol) for k, p in FIG2_SETS.items()], jobs):
        t.rows.extend(rows)
    return t


def _fig3_set(item):
    name, p, tol = item
    sol = build_solution(p, tol)
    sc = strong_coupling_solution(p, tol)
    m = max(len(sol.rhof.p), len(sc.p))
    r11 = np.zeros(m)
    r22 = np.zeros(m)
    r11[: len(sol.rho11)] = sol.rho11
    r22[: len(sol.rho22)] = sol.rho22
    rf = sol.rhof.padded(m)
    rsc = sc.padded(m)
    return [(name, n, float(r11[n]), float(r22[n]), float(rf[n]), float(rsc[n])) for n in range(m)]


def fig3(tol: float = 1e-12, jobs: int = 1) -> Table:
    t = Table(
        "fig3",
        [
            "set",
            "n (photons)",
            "rho11 (probability)",
            "rho22 (probability)",
            "rhof (probability)",
            "rho_sc (probability)",
        ],
    )
    for rows in pmap(_fig3_set, [(k, p, tol) for k, p in FIG3_SETS.items()], jobs):
        t.rows.extend(rows)
    return t


def fig4_points() -> list[NormalizedParams]:
    return [
        NormalizedParams(a0sq=a0sq, nu0=nu0, mu0=mu0, eta=eta)
        for nu0, a0sq in FIG4_FAMILIES
        for mu0 in FIG4_MU0
        for eta in FIG4_ETA
    ]


def trace_distance_sc(p: NormalizedParams, tol: float = 1e-12) -> float:
    """D(rhof, rho_SC) for one parameter set."""
    return obs.trace_distance_diagonal(build_solution(p, tol).rhof, strong_coupling_solution(p, tol))


def _fig4_point(item):
    p, tol = item
    return trace_distance_sc(p, tol)


def fig4(tol: float = 1e-12, jobs: int = 1) -> Table:
    t = Table(
        "fig4",
        ["nu0 (dimensionless)", "a0sq (dimensionless)", "mu0 (dimensionless)", "eta (dimensionless)", "trace_distance (dimensionless)"],
    )
    pts = fig4_points()
    for p, D in zip(pts, pmap(_fig4_point, [(p, tol) for p in pts], jobs)):
        t.add(p.nu0, p.a0sq, p.mu0, p.eta, D)
    return t


def _s0_point(item):
    p, kind, tol, s_tol = item
    if kind == "sc":
        d = strong_coupling_solution(p, tol)
    else:
        d = build_solution(p, tol).rhof
    return ps.s0_search(d, tol_s=s_tol).s0


def fig5(tol: float = 1e-12, jobs: int = 1, s_tol: float = 1e-3) -> Table:
    cols = ["nu0 (dimensionless)"]
    cols += [f"s0_eta{e:g} (dimensionless)" for e in FIG5_ETA]
    cols += ["s0_sc (dimensionless)"]
    t = Table("fig5", cols)
    items = []
    for nu0 in FIG5_NU0:
        for eta in FIG5_ETA:
            items.append((NormalizedParams(FIG5_A0SQ, nu0, FIG5_A0SQ + 1.0 + nu0, eta), "exact", tol, s_tol))
        # eta does not enter the strong-coupling state
        items.append((NormalizedParams(FIG5_A0SQ, nu0, FIG5_A0SQ + 1.0 + nu0, FIG5_ETA[0]), "sc", tol, s_tol))
    s0 = pmap(_s0_point, items, jobs)
    k = len(FIG5_ETA) + 1
    for i, nu0 in enumerate(FIG5_NU0):
        t.add(nu0, *s0[i * k : (i + 1) * k])
    return t


def fig6_points() -> list[NormalizedParams]:
    return [NormalizedParams(a0sq, nu0, a0sq + nu0, FIG6_ETA) for nu0 in FIG6_NU0 for a0sq in FIG6_A0SQ]


def _fig6_point(item):
    p, tol, s_tol = item
    rhof = build_solution(p, tol).rhof
    return ps.s0_search(rhof, tol_s=s_tol).s0, obs.g2(rhof)


def fig6(tol: float = 1e-12, jobs: int = 1, s_tol: float = 1e-3) -> Table:
    t = Table("fig6", ["nu0 (dimensionless)", "a0sq (dimensionless)", "s0 (dimensionless)", "g2 (dimensionless)"])
    pts = fig6_points()
    for p, (s0, g) in zip(pts, pmap(_fig6_point, [(p, tol, s_tol) for p in pts], jobs)):
        t.add(p.nu0, p.a0sq, s0, g)
    return t


FIGURES = {"fig1": fig1, "fig2": fig2, "fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6}


def _sweep_point(item):
    p, tol, with_s0, s_tol = item
    sol = build_solution(p, tol)
    sc = strong_coupling_solution(p, tol)
    rf = sol.rhof
    mean = obs.mean_photon(rf)
    row = [
        mean,
        obs.g2(rf) if mean > 0 else math.nan,
        sol.ground_weight,
        obs.trace_distance_diagonal(rf, sc),
    ]
    if with_s0:
        row.append(ps.s0_search(rf, tol_s=s_tol).s0)
    return tuple(row)


def sweep(
    base: NormalizedParams,
    param: str,
    values,
    tol: float = 1e-12,
    jobs: int = 1,
    with_s0: bool = False,
    s_tol: float = 1e-3,
) -> Table:
    """Observables of the exact field state along one normalized parameter."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMS}, got {param!r}")
    cols = [
        f"{param} (dimensionless)",
        "mean_n (photons)",
        "g2 (dimensionless)",
        "ground_weight (probability)",
        "trace_distance_sc (dimensionless)",
    ]
    if with_s0:
        cols.append("s0 (dimensionless)")
    t = Table("sweep", cols)
    pts = [NormalizedParams(**{**base.as_dict(), param: float(v)}) for v in values]
    for p, row in zip(pts, pmap(_sweep_point, [(p, tol, with_s0, s_tol) for p in pts], jobs)):
        t.add(getattr(p, param), *row)
    return t
