"""Photon statistics, stationarity residuals and effective transition rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import deviation as dev
from .params import NormalizedParams
from .state import FockDistribution, SteadyStateSolution

RESIDUAL_FLOOR = 1e-30


def trace_distance_diagonal(a: FockDistribution, b: FockDistribution) -> float:
    """Half the l1 distance between two commuting (diagonal) states."""
    m = max(len(a.p), len(b.p))
    return 0.5 * math.fsum(np.abs(a.padded(m) - b.padded(m)))


def mean_photon(d: FockDistribution) -> float:
    n = np.arange(len(d.p))
    return math.fsum(n * d.p)


def g2(d: FockDistribution) -> float:
    """Zero-delay intensity correlation <n(n-1)> / <n>^2."""
    mean = mean_photon(d)
    if mean <= 0:
        raise ValueError("g2 is undefined for the vacuum (mean photon number 0)")
    n = np.arange(len(d.p))
    return math.fsum(n * (n - 1) * d.p) / mean**2


def _relative(lhs: np.ndarray, rhs: np.ndarray, *terms: np.ndarray) -> np.ndarray:
    # scale by the largest term involved so exact cancellations (0 = a - b) stay relative
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    for t in terms:
        scale = np.maximum(scale, np.abs(t))
    scale = np.maximum(scale, RESIDUAL_FLOOR)
    return np.abs(lhs - rhs) / scale


def balance_residuals(sol: SteadyStateSolution) -> dict[str, np.ndarray]:
    """Elementwise relative residuals of the four stationarity relations.

    pump_balance:    (2 nu0 + n + 1) rho22(n) = 2 a0^2 rho11(n) - (n+1) rho11(n+1)
    excited_field:   rho22(n) = rho11(n+1) + (2/eta)[(mu0+n+1) rhof(n+1) - (n+2) rhof(n+2)]
    deviation_field: d(n) rho11(n) = (2/eta)[(mu0+n) rhof(n) - (n+1) rhof(n+1)]
    ground_ladder:   (n+1) F11(n+1) rho11(n+1) = a0^2 rho11(n)
    """
    p = sol.params
    r11, r22, rf = sol.rho11, sol.rho22, sol.rhof.p
    N = len(r11) - 1
    if N < 2:
        return {k: np.zeros(0) for k in ("pump_balance", "excited_field", "deviation_field", "ground_ladder")}
    d = sol.deviation.d_ext
    k = 2.0 / p.eta

    n = np.arange(N, dtype=float)  # 0..N-1
    lhs7 = (2 * p.nu0 + n + 1) * r22[:N]
    a7, b7 = 2 * p.a0sq * r11[:N], (n + 1) * r11[1:]
    pump_balance = _relative(lhs7, a7 - b7, a7, b7)

    m = np.arange(N - 1, dtype=float)  # 0..N-2
    a8 = r11[1:N]
    b8 = k * (p.mu0 + m + 1) * rf[1:N]
    c8 = k * (m + 2) * rf[2:]
    excited_field = _relative(r22[: N - 1], a8 + b8 - c8, a8, b8, c8)

    lhs9 = d[:N] * r11[:N]
    a9, b9 = k * (p.mu0 + n) * rf[:N], k * (n + 1) * rf[1:]
    deviation_field = _relative(lhs9, a9 - b9, a9, b9)

    f11 = np.array([sol.f11.at(i) for i in range(1, N + 1)])
    lhs11 = (n + 1) * f11 * r11[1:]
    ground_ladder = _relative(lhs11, p.a0sq * r11[:N])
    return {"pump_balance": pump_balance, "excited_field": excited_field, "deviation_field": deviation_field, "ground_ladder": ground_ladder}


def field_ratios(table: dev.DeviationTable, upto: int) -> np.ndarray:
    """rhof(n+1)/rhof(n) for n = 0..upto, straight from d (no underflow).

    rhof(n+1)/rhof(n) = a0^2 / ((n+1) F11(n+1)) * (1 + phi(n+2)) / (1 + phi(n+1))
    """
    p = table.params
    if upto + 2 > len(table.d_ext) - 1:
        raise ValueError(f"table too short for ratios up to n={upto}")
    n1 = np.arange(1, upto + 2, dtype=float)  # n+1
    d1 = table.d_ext[1 : upto + 2]
    d2 = table.d_ext[2 : upto + 3]
    f11 = 0.5 + (0.5 + p.nu0 / n1) * (1 + d1)
    phi1 = dev.phi(p, n1, d1)
    phi2 = dev.phi(p, n1 + 1, d2)
    return p.a0sq / (n1 * f11) * (1 + phi2) / (1 + phi1)


@dataclass(frozen=True)
class TransitionProfile:
    """Effective transition probability w_n in units of g^2/kappa."""

    w: np.ndarray = field(repr=False)
    params: NormalizedParams
    source: str
    balance_residual: np.ndarray = field(repr=False)

    @property
    def n(self) -> np.ndarray:
        return np.arange(len(self.w))

    @property
    def total(self) -> np.ndarray:
        return (self.n + 1) * self.w


def effective_w(sol: SteadyStateSolution, n_max: int | None = None) -> TransitionProfile:
    """Intensity-dependent w_n making the photon balance hold exactly.

    w_n = [mu0 + (n+1) - (n+2) rhof(n+2)/rhof(n+1)]^-1, with the field
    ratio taken from d(n) so that n can run far past the representable
    part of the distribution.  The photon-balance identity
    (n+1) w_n [rho22(n) - rho11(n+1)] = 2 kappa (n+1) rhof(n+1), divided
    through by rho11(n+1), reads w_n eta d(n+1) = 2 (1 + phi(n+2)); its
    relative residual is stored alongside.
    """
    p = sol.params
    table = sol.deviation
    if n_max is None:
        n_max = sol.nmax
    if n_max + 4 > len(table.d_ext) - 1:
        table = dev.solve(p, n_max + 4)
    ratios = field_ratios(table, n_max + 1)
    n = np.arange(n_max + 1, dtype=float)
    bracket = p.mu0 + (n + 1) - (n + 2) * ratios[1 : n_max + 2]
    bad = np.nonzero(bracket <= 0)[0]
    if len(bad):
        raise ArithmeticError(f"non-positive w_n denominator at n={int(bad[0])}")
    w = 1.0 / bracket
    d1 = table.d_ext[1 : n_max + 2]
    lhs = w * p.eta * d1
    rhs = 2.0 * (1.0 + dev.phi(p, n + 2, table.d_ext[2 : n_max + 3]))
    balance = np.abs(lhs - rhs) / np.maximum(np.abs(lhs), np.abs(rhs))
    return TransitionProfile(w, p, sol.rhof.label, balance)


def photon_balance_residual(sol: SteadyStateSolution, prof: TransitionProfile) -> np.ndarray:
    """Photon-balance residual on the raw distribution, where it is resolvable.

    Evaluated only for n with rhof(n+1) above 1e-30 of the peak.
    """
    p = sol.params
    rf = sol.rhof.p
    ok = rf > RESIDUAL_FLOOR * rf.max()
    N = min(len(prof.w), len(rf) - 1)
    out = []
    for n in range(N):
        if not ok[n + 1]:
            break
        lhs = (n + 1) * prof.w[n] * p.eta * (sol.rho22[n] - sol.rho11[n + 1])
        rhs = 2.0 * (n + 1) * rf[n + 1]
        out.append(abs(lhs - rhs) / max(abs(lhs), abs(rhs), RESIDUAL_FLOOR))
    return np.array(out)


def w_asymptotic(p: NormalizedParams, n):
    """Large-n expansion 1/n - (1 + mu0 - a0^2 eta/(n + eta)) / n^2 (units g^2/kappa)."""
    n = np.asarray(n, dtype=float)
    out = 1.0 / n - (1.0 + p.mu0 - p.a0sq * p.eta / (n + p.eta)) / n**2
    return float(out) if out.ndim == 0 else out


def conventional_balance(w_const: float, mean_n: float, p1: float, p2: float, kappa: float) -> float:
    """Mismatch of net stimulated emission against cavity loss for constant w."""
    return w_const * (mean_n + 1) * (p2 - p1) - 2 * kappa * (mean_n + 1) * (p1 + p2)


def excess_tail_mass(exact: FockDistribution, approx: FockDistribution) -> tuple[int, float]:
    """Mass of ``approx`` beyond the point where its decay becomes slower.

    Returns the first index n* above the peak of ``exact`` from which the
    one-step ratio of ``approx`` stays larger than that of ``exact``, and the
    mass of ``approx`` on n > n*.
    """
    m = max(len(exact.p), len(approx.p))
    pe, pa = exact.padded(m), approx.padded(m)
    start = int(np.argmax(pe))
    cross = None
    for n in range(start, m - 1):
        if pe[n] <= 0 or pa[n] <= 0:
            break
        if pe[n + 1] / pe[n] < pa[n + 1] / pa[n]:
            cross = n
            break
    if cross is None:
        return m - 1, 0.0
    return cross, math.fsum(pa[cross + 1 :])
