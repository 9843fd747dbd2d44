"""Deviation function d(n) from its backward three-term recurrence.

d(n) measures how far the excited-state statistics rho22(n) depart from the
shifted ground-state statistics rho11(n+1); d = 0 is the strong-coupling
limit.  The recurrence runs downward, d(n) from d(n+1) and d(n+2), and is
contracting in that direction, so arbitrary positive starting values far
above the range of interest converge to the unique stationary solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import NormalizedParams, validate_normalized

DEFAULT_BUFFER = 20
MAX_BUFFER = 2**14
SEED_RATIO = 100.0


class ConvergenceError(RuntimeError):
    """Backward sweeps from different seeds failed to agree."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


class RecurrenceDomainError(ArithmeticError):
    """A recurrence input or output left its admissible range."""


def phi(p: NormalizedParams, n, d_n):
    """Pump-to-saturation ratio phi(n) = a0^2 / (F11(n) * n / (1 + d(n))).

    Uses the simplified denominator nu0 + n/2 + (n/2)/(1 + d(n)), which is
    algebraically identical and free of the 0/0 at intermediate steps.
    Works elementwise on arrays.
    """
    n = np.asarray(n, dtype=float)
    d_n = np.asarray(d_n, dtype=float)
    if np.any(n < 1):
        raise RecurrenceDomainError("phi(n) is defined for n >= 1 only")
    if np.any(d_n <= -1):
        raise RecurrenceDomainError("phi(n) needs d(n) > -1")
    denom = p.nu0 + 0.5 * n + 0.5 * n / (1.0 + d_n)
    if np.any(denom <= 0):
        raise RecurrenceDomainError(f"non-positive phi denominator at n={n}")
    out = p.a0sq / denom
    return float(out) if out.ndim == 0 else out


def ntilde(n, d_n):
    """Effective photon number n / (1 + d(n))."""
    return np.asarray(n, dtype=float) / (1.0 + np.asarray(d_n, dtype=float))


def upper_bound(p: NormalizedParams, n):
    """Strict upper bound on d(n) valid for any positive recurrence inputs.

    At n = 0 with nu0 = -1/2 the pump denominator vanishes and the bound is
    reported as +inf.
    """
    n = np.asarray(n, dtype=float)
    denom = 2.0 * p.nu0 + n + 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        pump = np.where(denom > 0, 2.0 * p.a0sq / np.where(denom > 0, denom, 1.0), np.inf)
        if p.a0sq == 0:
            pump = np.zeros_like(n)
        out = (2.0 / p.eta) * (p.mu0 + n) * (1.0 + pump)
    return float(out) if out.ndim == 0 else out


def asymptotic(p: NormalizedParams, n):
    """Large-n expansion (2/eta)(n + mu0 + 2 a0^2 n / (n + eta)), no O(1/n) term."""
    n = np.asarray(n, dtype=float)
    out = (2.0 / p.eta) * (n + p.mu0 + p.a0sq * 2.0 * n / (n + p.eta))
    return float(out) if out.ndim == 0 else out


def _step(p: NormalizedParams, n: int, d1: float, d2: float) -> float:
    # hot loop: scalar arithmetic only
    m1 = n + 1
    m2 = n + 2
    phi1 = p.a0sq / (p.nu0 + 0.5 * m1 + 0.5 * m1 / (1.0 + d1))
    phi2 = p.a0sq / (p.nu0 + 0.5 * m2 + 0.5 * m2 / (1.0 + d2))
    nt1 = m1 / (1.0 + d1)
    return (2.0 / p.eta) * ((p.mu0 + n) * (1.0 + phi1) - nt1 * phi1 * (1.0 + phi2))


def _step_scale(p: NormalizedParams, n: int, d1: float, d2: float) -> float:
    # size of the larger of the two competing terms; a safe relative scale even if d(0) ~ 0
    m1 = n + 1
    phi1 = p.a0sq / (p.nu0 + 0.5 * m1 + 0.5 * m1 / (1.0 + d1))
    phi2 = p.a0sq / (p.nu0 + 0.5 * (n + 2) + 0.5 * (n + 2) / (1.0 + d2))
    gain = abs(p.mu0 + n) * (1.0 + phi1)
    loss = m1 / (1.0 + d1) * phi1 * (1.0 + phi2)
    return (2.0 / p.eta) * max(gain, loss)


def recurrence_step(p: NormalizedParams, n: int, d_next: float, d_next2: float) -> float:
    """One downward step: d(n) from d(n+1) and d(n+2).

    The result must lie in (0, upper_bound) for n >= 1.  d(0) does not
    relate two populations and is only bounded above.
    """
    if n < 0:
        raise RecurrenceDomainError(f"n must be >= 0, got {n}")
    if not (d_next > 0 and d_next2 > 0):
        raise RecurrenceDomainError(
            f"recurrence inputs must be positive, got d(n+1)={d_next!r}, d(n+2)={d_next2!r}"
        )
    value = _step(p, n, d_next, d_next2)
    ub = upper_bound(p, n)
    if p.a0sq == 0:
        return value
    lower_ok = value > 0 or n == 0
    if not (lower_ok and value < ub * (1 + 1e-12)):
        raise RecurrenceDomainError(f"d({n})={value!r} outside (0, {ub!r})")
    return value


def refined_bounds(p: NormalizedParams, n: int) -> tuple[float, float]:
    """Range of d(n) after one step from any d(n+1), d(n+2) inside their bounds.

    The step is increasing in d(n+1) and decreasing in d(n+2), so the
    extremes sit at opposite corners of the input box.  This is one
    interval-propagation refinement of the plain bound, not a closed form.
    """
    ub1 = upper_bound(p, n + 1)
    ub2 = upper_bound(p, n + 2)
    lo = _step(p, n, 0.0, ub2)
    hi = _step(p, n, ub1, 0.0)
    return max(lo, 0.0), hi


def backward_sweep(p: NormalizedParams, n_start: int, seed_next: float, seed_next2: float) -> np.ndarray:
    """d(0..n_start) from seeds placed at n_start+1 and n_start+2.

    Returns an array of length n_start + 3 whose last two entries are the
    seeds themselves.
    """
    if not (seed_next > 0 and seed_next2 > 0):
        raise RecurrenceDomainError("seeds must be positive")
    out = np.empty(n_start + 3)
    out[n_start + 1] = seed_next
    out[n_start + 2] = seed_next2
    d1, d2 = seed_next, seed_next2
    for n in range(n_start, -1, -1):
        d0 = _step(p, n, d1, d2)
        # d(0) only closes the n = 0 balance and may be negative when mu0 < 0
        if n > 0 and not d0 > 0:
            raise RecurrenceDomainError(f"sweep produced non-positive d({n})={d0!r}")
        out[n] = d0
        d1, d2 = d0, d1
    return out


def _max_rel_diff(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.maximum(np.abs(a), np.abs(b))
    scale[scale == 0] = 1.0
    return float(np.max(np.abs(a - b) / scale))


@dataclass(frozen=True)
class DeviationTable:
    """Converged d(n) on 0..nmax plus the two values above it."""

    params: NormalizedParams
    nmax: int
    buffer: int
    d_ext: np.ndarray = field(repr=False)
    seed_policy: str
    seed_spread: float
    max_residual: float

    @property
    def d(self) -> np.ndarray:
        return self.d_ext[: self.nmax + 1]

    def __len__(self):
        return self.nmax + 1

    def value(self, n: int) -> float:
        if not 0 <= n < len(self.d_ext):
            raise IndexError(f"d({n}) not available (table holds 0..{len(self.d_ext) - 1})")
        return float(self.d_ext[n])

    def phi(self, n: int) -> float:
        return phi(self.params, n, self.value(n))

    def ntilde(self, n: int) -> float:
        return float(ntilde(n, self.value(n)))

    def phis(self) -> np.ndarray:
        """phi(n) for n = 1..nmax+2 (index 0 holds nan)."""
        n = np.arange(1, len(self.d_ext))
        out = np.full(len(self.d_ext), np.nan)
        out[1:] = phi(self.params, n, self.d_ext[1:])
        return out


def _residuals(p: NormalizedParams, d_ext: np.ndarray, upto: int) -> np.ndarray:
    res = np.empty(upto + 1)
    for n in range(upto + 1):
        ref = _step(p, n, d_ext[n + 1], d_ext[n + 2])
        res[n] = abs(d_ext[n] - ref) / max(abs(ref), _step_scale(p, n, d_ext[n + 1], d_ext[n + 2]))
    return res


def solve(
    p: NormalizedParams,
    nmax: int,
    tol: float = 1e-12,
    buffer: int = DEFAULT_BUFFER,
    max_buffer: int = MAX_BUFFER,
) -> DeviationTable:
    """Seed-independent d(n) for n = 0..nmax (and nmax+1, nmax+2).

    Two backward sweeps start ``buffer`` steps above the range, one seeded
    with the asymptotic expansion and one with 100 times that.  The buffer
    doubles until both sweeps agree to ``tol`` (max relative difference);
    the first sweep is returned.
    """
    validate_normalized(p)
    if nmax < 0:
        raise ValueError(f"nmax must be >= 0, got {nmax}")
    if not 0 < tol <= 1e-6:
        raise ValueError(f"tol must lie in (0, 1e-6], got {tol}")
    if buffer < 2:
        raise ValueError("buffer must be >= 2")
    n_top = nmax + 2
    if p.a0sq == 0:
        d_ext = (2.0 / p.eta) * (p.mu0 + np.arange(n_top + 1, dtype=float))
        return DeviationTable(p, nmax, 0, d_ext, "closed form (zero pump)", 0.0, 0.0)
    history = []
    while True:
        n_start = n_top + buffer
        seed_a = (asymptotic(p, n_start + 1), asymptotic(p, n_start + 2))
        sweep_a = backward_sweep(p, n_start, *seed_a)
        sweep_b = backward_sweep(p, n_start, SEED_RATIO * seed_a[0], SEED_RATIO * seed_a[1])
        spread = _max_rel_diff(sweep_a[: n_top + 1], sweep_b[: n_top + 1])
        history.append((buffer, spread))
        if spread <= tol:
            break
        buffer *= 2
        if buffer > max_buffer:
            raise ConvergenceError(
                f"seed sweeps still differ by {spread:.3e} with buffer {buffer // 2}",
                {"params": p.as_dict(), "nmax": nmax, "tol": tol, "history": history},
            )
    d_ext = sweep_a[: n_top + 1].copy()
    res = _residuals(p, sweep_a, nmax)
    policy = f"asymptotic seeds at n={n_start + 1},{n_start + 2}; check seeds x{SEED_RATIO:g}"
    return DeviationTable(p, nmax, buffer, d_ext, policy, spread, float(res.max()))


def residual(table: DeviationTable, n: int) -> float:
    """Relative mismatch between stored d(n) and one step from d(n+1), d(n+2)."""
    if not 0 <= n <= table.nmax:
        raise IndexError(f"residual index {n} outside 0..{table.nmax}")
    d1, d2 = table.value(n + 1), table.value(n + 2)
    ref = _step(table.params, n, d1, d2)
    return abs(table.value(n) - ref) / max(abs(ref), _step_scale(table.params, n, d1, d2))


def error_profile(p: NormalizedParams, n_start: int, rel_error: float = 0.1) -> np.ndarray:
    """Relative deviation from the converged d(n), n = 0..n_start, after
    seeding the sweep with values off by ``rel_error``."""
    ref = solve(p, n_start + 2)
    seeded = backward_sweep(
        p, n_start, ref.value(n_start + 1) * (1 + rel_error), ref.value(n_start + 2) * (1 + rel_error)
    )
    exact = ref.d_ext[: n_start + 1]
    return np.abs(seeded[: n_start + 1] - exact) / np.maximum(np.abs(exact), 1e-300)


def contraction_factor(p: NormalizedParams, n_start: int = 60, rel_error: float = 0.1) -> float:
    """Empirical per-step error reduction of the downward sweep.

    Geometric mean of err(n)/err(n+1) over the steps where the error is
    still well above round-off.
    """
    err = error_profile(p, n_start, rel_error)
    ratios = []
    for n in range(n_start - 1, -1, -1):
        if err[n] < 1e-13 or err[n + 1] < 1e-13:
            break
        ratios.append(err[n] / err[n + 1])
    if not ratios:
        return 0.0
    return float(math.exp(np.mean(np.log(ratios))))
