"""Steady-state conditional blocks and field statistics built from the deviation table."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from . import deviation as dev
from .params import NormalizedParams, validate_normalized
from .precise import FieldSource, PoissonSource, ThermalSource

KINDS = ("ground", "excited", "field")
RATIO_STOP = 1e-4
TAIL_STOP = 1e-15
NORM_TOL = 1e-12


@dataclass(frozen=True)
class DeformationTable:
    """Deformation function F(n) for n = 1..nmax (``F[k]`` holds F(k+1))."""

    kind: str
    F: np.ndarray = field(repr=False)
    params: NormalizedParams

    @property
    def nmax(self) -> int:
        return len(self.F)

    def at(self, n: int) -> float:
        if not 1 <= n <= self.nmax:
            raise IndexError(f"F({n}) outside 1..{self.nmax}")
        return float(self.F[n - 1])


@dataclass(frozen=True)
class FockDistribution:
    """Normalized diagonal photon-number distribution p(0..nmax)."""

    p: np.ndarray = field(repr=False)
    tail_bound: float = 0.0
    label: str = "custom"
    # optional exact generator of the weights (see precise.WeightSource)
    source: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "p", p)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("distribution must be a non-empty 1-D sequence")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and >= 0")
        total = math.fsum(p)
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def from_weights(cls, w, tail_bound: float = 0.0, label: str = "custom", source=None) -> "FockDistribution":
        w = np.asarray(w, dtype=float)
        return cls(w / math.fsum(w), tail_bound, label, source)

    @classmethod
    def from_log_weights(cls, logw, tail_bound: float = 0.0, label: str = "custom", source=None) -> "FockDistribution":
        logw = np.asarray(logw, dtype=float)
        w = np.exp(logw - logsumexp(logw))
        return cls.from_weights(w, tail_bound, label, source)

    @classmethod
    def fock(cls, n: int) -> "FockDistribution":
        p = np.zeros(n + 1)
        p[n] = 1.0
        return cls(p, 0.0, f"fock{n}")

    @classmethod
    def poisson(cls, mean: float, nmax: int | None = None) -> "FockDistribution":
        if nmax is None:
            nmax = int(mean + 12 * math.sqrt(mean) + 40)
        n = np.arange(nmax + 1)
        if mean == 0:
            return cls.fock(0)
        logw = n * math.log(mean) - gammaln(n + 1)
        # geometric bound on the Poisson mass beyond nmax
        tail = math.exp((nmax + 1) * math.log(mean) - gammaln(nmax + 2) - mean) / (1 - mean / (nmax + 2))
        return cls.from_log_weights(logw, tail, "poisson", PoissonSource(mean))

    @classmethod
    def thermal(cls, x: float, nmax: int = 2000) -> "FockDistribution":
        n = np.arange(nmax + 1)
        return cls.from_weights(x**n, x ** (nmax + 1), "thermal", ThermalSource(x))

    @property
    def nmax(self) -> int:
        return len(self.p) - 1

    @property
    def certified(self) -> bool:
        """True when the omitted tail mass is below 1e-12."""
        return self.tail_bound <= 1e-12

    def padded(self, length: int) -> np.ndarray:
        out = np.zeros(max(length, len(self.p)))
        out[: len(self.p)] = self.p
        return out


@dataclass(frozen=True)
class SteadyStateSolution:
    """Stationary state: conditional blocks, field statistics, diagnostics.

    ``rho11`` and ``rho22`` are jointly normalized (their combined sum is 1);
    ``rhof`` is their elementwise sum.  The real coherence part vanishes and
    is not stored; the imaginary part is available as :meth:`u`.
    """

    params: NormalizedParams
    deviation: dev.DeviationTable
    f11: DeformationTable
    f22: DeformationTable
    ff: DeformationTable
    rho11: np.ndarray = field(repr=False)
    rho22: np.ndarray = field(repr=False)
    rhof: FockDistribution
    ground_weight: float
    tail_bound: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def nmax(self) -> int:
        return len(self.rho11) - 1

    def u(self) -> np.ndarray:
        return self.rhof.p / math.sqrt(self.params.eta)

    def ground(self) -> FockDistribution:
        return FockDistribution.from_weights(self.rho11, self.tail_bound, "rho11")

    def excited(self) -> FockDistribution:
        if self.ground_weight >= 1.0:
            raise ValueError("excited-state block is empty (zero pump)")
        return FockDistribution.from_weights(self.rho22, self.tail_bound, "rho22")


def zero_deviation(p: NormalizedParams, nmax: int) -> dev.DeviationTable:
    """d == 0 on 0..nmax+2: the strong-coupling approximation."""
    return dev.DeviationTable(p, nmax, 0, np.zeros(nmax + 3), "strong coupling (d = 0)", 0.0, 0.0)


def _phi_denominator(p: NormalizedParams, n: np.ndarray, d_n: np.ndarray) -> np.ndarray:
    return p.nu0 + 0.5 * n + 0.5 * n / (1.0 + d_n)


def deformation(kind: str, table: dev.DeviationTable, nmax: int | None = None) -> DeformationTable:
    """Deformation function of the ground, excited or field block.

    ground:  F11(n) = 1/2 + (1/2 + nu0/n)(1 + d(n))
    excited: F22(n) = F11(n) phi(n) / phi(n+1)
    field:   Ff(n)  = F11(n) (1 + phi(n)) / (1 + phi(n+1))
    """
    if kind not in KINDS:
        raise ValueError(f"unknown deformation kind {kind!r}; expected one of {KINDS}")
    p = table.params
    d_ext = table.d_ext
    if nmax is None:
        nmax = len(d_ext) - 2
    need = nmax + 1 if kind != "ground" else nmax
    if need > len(d_ext) - 1:
        raise ValueError(f"{kind} deformation up to n={nmax} needs d up to {need}")
    n = np.arange(1, nmax + 1, dtype=float)
    d = d_ext[1 : nmax + 1]
    f11 = 0.5 + (0.5 + p.nu0 / n) * (1.0 + d)
    if kind == "ground":
        F = f11
    else:
        d_next = d_ext[2 : nmax + 2]
        den = _phi_denominator(p, n, d)
        den_next = _phi_denominator(p, n + 1, d_next)
        if kind == "excited":
            # phi(n)/phi(n+1) does not depend on a0^2
            F = f11 * den_next / den
        else:
            F = f11 * (1.0 + p.a0sq / den) / (1.0 + p.a0sq / den_next)
    if np.any(F <= 0):
        raise dev.RecurrenceDomainError(f"non-positive {kind} deformation")
    return DeformationTable(kind, F, p)


def ncs_log_weights(a0sq: float, F: DeformationTable | np.ndarray, nmax: int) -> np.ndarray:
    """log of a0^(2n) / (n! prod_{m<=n} F(m)) for n = 0..nmax.

    These are the unnormalized squared Fock amplitudes of the eigenstate of
    sqrt(F(a a^dag)) a with eigenvalue a0.  Zero pump gives -inf for n >= 1.
    """
    Fv = F.F if isinstance(F, DeformationTable) else np.asarray(F, dtype=float)
    if len(Fv) < nmax:
        raise ValueError(f"deformation table holds F(1..{len(Fv)}), need up to {nmax}")
    Fv = Fv[:nmax]
    if np.any(Fv <= 0):
        raise ValueError("deformation must be positive")
    out = np.zeros(nmax + 1)
    if nmax == 0:
        return out
    if a0sq == 0:
        out[1:] = -np.inf
        return out
    n = np.arange(1, nmax + 1)
    out[1:] = n * math.log(a0sq) - np.cumsum(np.log(n) + np.log(Fv))
    return out


def _assemble(p: NormalizedParams, table: dev.DeviationTable, nmax: int) -> dict:
    """Raw log-weights and tail bounds on 0..nmax from a table reaching nmax+3."""
    f11 = deformation("ground", table, nmax + 3)
    log11 = ncs_log_weights(p.a0sq, f11, nmax + 3)
    d = table.d_ext
    log22 = log11[1:] + np.log1p(d[1 : nmax + 4])  # rho22(n), n = 0..nmax+2
    n1 = nmax + 1
    r11 = p.a0sq / ((n1 + 1) * f11.at(n1 + 1)) if p.a0sq else 0.0  # rho11(n+2)/rho11(n+1)
    r22 = math.exp(log22[n1 + 1] - log22[n1]) if p.a0sq else 0.0
    ratio = p.a0sq / (n1 * f11.at(n1)) if p.a0sq else 0.0
    with np.errstate(under="ignore"):
        tail11 = math.exp(log11[n1]) / (1 - r11) if r11 < 1 else math.inf
        tail22 = math.exp(log22[n1]) / (1 - r22) if r22 < 1 else math.inf
    return {
        "log11": log11[: nmax + 1],
        "log22": log22[: nmax + 1],
        "ratio": ratio,
        "tail": (tail11, tail22),
    }


def _finish(p, table, nmax, parts, label_f="rhof", with_diagnostics=True, source=None) -> SteadyStateSolution:
    log11, log22 = parts["log11"], parts["log22"]
    shift = max(np.max(log11), np.max(log22))
    with np.errstate(under="ignore"):
        w11 = np.exp(log11 - shift)
        w22 = np.exp(log22 - shift)
        tail = (parts["tail"][0] + parts["tail"][1]) * math.exp(-shift) if math.isfinite(shift) else 0.0
    total = math.fsum(w11) + math.fsum(w22)
    rho11 = w11 / total
    rho22 = w22 / total
    tail_rel = tail / total
    # drop trailing entries that underflowed in both blocks
    nz = np.nonzero((rho11 > 0) | (rho22 > 0))[0]
    last = int(nz[-1]) if len(nz) else 0
    last = max(last, 1) if nmax >= 1 else 0
    rho11, rho22 = rho11[: last + 1], rho22[: last + 1]
    s = math.fsum(rho11) + math.fsum(rho22)
    rho11, rho22 = rho11 / s, rho22 / s
    rhof = FockDistribution.from_weights(rho11 + rho22, tail_rel, label_f, source)
    sol = SteadyStateSolution(
        params=p,
        deviation=table,
        f11=deformation("ground", table, last),
        f22=deformation("excited", table, last),
        ff=deformation("field", table, last),
        rho11=rho11,
        rho22=rho22,
        rhof=rhof,
        ground_weight=math.fsum(rho11),
        tail_bound=tail_rel,
        diagnostics={},
    )
    if with_diagnostics:
        from .observables import balance_residuals

        res = balance_residuals(sol)
        sol.diagnostics.update({k: float(np.max(v)) if len(v) else 0.0 for k, v in res.items()})
        sol.diagnostics["deviation_max_residual"] = table.max_residual
        sol.diagnostics["deviation_seed_spread"] = table.seed_spread
        sol.diagnostics["tail_bound"] = tail_rel
    return sol


def build_solution(
    p: NormalizedParams,
    tol: float = 1e-12,
    nmax: int | None = None,
    with_diagnostics: bool = True,
) -> SteadyStateSolution:
    """Exact stationary state on a truncation chosen adaptively.

    With ``nmax=None`` the truncation doubles until the one-step ratio
    rho11(n+1)/rho11(n) drops below 1e-4 and the geometric tail estimate
    falls below 1e-15 of the total mass.  A fixed ``nmax`` is honoured as
    given and the resulting tail bound is recorded instead.
    """
    validate_normalized(p)
    if p.a0sq == 0:
        table = dev.solve(p, 3, tol)
        parts = _assemble(p, table, 1)
        return _finish(p, table, 1, parts, with_diagnostics=with_diagnostics, source=FieldSource(p))
    n = 32 if nmax is None else nmax
    while True:
        table = dev.solve(p, n + 3, tol)
        parts = _assemble(p, table, n)
        if nmax is not None:
            break
        total_log = logsumexp(np.concatenate([parts["log11"], parts["log22"]]))
        tail = parts["tail"][0] + parts["tail"][1]
        tail_rel = tail / math.exp(total_log) if math.isfinite(total_log) else 0.0
        if parts["ratio"] < RATIO_STOP and tail_rel < TAIL_STOP:
            break
        n *= 2
    return _finish(p, table, n, parts, with_diagnostics=with_diagnostics, source=FieldSource(p))


def strong_coupling_state(p: NormalizedParams, nmax: int | None = None) -> SteadyStateSolution:
    """Same construction with d == 0 (the strong-coupling approximation)."""
    validate_normalized(p)
    if p.a0sq == 0:
        n = 1
        table = zero_deviation(p, 4)
        return _finish(p, table, n, _assemble(p, table, n), "rho_sc", False, FieldSource(p, zero_deviation=True))
    n = 32 if nmax is None else nmax
    while True:
        table = zero_deviation(p, n + 3)
        parts = _assemble(p, table, n)
        if nmax is not None:
            break
        total = math.exp(logsumexp(np.concatenate([parts["log11"], parts["log22"]])))
        if parts["ratio"] < RATIO_STOP and sum(parts["tail"]) / total < TAIL_STOP:
            break
        n *= 2
    return _finish(p, table, n, parts, "rho_sc", False, FieldSource(p, zero_deviation=True))


def strong_coupling_solution(
    p: NormalizedParams, tol: float = 1e-12, block: str = "field"
) -> FockDistribution:
    """Strong-coupling distribution rho_SC.

    ``block="field"`` gives the field statistics rho11 + rho22 with d == 0,
    the approximate counterpart of the exact field state.  ``block="ground"``
    gives the normalized ground-conditional block, i.e. the phase-averaged
    eigenstate of the undeformed-by-d operator (Poisson for nu0 = 0,
    Mittag-Leffler otherwise).
    """
    sol = strong_coupling_state(p)
    if block == "field":
        return sol.rhof
    if block == "ground":
        return FockDistribution.from_weights(sol.rho11, sol.tail_bound, "rho_sc")
    raise ValueError(f"block must be 'field' or 'ground', got {block!r}")
