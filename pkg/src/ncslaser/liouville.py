"""Brute-force steady state of the full master equation.

The truncated Liouvillian is built from sparse ladder and two-level
matrices and applied to a basis of the phase-symmetric sector: diagonal
populations |n,g><n,g|, |n,e><n,e| and the imaginary coherence
i|n,e><n+1,g| + h.c.  The sector generator is read off numerically, so no
hand-derived sector equations enter; closure of the sector is measured.

Conventions: atom basis index 0 = ground |1>, 1 = excited |2>; composite
index = 2*n + atom.  H = g (a^dag s- + a s+), dissipators
2 kappa D[a] + R12 D[s+] + R21 D[s-] + Gamma D[sz] with
D[X] rho = X rho X^dag - {X^dag X, rho}/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .params import LaserRates, NormalizedParams


class RankDeficiencyError(np.linalg.LinAlgError):
    """The sector generator has more than one stationary direction."""


def _rates(params) -> LaserRates:
    if isinstance(params, NormalizedParams):
        return params.to_rates(kappa=1.0)
    if isinstance(params, LaserRates):
        return params
    raise TypeError(f"expected LaserRates or NormalizedParams, got {type(params).__name__}")


class _Operators:
    def __init__(self, rates: LaserRates, ntrunc: int):
        self.rates = rates
        self.ntrunc = ntrunc
        nf = ntrunc + 1
        self.dim = 2 * nf
        a = sp.diags(np.sqrt(np.arange(1, nf, dtype=float)), 1, shape=(nf, nf), format="csr")
        eye_f = sp.identity(nf, format="csr")
        sm = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))  # |g><e|
        sz = sp.csr_matrix(np.diag([-1.0, 1.0]))
        eye_a = sp.identity(2, format="csr")
        self.a = sp.kron(a, eye_a, format="csr")
        self.sm = sp.kron(eye_f, sm, format="csr")
        self.sp_ = self.sm.T.tocsr()
        self.sz = sp.kron(eye_f, sz, format="csr")
        r = rates
        self.H = (r.g * (self.a.T @ self.sm + self.a @ self.sp_)).tocsr()
        self.jumps = [
            (2.0 * r.kappa, self.a),
            (r.r12, self.sp_),
            (r.r21, self.sm),
            (r.gamma, self.sz),
        ]
        self.jumps = [(c, X, (X.T @ X).tocsr()) for c, X in self.jumps if c != 0]

    def apply(self, rho):
        """L(rho) for a dense or sparse matrix rho."""
        out = -1j * (self.H @ rho - rho @ self.H)
        for c, X, XdX in self.jumps:
            out = out + c * (X @ rho @ X.T - 0.5 * (XdX @ rho + rho @ XdX))
        return out

    def superoperator(self) -> sp.csr_matrix:
        """Column-stacked superoperator, vec(A rho B) = (B^T kron A) vec(rho)."""
        eye = sp.identity(self.dim, format="csr")
        Hc = self.H.astype(complex)
        L = -1j * (sp.kron(eye, Hc) - sp.kron(Hc.T, eye))
        for c, X, XdX in self.jumps:
            L = L + c * (sp.kron(X.conj(), X) - 0.5 * (sp.kron(eye, XdX) + sp.kron(XdX.T, eye)))
        return L.tocsr()


def _idx(n: int, atom: int) -> int:
    return 2 * n + atom


def _sector_basis(ntrunc: int):
    """Yield (kind, n, sparse Hermitian matrix) for the 3N+2 sector elements."""
    dim = 2 * (ntrunc + 1)
    for n in range(ntrunc + 1):
        yield "rho11", n, sp.csr_matrix(([1.0], ([_idx(n, 0)], [_idx(n, 0)])), shape=(dim, dim))
    for n in range(ntrunc + 1):
        yield "rho22", n, sp.csr_matrix(([1.0], ([_idx(n, 1)], [_idx(n, 1)])), shape=(dim, dim))
    for n in range(ntrunc):
        i, j = _idx(n, 1), _idx(n + 1, 0)
        yield "coh", n, sp.csr_matrix(([1j, -1j], ([i, j], [j, i])), shape=(dim, dim))


def _coordinates(M, ntrunc: int) -> tuple[np.ndarray, float]:
    """Sector coordinates of a Hermitian matrix and the norm of the remainder."""
    M = sp.csr_matrix(M).tolil()
    nf = ntrunc + 1
    x = np.zeros(3 * ntrunc + 2)
    R = M.copy()
    for n in range(nf):
        i = _idx(n, 0)
        x[n] = M[i, i].real
        R[i, i] = M[i, i] - x[n]
        i = _idx(n, 1)
        x[nf + n] = M[i, i].real
        R[i, i] = M[i, i] - x[nf + n]
    for n in range(ntrunc):
        i, j = _idx(n, 1), _idx(n + 1, 0)
        y = M[i, j].imag
        x[2 * nf + n] = y
        R[i, j] = M[i, j] - 1j * y
        R[j, i] = M[j, i] + 1j * y
    R = R.tocsr()
    rem = float(np.sqrt(np.sum(np.abs(R.data) ** 2))) if R.nnz else 0.0
    return x, rem


@dataclass(frozen=True)
class TruncatedLiouvillian:
    """Sector generator of the master equation on Fock states 0..ntrunc."""

    ntrunc: int
    rates: LaserRates
    generator: np.ndarray = field(repr=False)
    closure_error: float
    trace_error: float

    @property
    def size(self) -> int:
        return self.generator.shape[0]


def build(params, ntrunc: int) -> TruncatedLiouvillian:
    """Read the sector generator off the full truncated Liouvillian."""
    if ntrunc < 2:
        raise ValueError(f"ntrunc must be >= 2, got {ntrunc}")
    rates = _rates(params)
    ops = _Operators(rates, ntrunc)
    cols = []
    closure = 0.0
    for _, _, B in _sector_basis(ntrunc):
        x, rem = _coordinates(ops.apply(B), ntrunc)
        cols.append(x)
        closure = max(closure, rem)
    G = np.column_stack(cols)
    nf = ntrunc + 1
    trace_row = np.zeros(G.shape[0])
    trace_row[: 2 * nf] = 1.0
    trace_err = float(np.max(np.abs(trace_row @ G)))
    return TruncatedLiouvillian(ntrunc, rates, G, closure, trace_err)


@dataclass(frozen=True)
class OracleSolution:
    """Stationary sector coordinates from the brute-force solve.

    ``coherence[n]`` is the coefficient y(n) of i|n,e><n+1,g| + h.c.; the
    diagonal field function is u(n+1) = y(n) / sqrt(n+1).
    """

    rho11: np.ndarray = field(repr=False)
    rho22: np.ndarray = field(repr=False)
    coherence: np.ndarray = field(repr=False)
    residual: float
    leakage: float

    @property
    def rhof(self) -> np.ndarray:
        return self.rho11 + self.rho22

    @property
    def u(self) -> np.ndarray:
        """u(m) for m = 1..N."""
        m = np.arange(1, len(self.coherence) + 1)
        return self.coherence / np.sqrt(m)


def steady_state(L: TruncatedLiouvillian, rank_tol: float = 1e-10) -> OracleSolution:
    """Null vector of the sector generator with unit trace.

    One row is replaced by the trace constraint; a singular-value check
    first confirms the stationary direction is unique.
    """
    G = L.generator
    sv = scipy.linalg.svdvals(G)
    nullity = int(np.sum(sv < rank_tol * sv[0]))
    if nullity > 1:
        raise RankDeficiencyError(
            f"{nullity} stationary directions (ntrunc={L.ntrunc}); truncation too small or rates degenerate"
        )
    nf = L.ntrunc + 1
    A = G.copy()
    b = np.zeros(G.shape[0])
    A[0, :] = 0.0
    A[0, : 2 * nf] = 1.0
    b[0] = 1.0
    x = scipy.linalg.solve(A, b)
    rho11, rho22, coh = x[:nf], x[nf : 2 * nf], x[2 * nf :]
    residual = float(np.max(np.abs(G @ x)))
    leakage = float(rho11[-1] + rho22[-1])
    return OracleSolution(rho11, rho22, coh, residual, leakage)


def solve(params, ntrunc: int) -> OracleSolution:
    return steady_state(build(params, ntrunc))


def uncoupled_state(rates: LaserRates, ntrunc: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form stationary blocks for g = 0: vacuum times the pumped atom."""
    nf = ntrunc + 1
    rho11 = np.zeros(nf)
    rho22 = np.zeros(nf)
    total = rates.r12 + rates.r21
    rho11[0] = rates.r21 / total
    rho22[0] = rates.r12 / total
    return rho11, rho22


def embed(sol: OracleSolution) -> np.ndarray:
    """Full density matrix of a sector solution."""
    nf = len(sol.rho11)
    dim = 2 * nf
    rho = np.zeros((dim, dim), dtype=complex)
    for n in range(nf):
        rho[_idx(n, 0), _idx(n, 0)] = sol.rho11[n]
        rho[_idx(n, 1), _idx(n, 1)] = sol.rho22[n]
    for n, y in enumerate(sol.coherence):
        i, j = _idx(n, 1), _idx(n + 1, 0)
        rho[i, j] = 1j * y
        rho[j, i] = -1j * y
    return rho


def evolve_full(params, ntrunc: int, rho0: np.ndarray, t: float) -> np.ndarray:
    """rho(t) under the full truncated Liouvillian (no sector restriction)."""
    ops = _Operators(_rates(params), ntrunc)
    L = ops.superoperator()
    v = expm_multiply(L * t, rho0.reshape(-1, order="F").astype(complex))
    return v.reshape(rho0.shape, order="F")


def random_state(ntrunc: int, seed: int = 0) -> np.ndarray:
    """Random full-rank density matrix with no phase symmetry."""
    rng = np.random.default_rng(seed)
    dim = 2 * (ntrunc + 1)
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


@dataclass(frozen=True)
class DecayFit:
    rate: float
    expected: float
    times: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)


def v_decay_check(
    params,
    ntrunc: int = 20,
    t_end: float = 4.0,
    fit_from: float = 2.0,
    dt: float | None = None,
) -> DecayFit:
    """Decay rate of a real-coherence (v-type) perturbation.

    A uniform perturbation sum_n (|n,e><n+1,g| + h.c.) is stepped with RK4
    under the full Liouvillian; the rate is the slope of log ||v(t)|| over
    [fit_from, t_end].  ``expected`` is kappa + (R12 + R21)/2.
    """
    rates = _rates(params)
    ops = _Operators(rates, ntrunc)
    dim = ops.dim
    rho = np.zeros((dim, dim), dtype=complex)
    for n in range(ntrunc):
        i, j = _idx(n, 1), _idx(n + 1, 0)
        rho[i, j] = rho[j, i] = 1.0
    if dt is None:
        fastest = 2 * rates.kappa * (2 * ntrunc + 1) + rates.r12 + rates.r21 + 4 * rates.gamma + 4 * rates.g * math.sqrt(ntrunc + 1)
        dt = min(0.2 / fastest, t_end / 200)
    steps = int(math.ceil(t_end / dt))
    dt = t_end / steps
    times = [0.0]
    norms = [_v_norm(rho, ntrunc)]
    f = ops.apply
    for k in range(steps):
        k1 = f(rho)
        k2 = f(rho + 0.5 * dt * k1)
        k3 = f(rho + 0.5 * dt * k2)
        k4 = f(rho + dt * k3)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        times.append((k + 1) * dt)
        norms.append(_v_norm(rho, ntrunc))
    times = np.array(times)
    norms = np.array(norms)
    sel = times >= fit_from
    slope = np.polyfit(times[sel], np.log(norms[sel]), 1)[0]
    expected = rates.kappa + 0.5 * (rates.r12 + rates.r21)
    return DecayFit(float(-slope), expected, times, norms)


def _v_norm(rho: np.ndarray, ntrunc: int) -> float:
    vals = [rho[_idx(n, 1), _idx(n + 1, 0)].real for n in range(ntrunc)]
    return float(np.sqrt(np.sum(np.square(vals))))
