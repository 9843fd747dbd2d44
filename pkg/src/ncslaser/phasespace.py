"""s-parametrized quasiprobabilities of Fock-diagonal states and the
nonclassicality order s0.

For a phase-symmetric state P(alpha; s) depends on r = |alpha| only:

    P(r; s) = sum_n p(n) k_n(r; s),
    k_n(r; s) = 2/(pi(1-s)) c^n exp(-2r^2/(1-s)) L_n(4r^2/(1-s^2)),
    c = (s+1)/(s-1).

For s > 0, |c| > 1 and the Fock sum cancels heavily: the largest terms
can exceed the result by a hundred orders of magnitude.  The double
precision functions here are for smooth quantities (plots, the Q function,
convolution checks).  Sign decisions go through ball arithmetic on exact
weight enclosures (see ``precise``): a value counts as negative only when
its whole ball is <= 0, and the working precision grows until each grid
sign is resolved or a cap is hit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from flint import arb, arb_poly, ctx
from scipy.special import gammaln, i0e, logsumexp

from .precise import source_for, truncation
from .state import FockDistribution

S_CAP = 0.999
PREC_START = 96
PREC_CAP = 1024
TERMS_CAP = 6000
RESCALE = 1e250
EPS = np.finfo(float).eps
GOLDEN = (math.sqrt(5) - 1) / 2


def _terms(n_count: int, r: np.ndarray, s: float):
    """Yield (n, m_n * exp(log_scale)) pieces of k_n / prefactor, with m_n scaled.

    Uses m_{n+1} = [((2n+1)c - cx) m_n - n c^2 m_{n-1}] / (n+1), where
    m_n = c^n L_n(x) and cx = -4r^2/(1-s)^2 is formed directly so the
    recurrence stays finite at s = -1.  The Gaussian envelope is kept as a
    separate log-scale per grid point and rescaling by 1e250 keeps m_n in
    range.
    """
    c = (s + 1.0) / (s - 1.0)
    cx = -4.0 * r**2 / (1.0 - s) ** 2
    log_scale = -2.0 * r**2 / (1.0 - s)
    m_prev = np.zeros_like(r)
    m = np.ones_like(r)
    for n in range(n_count):
        yield n, m, log_scale
        m_next = (((2 * n + 1) * c - cx) * m - n * c * c * m_prev) / (n + 1)
        m_prev, m = m, m_next
        big = np.abs(m) > RESCALE
        if np.any(big):
            m = np.where(big, m / RESCALE, m)
            m_prev = np.where(big, m_prev / RESCALE, m_prev)
            log_scale = np.where(big, log_scale + math.log(RESCALE), log_scale)


def _prefactor(s: float) -> float:
    return 2.0 / (math.pi * (1.0 - s))


def fock_kernel(n: int, r, s: float):
    """k_n(r; s), the s-ordered delta observable's diagonal element in |n>."""
    if not s < 1:
        raise ValueError(f"s must be < 1, got {s}")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    for k, m, log_scale in _terms(n + 1, r, s):
        if k == n:
            with np.errstate(under="ignore", over="ignore"):
                out = _prefactor(s) * m * np.exp(log_scale)
    return float(out[0]) if out.size == 1 else out


def quasi_prob_with_error(d: FockDistribution, r, s: float) -> tuple[np.ndarray, np.ndarray]:
    """P(r; s) and a bound on its rounding error.

    The error bound charges each term p(n) k_n a relative error growing
    linearly in n (recurrence and weight round-off), plus the omitted tail
    mass times the largest kernel magnitude seen.
    """
    if not s < 1:
        raise ValueError(f"s must be < 1, got {s}")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    p = d.p
    nz = np.nonzero(p > 0)[0]
    n_count = int(nz[-1]) + 1 if len(nz) else 1
    # accumulate in the running scale of each grid point
    acc = np.zeros_like(r)
    err = np.zeros_like(r)
    kmax = np.zeros_like(r)
    cur_scale = None
    for n, m, log_scale in _terms(n_count, r, s):
        if cur_scale is None:
            cur_scale = log_scale
        elif np.any(log_scale != cur_scale):
            shift = np.exp(cur_scale - log_scale)
            acc *= shift
            err *= shift
            kmax *= shift
            cur_scale = log_scale
        term = p[n] * m
        acc += term
        err += np.abs(term) * (16 + 8 * n) * EPS
        kmax = np.maximum(kmax, np.abs(m))
    bound_raw = err + EPS * np.abs(acc) + d.tail_bound * kmax
    with np.errstate(under="ignore", over="ignore", divide="ignore"):
        log_pre = math.log(_prefactor(s)) + cur_scale
        value = np.sign(acc) * np.exp(np.log(np.abs(acc)) + log_pre)
        bound = np.exp(np.log(bound_raw) + log_pre)
    return value, bound


def quasi_prob(d: FockDistribution, r, s: float):
    """P(|alpha| = r; s) of a Fock-diagonal state."""
    value, _ = quasi_prob_with_error(d, r, s)
    return float(value[0]) if value.size == 1 else value


def q_function_closed_form(d: FockDistribution, r):
    """Husimi Q: exp(-r^2)/pi * sum p(n) r^(2n)/n!, in log space."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    n = np.arange(len(d.p))
    with np.errstate(divide="ignore"):
        logr2 = np.log(r**2)
        logp = np.log(d.p)
    # n * log(r^2) with the n = 0 column fixed to 0 (0^0 = 1 at r = 0)
    powers = np.zeros((len(r), len(n)))
    powers[:, 1:] = n[None, 1:] * logr2[:, None]
    logterms = logp[None, :] + powers - gammaln(n + 1)[None, :]
    with np.errstate(under="ignore"):
        out = np.exp(logsumexp(logterms, axis=1) - r**2) / math.pi
    return float(out[0]) if out.size == 1 else out


@dataclass(frozen=True)
class RadialGrid:
    r_max: float
    points: int = 2048

    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.points)


def default_grid(d: FockDistribution, points: int = 2048) -> RadialGrid:
    """r_max = sqrt(n_peak) + 6 with n_peak = mode + 3 standard deviations."""
    n = np.arange(len(d.p))
    mean = float(np.dot(n, d.p))
    sd = math.sqrt(max(float(np.dot(n**2, d.p)) - mean**2, 0.0))
    n_peak = int(np.argmax(d.p)) + 3 * sd
    return RadialGrid(math.sqrt(n_peak) + 6.0, points)


class _BallSum:
    """S(x) = sum_n w(n) c^n L_n(x) in ball arithmetic, as a polynomial in x.

    P(r; s) = 2/(pi(1-s)) exp(-2r^2/(1-s)) S(4r^2/(1-s^2)) / Z with Z the
    total weight.  The omitted tail is bounded through |L_n(x)| <= e^(x/2).
    Must be constructed and used under one working precision.
    """

    def __init__(self, d: FockDistribution, s: float, bits: int):
        self.s = s
        self.src = source_for(d)
        s_b = arb(s)
        c = (s_b + 1) / (s_b - 1)
        cabs = abs((1.0 + s) / (1.0 - s)) * (1 + 1e-15)
        n_terms = truncation(self.src, cabs, bits, TERMS_CAP)
        self.ok = n_terms is not None
        if not self.ok:
            return
        w = self.src.weights(n_terms + 1)
        self.n_terms = n_terms
        self.w0 = w[0]
        self.tail = self.src.tail_bound(w, cabs)
        self.ok = self.tail.is_finite()
        if not self.ok:
            return
        terms, cn = [], arb(1)
        for n in range(n_terms):
            terms.append(w[n] * cn)
            cn *= c
        # Taylor shift gives sum_n w c^n binom(n, k); L_n(x) = sum_k binom(n,k) (-x)^k / k!
        shifted = arb_poly(terms)(arb_poly([1, 1])).coeffs()
        coeffs, fact = [], arb(1)
        for k, v in enumerate(shifted):
            coeffs.append(v / fact if k % 2 == 0 else -v / fact)
            fact *= k + 1
        self.poly = arb_poly(coeffs)
        mass_tail = self.src.tail_bound(w, 1.0)
        total = sum(w[:n_terms], arb(0))
        self.norm = total + mass_tail * arb(0.5, 0.5) if mass_tail.is_finite() else None
        self.bits = bits

    def series(self, r: float) -> arb:
        s_b, r_b = arb(self.s), arb(r)
        x = 4 * r_b * r_b / (1 - s_b * s_b)
        val = self.poly(x)
        if not self.tail.is_zero():
            val += self.tail * (x / 2).exp() * arb(0, 1)
        return val

    def x_of(self, r: float) -> float:
        return 4.0 * r * r / (1.0 - self.s * self.s)

    def beyond_zeros(self, r: float) -> bool:
        """True past the outermost Laguerre zero of every kept term.

        Every zero of L_n lies below 4n + 2 and c < 0, so there each kept
        term w(n) c^n L_n(x) is >= 0 and the kept sum cannot be negative.
        The omitted tail is small against the largest term but is not
        bounded against the local value out there.
        """
        return self.x_of(r) > 4 * self.n_terms + 2

    def value(self, r: float, series: arb | None = None) -> arb:
        """Normalized P(r; s) as a ball (unbounded if the norm is unknown)."""
        if series is None:
            series = self.series(r)
        if self.norm is None:
            return arb(0, math.inf)
        s_b, r_b = arb(self.s), arb(r)
        pre = 2 / (arb.pi() * (1 - s_b)) * (-2 * r_b * r_b / (1 - s_b)).exp()
        return pre * series / self.norm


@dataclass(frozen=True)
class RadiusMinimum:
    """Result of a radial minimum search at one s.

    ``value`` and ``radius`` are the midpoint and radius of the ball for
    P at ``r``; ``log10_abs`` keeps the magnitude when ``value`` underflows.  ``negative`` is True only when a probed ball lies wholly
    at or below zero; ``resolved`` says whether every grid sign inside the
    oscillatory region (x <= 4N + 2) was decided.
    """

    s: float
    value: float
    r: float
    radius: float
    negative: bool
    resolved: bool
    bits: int
    log10_abs: float = math.nan


def _q_minimum(d: FockDistribution, grid: RadialGrid) -> RadiusMinimum:
    # Q(r) > 0 for r > 0 unless every weight vanishes, so it touches zero iff w(0) = 0
    r = grid.nodes()
    vals = np.atleast_1d(q_function_closed_form(d, r))
    i = int(np.argmin(vals))
    w0 = source_for(d).weights(1)[0]
    if w0.is_zero():
        return RadiusMinimum(-1.0, 0.0, 0.0, 0.0, True, True, 0, -math.inf)
    v = float(vals[i])
    return RadiusMinimum(-1.0, v, float(r[i]), 0.0, False, True, 0, math.log10(v) if v > 0 else -math.inf)


def _golden(f, a: float, b: float, iters: int = 40):
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if b - a < 1e-9 * max(1.0, b):
            break
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 < f2 else (x2, f2)


def min_over_radius(d: FockDistribution, s: float, grid: RadialGrid | None = None) -> RadiusMinimum:
    """Minimum of P(r; s) over the radial grid, refined by golden section.

    Each grid value is a ball; precision doubles from a start set by the
    size of the largest Fock terms until every grid sign is decided, some
    point is certifiably non-positive, or ``PREC_CAP`` bits are reached.
    At s = -1 the closed-form Q function is used.
    """
    if not -1 <= s < 1:
        raise ValueError(f"s must lie in [-1, 1), got {s}")
    if grid is None:
        grid = default_grid(d)
    if s == -1.0:
        return _q_minimum(d, grid)
    r = grid.nodes()
    cabs = abs((1.0 + s) / (1.0 - s))
    bits = PREC_START + _log2_peak(d, cabs)
    if bits > PREC_CAP:
        # the Fock terms span more bits than the cap; no sign can be resolved
        return RadiusMinimum(s, math.nan, math.nan, math.inf, False, False, bits)
    series: list = [None] * len(r)
    neg = np.zeros(len(r), bool)
    pos = np.zeros(len(r), bool)
    todo = np.arange(len(r))
    while True:
        with ctx.workprec(bits):
            ev = _BallSum(d, s, bits)
            if not ev.ok:
                return RadiusMinimum(s, math.nan, math.nan, math.inf, False, False, bits)
            for i in todo:
                b = ev.series(r[i])
                series[i] = b
                neg[i] = b.upper() <= 0
                pos[i] = b.lower() > 0
            outer = np.array([ev.beyond_zeros(x) for x in r])
            undecided = ~(neg | pos | outer)
            if neg.any() or not undecided.any() or bits >= PREC_CAP:
                break
        # only unsettled points are redone; settled balls stay valid at any precision
        todo = np.nonzero(~(neg | pos))[0]
        bits = min(2 * bits, PREC_CAP)
    settled = neg | pos
    if not settled.any():
        return RadiusMinimum(s, math.nan, math.nan, math.inf, False, False, bits)
    with ctx.workprec(bits):
        idx = np.nonzero(settled)[0]
        balls = {int(i): ev.value(r[i], series[i]) for i in idx}
        i = min(balls, key=lambda k: float(balls[k].mid()))
        lo, hi = r[max(i - 1, 0)], r[min(i + 1, len(r) - 1)]
        best_r, best = float(r[i]), balls[i]
        if hi > lo:
            x, _ = _golden(lambda t: float(ev.value(t).mid()), float(lo), float(hi))
            cand = ev.value(x)
            if cand.rad() < abs(cand.mid()) and float(cand.mid()) < float(best.mid()):
                best_r, best = x, cand
        negative = bool(neg.any() or best.upper() <= 0)
        mag = abs(best.mid())
        log10_abs = float(mag.log() / arb(10).log()) if not mag.is_zero() else -math.inf
        return RadiusMinimum(
            s, float(best.mid()), best_r, float(best.rad()), negative, not undecided.any(), bits, log10_abs
        )


def _log2_peak(d: FockDistribution, cabs: float) -> int:
    """log2 of the largest w(n) cabs^n relative to w(0), from the ratio bounds."""
    src = source_for(d)
    sup = src.support()
    if sup is not None:
        p = np.asarray(d.p[:sup], dtype=float)
        with np.errstate(divide="ignore"):
            lw = np.log2(p[p > 0]) + np.nonzero(p > 0)[0] * math.log2(max(cabs, 1e-300))
        return int(max(0.0, lw.max() - lw.min())) if len(lw) else 0
    acc = peak = 0.0
    for m in range(TERMS_CAP):
        q = src.ratio_bound(m) * cabs
        if not 0 < q < math.inf:
            break
        acc += math.log2(q)
        peak = max(peak, acc)
        if q < 0.5 and acc < peak - 64:
            break
    return int(peak)


def is_negative(d: FockDistribution, s: float, grid: RadialGrid | None = None) -> bool:
    """Whether P(.; s) is certifiably non-positive somewhere on the grid."""
    return min_over_radius(d, s, grid).negative


@dataclass(frozen=True)
class NonclassicalityReport:
    """Outcome of the s0 search.

    ``s_trace`` holds one RadiusMinimum per probed s, in probing order.
    s0 = 1 means no certified negativity up to the cap.
    """

    s0: float
    r_min: float
    s_trace: list = field(default_factory=list)
    grid: RadialGrid | None = None
    tolerance: float = 1e-3

    @property
    def classical(self) -> bool:
        return self.s0 == 1.0


def scan_points(s_cap: float = S_CAP, linear: int = 6) -> list[float]:
    """Coarse probe values: linear up to 1/2, then halving 1 - s, ending at s_cap."""
    pts = list(np.linspace(-1.0, 0.5, linear + 1)[1:])
    gap = 0.25
    while 1.0 - gap < s_cap:
        pts.append(1.0 - gap)
        gap /= 2
    pts.append(s_cap)
    return [float(x) for x in pts if x <= s_cap]


def s0_search(
    d: FockDistribution,
    tol_s: float = 1e-3,
    grid: RadialGrid | None = None,
    s_cap: float = S_CAP,
) -> NonclassicalityReport:
    """Smallest s at which P(alpha; s) stops being strictly positive.

    Negativity is monotone in s (lowering s is a Gaussian smoothing), so a
    coarse upward scan from s = -1 (dense near 1, where the states of
    interest turn negative) brackets the first certified negative point
    and bisection narrows it to ``tol_s``; s0 is the bracket midpoint.
    No detection up to ``s_cap`` gives s0 = 1, detection at s = -1 gives -1.
    """
    if not 1e-4 <= tol_s <= 1e-2:
        raise ValueError(f"tol_s must lie in [1e-4, 1e-2], got {tol_s}")
    if grid is None:
        grid = default_grid(d)
    trace = [min_over_radius(d, -1.0, grid)]
    if trace[0].negative:
        return NonclassicalityReport(-1.0, trace[0].r, trace, grid, tol_s)
    lo, hit = -1.0, None
    for s in scan_points(s_cap):
        res = min_over_radius(d, s, grid)
        trace.append(res)
        if res.negative:
            hit = res
            break
        lo = float(s)
    if hit is None:
        return NonclassicalityReport(1.0, math.nan, trace, grid, tol_s)
    hi = hit.s
    while hi - lo > tol_s:
        mid = 0.5 * (lo + hi)
        res = min_over_radius(d, mid, grid)
        trace.append(res)
        if res.negative:
            hi, hit = mid, res
        else:
            lo = mid
    return NonclassicalityReport(0.5 * (lo + hi), hit.r, trace, grid, tol_s)


def _gauss_legendre(a: float, b: float, panels: int, order: int = 20):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def radial_convolve(f_vals: np.ndarray, nodes: np.ndarray, weights: np.ndarray, r: np.ndarray, width: float) -> np.ndarray:
    """2-D convolution of a radial function with 2/(pi w) exp(-2|beta|^2/w).

    The angular integral gives 2 pi I0(4 r rho / w); i0e keeps it finite:
    (f*G)(r) = int f(rho) (4 rho / w) exp(-2 (r - rho)^2 / w) i0e(4 r rho / w) drho
    """
    rr = r[:, None]
    rho = nodes[None, :]
    kern = (4.0 * rho / width) * np.exp(-2.0 * (rr - rho) ** 2 / width) * i0e(4.0 * rr * rho / width)
    return kern @ (weights * f_vals)


def convolution_check(
    d: FockDistribution,
    s_hi: float,
    s_lo: float,
    grid: RadialGrid | None = None,
    panels: int = 64,
) -> float:
    """Sup-norm gap between P(.; s_lo) and P(.; s_hi) smoothed by a Gaussian.

    Lowering s by (s_hi - s_lo) is a convolution with a Gaussian of that
    width; the integral is done by composite Gauss-Legendre on
    [0, r_max + 8].  Raises if refining the quadrature changes the result
    by more than 1e-9 (grid too coarse).
    """
    if not -1 <= s_lo < s_hi < 1:
        raise ValueError("need -1 <= s_lo < s_hi < 1")
    if grid is None:
        grid = default_grid(d, points=256)
    r = grid.nodes()
    width = s_hi - s_lo
    upper = grid.r_max + 8.0

    def smoothed(k):
        nodes, weights = _gauss_legendre(0.0, upper, k)
        return radial_convolve(quasi_prob(d, nodes, s_hi), nodes, weights, r, width)

    conv = smoothed(panels)
    finer = smoothed(2 * panels)
    if np.max(np.abs(conv - finer)) > 1e-9:
        raise ArithmeticError("quadrature not converged; increase panels")
    direct = np.atleast_1d(quasi_prob(d, r, s_lo))
    return float(np.max(np.abs(finer - direct)))
