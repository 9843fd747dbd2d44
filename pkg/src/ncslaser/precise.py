"""Ball-arithmetic enclosures of Fock weights, for sign-certified Fock sums.

Quasiprobabilities for s > 0 are alternating sums whose terms exceed the
result by many orders of magnitude, so double-precision weights cannot
decide their sign.  A ``WeightSource`` produces rigorous ``arb`` balls for
unnormalized weights w(0..N) at the current working precision, and an
upper bound on the omitted tail sum_{n>N} w(n) C^n.

For the laser state the balls come from interval propagation of the
deviation recurrence: the downward step is increasing in d(n+1) and
decreasing in d(n+2), and 0 < d(n) < upper_bound(n) for n >= 1, so
starting from those boxes far above the range and stepping opposite
corners gives enclosures that contract to working precision.
"""

from __future__ import annotations

import math

import numpy as np
from flint import arb

from . import deviation as dev
from .params import NormalizedParams, validate_normalized

SWEEP_BUFFER = 64


def _upper(x: arb) -> float:
    u = float(x.upper())
    # float() rounds to nearest; nudge up so the result stays an upper bound
    return math.nextafter(u, math.inf) if math.isfinite(u) else u


class WeightSource:
    """Rigorous enclosures of unnormalized weights w(n) >= 0."""

    label = "weights"

    def weights(self, count: int) -> list:
        """Balls for w(0..count-1) at the current working precision."""
        raise NotImplementedError

    def ratio_bound(self, m: int) -> float:
        """Upper bound on w(n+1)/w(n) valid for every n >= m (inf if unknown)."""
        raise NotImplementedError

    def support(self) -> int | None:
        """Number of possibly non-zero weights, or None if unbounded."""
        return None

    def tail_bound(self, weights: list, cabs: float) -> arb:
        """Upper bound on sum_{n >= len(weights) - 1} w(n) cabs^n.

        The last entry of ``weights`` is the first omitted index.
        """
        n_first = len(weights) - 1
        sup = self.support()
        if sup is not None and n_first >= sup:
            return arb(0)
        q = self.ratio_bound(n_first)
        if not q * cabs < 1:
            return arb.pos_inf()
        c = arb(cabs)
        return weights[-1] * c**n_first / (1 - arb(q) * c)


class FiniteSource(WeightSource):
    """Weights taken exactly as the given doubles.

    ``tail_mass`` is extra probability beyond the array with unknown shape;
    it is harmless when cabs <= 1 and makes larger cabs undecidable.
    """

    def __init__(self, p, tail_mass: float = 0.0, label: str = "finite"):
        self.p = np.asarray(p, dtype=float)
        nz = np.nonzero(self.p > 0)[0]
        self._support = int(nz[-1]) + 1 if len(nz) else 1
        self.tail_mass = float(tail_mass)
        self.label = label

    def weights(self, count: int) -> list:
        out = [arb(float(x)) for x in self.p[:count]]
        return out + [arb(0)] * (count - len(out))

    def ratio_bound(self, m: int) -> float:
        return 0.0 if m >= self._support else math.inf

    def support(self) -> int | None:
        return None if self.tail_mass > 0 else self._support

    def tail_bound(self, weights: list, cabs: float) -> arb:
        n_first = len(weights) - 1
        extra = arb(0)
        if self.tail_mass > 0:
            if cabs > 1:
                return arb.pos_inf()
            extra = arb(self.tail_mass)
        if n_first >= self._support:
            return extra
        return arb.pos_inf()


class PoissonSource(WeightSource):
    """w(n) = mean^n / n!  (phase-averaged coherent state)."""

    def __init__(self, mean: float):
        if not mean >= 0:
            raise ValueError("mean must be >= 0")
        self.mean = float(mean)
        self.label = f"poisson({mean:g})"

    def weights(self, count: int) -> list:
        m = arb(self.mean)
        out = [arb(1)]
        for n in range(1, count):
            out.append(out[-1] * m / n)
        return out

    def ratio_bound(self, m: int) -> float:
        return self.mean / (m + 1)


class ThermalSource(WeightSource):
    """w(n) = x^n with 0 <= x < 1."""

    def __init__(self, x: float):
        if not 0 <= x < 1:
            raise ValueError("x must lie in [0, 1)")
        self.x = float(x)
        self.label = f"thermal({x:g})"

    def weights(self, count: int) -> list:
        x = arb(self.x)
        return [x**n for n in range(count)]

    def ratio_bound(self, m: int) -> float:
        return self.x


def deviation_enclosure(p: NormalizedParams, n_hi: int, buffer: int = SWEEP_BUFFER) -> list:
    """Balls containing d(n) for n = 1..n_hi (index 0 unused, holds None).

    The buffer doubles until the ball at n_hi is resolved to within a few
    bits of the working precision.
    """
    validate_normalized(p)
    a0, nu, mu, eta = (arb(x) for x in (p.a0sq, p.nu0, p.mu0, p.eta))
    half = arb(1) / 2

    def step(n, d1, d2):
        m1, m2 = arb(n + 1), arb(n + 2)
        phi1 = a0 / (nu + m1 * half + m1 * half / (1 + d1))
        phi2 = a0 / (nu + m2 * half + m2 * half / (1 + d2))
        return (2 / eta) * ((mu + n) * (1 + phi1) - m1 / (1 + d1) * phi1 * (1 + phi2))

    def ub(n):
        return (2 / eta) * (mu + n) * (1 + 2 * a0 / (2 * nu + n + 1))

    if p.a0sq == 0:
        return [None] + [(2 / eta) * (mu + n) for n in range(1, n_hi + 1)]
    while True:
        top = n_hi + buffer
        lo = {top + 1: arb(0), top + 2: arb(0)}
        hi = {top + 1: ub(top + 1), top + 2: ub(top + 2)}
        for n in range(top, 0, -1):
            lo[n] = arb(step(n, lo[n + 1], hi[n + 2]).lower())
            hi[n] = arb(step(n, hi[n + 1], lo[n + 2]).upper())
        ball = lo[n_hi].union(hi[n_hi])
        if ball.rel_accuracy_bits() >= ball.bits() - 8 or buffer >= dev.MAX_BUFFER:
            break
        buffer *= 2
    return [None] + [lo[n].union(hi[n]) for n in range(1, n_hi + 1)]


class FieldSource(WeightSource):
    """Unnormalized rhof(n) = rho11(n) + rho22(n) of the stationary state.

    ``zero_deviation=True`` gives the strong-coupling state (d = 0), whose
    weights are exact rational expressions in the parameters.
    """

    def __init__(self, params: NormalizedParams, zero_deviation: bool = False):
        validate_normalized(params)
        self.params = params
        self.zero_deviation = zero_deviation
        self.label = "rho_sc" if zero_deviation else "rhof"

    def weights(self, count: int) -> list:
        p = self.params
        if self.zero_deviation:
            d = [None] + [arb(0)] * (count + 1)
        else:
            d = deviation_enclosure(p, count + 1)
        a0, nu = arb(p.a0sq), arb(p.nu0)
        r11 = [arb(1)]
        for n in range(1, count + 1):
            f11 = arb(1) / 2 + (arb(1) / 2 + nu / n) * (1 + d[n])
            r11.append(r11[-1] * a0 / (n * f11))
        return [r11[n] + (1 + d[n + 1]) * r11[n + 1] for n in range(count)]

    def _d_lower(self, k: int) -> float:
        # closed-form lower bound on d(k), increasing in k
        if self.zero_deviation:
            return 0.0
        p = self.params
        kap = 1.0 if p.nu0 >= 0 else 2.0
        raw = (2.0 / p.eta) * (
            k + p.mu0
            - p.a0sq * abs(p.mu0 - 1.0) / (p.nu0 + k + 1.0)
            - kap * 2.0 * p.a0sq**2 / (2.0 * p.nu0 + k + 2.0)
        )
        return max(0.0, raw)

    def ratio_bound(self, m: int) -> float:
        """Bound on rhof(n+1)/rhof(n) for n >= m, decreasing in m.

        rhof(n+1)/rhof(n) = a0^2 (1 + phi(n+2)) / ((n+1) F11(n+1) (1 + phi(n+1)))
        with phi(n+2) <= a0^2/(nu0 + (n+2)/2) and (n+1) F11(n+1) bounded
        below through the lower bound on d(n+1).
        """
        p = self.params
        if p.a0sq == 0:
            return 0.0
        k = m + 1
        phi_max = p.a0sq / (p.nu0 + 0.5 * (k + 1))
        denom = 0.5 * k + (0.5 * k + p.nu0) * (1.0 + self._d_lower(k))
        if denom <= 0:
            return math.inf
        # guard the double rounding of a bound that is only used as an upper bound
        return p.a0sq * (1.0 + phi_max) / denom * (1 + 1e-12)


def source_for(d) -> WeightSource:
    """The enclosure source attached to a FockDistribution, or its exact values."""
    src = getattr(d, "source", None)
    if src is not None:
        return src
    return FiniteSource(d.p, d.tail_bound, d.label)


def truncation(src: WeightSource, cabs: float, bits: int, cap: int) -> int | None:
    """Number of weights to keep so the omitted tail sits below ``bits`` of
    precision relative to the largest term.

    A heuristic choice driven by the ratio bound (need q(N) cabs <= 1/2);
    the tail actually omitted is bounded rigorously by ``tail_bound``.
    Returns None if no N <= cap qualifies.
    """
    sup = src.support()
    if sup is not None:
        return sup
    budget = -(bits + 16) * math.log(2.0)
    acc = peak = 0.0
    for m in range(cap):
        q = src.ratio_bound(m) * cabs
        if q == 0:
            return m + 1
        if math.isinf(q):
            acc = peak = 0.0
            continue
        acc += math.log(q)
        peak = max(peak, acc)
        if q <= 0.5 and acc - peak <= budget:
            return m + 1
    return None
