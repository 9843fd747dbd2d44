"""Physical rates of the one-atom laser and their normalized form."""

from __future__ import annotations

import math
from dataclasses import dataclass


class InvalidParameterError(ValueError):
    """Raised when a rate or normalized parameter violates its constraint."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class LaserRates:
    """Raw rates of the pumped two-level atom coupled to one cavity mode.

    ``g`` is the vacuum Rabi coupling, ``kappa`` the field amplitude decay
    rate, ``r12`` the incoherent pump, ``r21`` the atomic decay and ``gamma``
    the dephasing rate.  Construction only checks finiteness and signs; the
    stricter ``g > 0`` needed by :func:`normalize` is checked there, so that
    the uncoupled case ``g = 0`` can still be handed to the Liouvillian
    oracle.
    """

    g: float
    kappa: float
    r12: float
    r21: float
    gamma: float

    def __post_init__(self):
        for name in ("g", "kappa", "r12", "r21", "gamma"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidParameterError(name, f"must be finite, got {value!r}")
            if value < 0:
                raise InvalidParameterError(name, f"must be >= 0, got {value!r}")
        if self.kappa <= 0:
            raise InvalidParameterError("kappa", f"must be > 0, got {self.kappa!r}")

    def scaled(self, c: float) -> "LaserRates":
        """All rates multiplied by ``c`` (normalized parameters are unchanged)."""
        return LaserRates(self.g * c, self.kappa * c, self.r12 * c, self.r21 * c, self.gamma * c)


@dataclass(frozen=True)
class NormalizedParams:
    """Pump ``a0sq``, loss excess ``nu0``, dephasing ``mu0`` and coupling ``eta``."""

    a0sq: float
    nu0: float
    mu0: float
    eta: float

    def to_rates(self, kappa: float = 1.0) -> LaserRates:
        """Raw rates reproducing these parameters for the given ``kappa``."""
        validate_normalized(self)
        gamma = (self.mu0 - self.a0sq - self.nu0) * kappa
        return LaserRates(
            g=math.sqrt(self.eta) * kappa,
            kappa=kappa,
            r12=4.0 * kappa * self.a0sq,
            r21=max(0.0, (4.0 * self.nu0 + 2.0) * kappa),
            gamma=max(0.0, gamma),
        )

    def as_dict(self) -> dict:
        return {"a0sq": self.a0sq, "nu0": self.nu0, "mu0": self.mu0, "eta": self.eta}


def normalize(rates: LaserRates) -> NormalizedParams:
    """Map raw rates to ``(a0sq, nu0, mu0, eta)``.

    >>> normalize(LaserRates(g=1.0, kappa=1.0, r12=4.0, r21=0.0, gamma=0.0))
    NormalizedParams(a0sq=1.0, nu0=-0.5, mu0=0.5, eta=1.0)
    """
    if not rates.g > 0:
        raise InvalidParameterError("g", f"must be > 0, got {rates.g!r}")
    k = rates.kappa
    a0sq = rates.r12 / (4.0 * k)
    nu0 = (rates.r21 - 2.0 * k) / (4.0 * k)
    mu0 = a0sq + nu0 + rates.gamma / k
    eta = (rates.g / k) ** 2
    return NormalizedParams(a0sq, nu0, mu0, eta)


def validate_normalized(p: NormalizedParams) -> None:
    """Raise :class:`InvalidParameterError` unless ``p`` is admissible."""
    for name in ("a0sq", "nu0", "mu0", "eta"):
        value = getattr(p, name)
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise InvalidParameterError(name, f"must be a finite number, got {value!r}")
    if p.a0sq < 0:
        raise InvalidParameterError("a0sq", f"a0sq < 0 (got {p.a0sq!r})")
    if p.nu0 < -0.5:
        raise InvalidParameterError("nu0", f"nu0 < -1/2 (got {p.nu0!r})")
    if p.eta <= 0:
        raise InvalidParameterError("eta", f"eta <= 0 (got {p.eta!r})")
    # tolerate round-off from normalize() when gamma == 0
    slack = 1e-12 * max(1.0, abs(p.a0sq) + abs(p.nu0))
    if p.mu0 < p.a0sq + p.nu0 - slack:
        raise InvalidParameterError(
            "mu0", f"mu0 < a0sq + nu0 (got mu0={p.mu0!r}, a0sq + nu0={p.a0sq + p.nu0!r})"
        )
