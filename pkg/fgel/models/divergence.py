"""
GEL functions phi for the common phi-divergences.

Each GEL function is the negative convex conjugate of its divergence,
phi(v) = -phi*(v), normalised so that phi1(0) = phi2(0) = -1 (chi2, el, kl):

    name        phi(v)            phi*(v)          dom(phi*)          implied weight
    chi2        -(1 + v)^2 / 2    (1 + v)^2 / 2    R                  1 + v
    el          log(1 - v)        -log(1 - v)      (-inf, 1 - 1/n]    1 / (1 - v)
    kl          -exp(v)           exp(v)           R                  exp(v)
    vmm_equiv   -(1 + v/2)^2      (1 + v/2)^2      R                  1 + v/2

The closed-form conjugates differ from the Legendre transform of the divergence
generator (recentred to vanish with zero slope at p = 1) by the constant in
`LEGENDRE_OFFSET`. Constants never move an optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from fgel.models.errors import ConfigError, DomainError

EL_MARGIN = 1e-10

LEGENDRE_OFFSET = {"chi2": 0.5, "el": 0.0, "kl": 1.0, "vmm_equiv": 1.0}


@dataclass(frozen=True)
class GelDivergence:
    name: str
    phi: Callable[[np.ndarray], np.ndarray]
    phi1: Callable[[np.ndarray], np.ndarray]
    phi2: Callable[[np.ndarray], np.ndarray]
    conjugate: Callable[[np.ndarray], np.ndarray]
    generator: Callable[[np.ndarray], np.ndarray]
    domain_upper: float | None = None
    quadratic: bool = False

    def upper_bound(self, n: int | None = None) -> float | None:
        """Largest admissible argument. For EL with n >= 2 this is 1 - 1/n minus a margin."""
        if self.domain_upper is None:
            return None
        if n is not None and n >= 2:
            return self.domain_upper - 1.0 / n - EL_MARGIN
        return None

    def in_domain(self, v: np.ndarray, n: int | None = None) -> bool:
        if self.domain_upper is None:
            return bool(np.all(np.isfinite(v)))
        bound = self.upper_bound(n)
        v = np.asarray(v)
        if bound is None:
            return bool(np.all(v < self.domain_upper))
        return bool(np.all(v <= bound))

    def implied_weight(self, v: np.ndarray) -> np.ndarray:
        """(phi*)'(v), which equals -phi1(v) for every GEL function here."""
        return -self.phi1(v)

    @property
    def legendre_offset(self) -> float:
        return LEGENDRE_OFFSET[self.name]

    def legendre_conjugate(self, v: np.ndarray) -> np.ndarray:
        """Exact Legendre transform of the recentred generator."""
        return self.conjugate(v) - self.legendre_offset

    def to_dict(self) -> dict:
        return {"name": self.name, "domain_upper": self.domain_upper, "quadratic": self.quadratic}


def _chi2() -> GelDivergence:
    return GelDivergence(
        name="chi2",
        phi=lambda v: -0.5 * (1.0 + v) ** 2,
        phi1=lambda v: -(1.0 + v),
        phi2=lambda v: -np.ones_like(np.asarray(v, dtype=float)),
        conjugate=lambda v: 0.5 * (1.0 + v) ** 2,
        generator=lambda p: 0.5 * (p - 1.0) ** 2,
        quadratic=True,
    )


def _el() -> GelDivergence:
    return GelDivergence(
        name="el",
        phi=lambda v: np.log1p(-v),
        phi1=lambda v: -1.0 / (1.0 - v),
        phi2=lambda v: -1.0 / (1.0 - v) ** 2,
        conjugate=lambda v: -np.log1p(-v),
        generator=lambda p: -np.log(p) + p - 1.0,
        domain_upper=1.0,
    )


def _kl() -> GelDivergence:
    return GelDivergence(
        name="kl",
        phi=lambda v: -np.exp(v),
        phi1=lambda v: -np.exp(v),
        phi2=lambda v: -np.exp(v),
        conjugate=np.exp,
        generator=lambda p: p * np.log(p) - p + 1.0,
    )


def _vmm_equiv() -> GelDivergence:
    return GelDivergence(
        name="vmm_equiv",
        phi=lambda v: -((1.0 + 0.5 * v) ** 2),
        phi1=lambda v: -(1.0 + 0.5 * v),
        phi2=lambda v: -0.5 * np.ones_like(np.asarray(v, dtype=float)),
        conjugate=lambda v: (1.0 + 0.5 * v) ** 2,
        generator=lambda p: (p - 1.0) ** 2,
        quadratic=True,
    )


DIVERGENCES = {
    "chi2": _chi2,
    "el": _el,
    "kl": _kl,
    "vmm_equiv": _vmm_equiv,
}


def make_divergence(name: str) -> GelDivergence:
    try:
        return DIVERGENCES[name]()
    except KeyError:
        raise ConfigError(f"Unknown divergence '{name}'. Allowed: {', '.join(DIVERGENCES)}") from None


def conjugate_value(name: str, v, n: int | None = None):
    """Closed-form convex conjugate phi*(v); raises DomainError outside dom(phi*).

    For "el" this is -log(1 - v), the Legendre transform of the convex
    generator, so it is the negative of the textbook log(1 - v) form.
    """
    divergence = make_divergence(name)
    v_arr = np.asarray(v, dtype=float)
    if not divergence.in_domain(v_arr, n):
        raise DomainError(f"{name} conjugate undefined at v={v}")
    value = divergence.conjugate(v_arr)
    return float(value) if np.ndim(value) == 0 else value


def implied_probabilities(divergence: GelDivergence, v: np.ndarray) -> np.ndarray:
    """Raw weights (phi*)'(v_i) normalised to sum to one."""
    v = np.asarray(v, dtype=float)
    if not divergence.in_domain(v):
        raise DomainError(f"{divergence.name} implied weights undefined: argument outside domain")
    weights = divergence.implied_weight(v)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0:
        raise DomainError(f"Implied weights have non-positive total {total}")
    return weights / total
