"""Spatial overlap between a focused Gaussian probe mode and the atomic dipole wave.

The overlap parameter eta_p (and the scattering ratio R_sc = 4 * eta_p) is
computed from the focusing strength u = w_L / f of the coupling lens.  The
expression needs the upper incomplete gamma function at a = -1/4 and a = +1/4,
which is implemented here directly: neither value is covered by
``scipy.special`` (only the regularized function for a > 0 is available).

For strong focusing the exp(2/u**2) prefactor and the gamma values over/underflow
separately long before their product does, so everything internal works with the
scaled function e**x * Gamma(a, x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, UnsupportedParameterError

_EPS = 1e-16
_MAX_ITER = 500
_EULER = 0.5772156649015329


def _scaled_cf(a: float, x: float) -> float:
    """e**x * Gamma(a, x) by modified Lentz continued fraction (use for x >= a + 1)."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return x**a * h
    raise UnsupportedParameterError(
        f"continued fraction for Gamma({a}, {x}) did not converge in {_MAX_ITER} iterations"
    )


def _scaled_series(a: float, x: float) -> float:
    """e**x * Gamma(a, x) via the lower-gamma power series (use for 0 < x < a + 1)."""
    if a == 0.0:
        # Gamma(0, x) = E1(x); power series is fine for the small x routed here.
        s = -_EULER - math.log(x)
        term = 1.0
        for k in range(1, _MAX_ITER + 1):
            term *= -x / k
            contrib = -term / k
            s += contrib
            if abs(contrib) < _EPS * abs(s):
                return math.exp(x) * s
        raise UnsupportedParameterError(f"E1 series did not converge at x={x}")
    # lower gamma: x^a e^-x sum_n x^n / (a (a+1) ... (a+n))
    ap = a
    summand = 1.0 / a
    total = summand
    for _ in range(_MAX_ITER):
        ap += 1.0
        summand *= x / ap
        total += summand
        if abs(summand) < abs(total) * _EPS:
            return math.exp(x) * math.gamma(a) - x**a * total
    raise UnsupportedParameterError(f"series for Gamma({a}, {x}) did not converge")


def scaled_upper_gamma(a: float, x: float) -> float:
    """Return e**x * Gamma(a, x), stable for large x where Gamma(a, x) underflows.

    Supported for x > 0 and a > -1 (negative non-integer a is reduced with the
    recurrence Gamma(a, x) = (Gamma(a+1, x) - x**a e**-x) / a, which in scaled
    form reads S(a, x) = (S(a+1, x) - x**a) / a).
    """
    if not x > 0.0:
        raise DomainError(f"upper incomplete gamma requires x > 0, got x={x}")
    if a <= -1.0:
        raise UnsupportedParameterError(
            f"upper incomplete gamma implemented for a > -1 only, got a={a}"
        )
    if a < 0.0:
        return (scaled_upper_gamma(a + 1.0, x) - x**a) / a
    if x < a + 1.0:
        return _scaled_series(a, x)
    return _scaled_cf(a, x)


def upper_incomplete_gamma(a: float, x: float) -> float:
    """Upper incomplete gamma Gamma(a, x) = integral_x^inf t**(a-1) e**-t dt.

    Relative accuracy is ~1e-14 in the regime used here (a in [-1/4, 3/4],
    x up to a few hundred); underflows smoothly to 0 for very large x.
    """
    s = scaled_upper_gamma(a, x)
    if x > 700.0:
        # e**-x underflows; reconstruct via logs where the sign permits.
        if s <= 0.0:
            return 0.0
        return math.exp(math.log(s) - x)
    return s * math.exp(-x)


@dataclass(frozen=True)
class FocusingGeometry:
    """Lens input waist w_L and focal length f (mm); u = w_L / f is dimensionless."""

    waist_mm: float
    focal_mm: float
    u: float

    def __post_init__(self) -> None:
        if not (self.waist_mm > 0.0 and self.focal_mm > 0.0):
            raise DomainError("waist and focal length must be positive")
        if not self.u > 0.0:
            raise DomainError(f"focusing strength must be positive, got u={self.u}")
        ratio = self.waist_mm / self.focal_mm
        if abs(ratio - self.u) > 1e-12 * max(abs(self.u), 1.0):
            raise DomainError(
                f"stored u={self.u} inconsistent with waist/focal={ratio}"
            )

    @classmethod
    def from_waist_and_focal(cls, waist_mm: float, focal_mm: float) -> "FocusingGeometry":
        if not (waist_mm > 0.0 and focal_mm > 0.0):
            raise DomainError("waist and focal length must be positive")
        return cls(waist_mm=waist_mm, focal_mm=focal_mm, u=waist_mm / focal_mm)

    @classmethod
    def from_strength(cls, u: float) -> "FocusingGeometry":
        if not u > 0.0:
            raise DomainError(f"focusing strength must be positive, got u={u}")
        return cls(waist_mm=u, focal_mm=1.0, u=u)


@dataclass(frozen=True)
class OverlapResult:
    """Overlap parameter eta_p and scattering ratio R_sc = 4 * eta_p."""

    eta_p: float
    r_sc: float


def overlap_from_focusing(geometry: FocusingGeometry) -> OverlapResult:
    """Overlap parameter from the focusing strength.

    eta_p = R_sc / 4 = 3 / (16 u^3) * e^(2/u^2)
            * [Gamma(-1/4, 1/u^2) + u * Gamma(1/4, 1/u^2)]^2

    Valid for 0 < u <= 2 (the strong-focusing expression is used only inside
    that window; larger u is rejected rather than extrapolated).
    """
    u = geometry.u
    if not 0.0 < u <= 2.0:
        raise DomainError(f"overlap formula restricted to 0 < u <= 2, got u={u}")
    x = 1.0 / (u * u)
    # e^(2/u^2) * [Gamma(-1/4,x) + u Gamma(1/4,x)]^2 == [S(-1/4,x) + u S(1/4,x)]^2
    bracket = scaled_upper_gamma(-0.25, x) + u * scaled_upper_gamma(0.25, x)
    eta = 3.0 / (16.0 * u**3) * bracket * bracket
    return OverlapResult(eta_p=eta, r_sc=4.0 * eta)
