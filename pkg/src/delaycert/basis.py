"""Orthogonal polynomial machinery for exponentially weighted integral bounds.

The integral inequalities used by the certification pipeline bound a weighted
energy integral from below by projections onto a cubic polynomial family,

    int_{c1}^{c2} e^{delta(v-c2)} rho(v)^T G rho(v) dv
        >= sum_k (1/N_k) (int rho g_k dv)^T G (int rho g_k dv),

where the projections on the right are *unweighted*.  For that bound to be a
Bessel inequality the monic polynomials g_0..g_3 must be orthogonal under the
reciprocal weight e^{-delta(v-c2)}, and N_k is the squared norm under that same
reciprocal weight.  This module computes the power moments of either weight
direction, the monic coefficients, and the norms, with a series/recurrence
split that stays accurate through delta -> 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, exp, expm1, factorial

import numpy as np
from numpy.polynomial import Polynomial

__all__ = [
    "DegenerateBasisError",
    "OrthogonalCoefficients",
    "WeightedBasis",
    "compute_moments",
    "compute_coefficients",
    "limit_coefficients",
    "limit_weights",
]

MAX_POWER = 6

# |delta*(c2-c1)| at or below this uses the Taylor series in delta; above it the
# integration-by-parts recurrence is stable (error growth ~ prod_i i/|x| stays
# bounded once |x| > 2, while the series needs ~|x| terms to converge).
SERIES_SWITCH = 2.0
_SERIES_CAP = 60


class DegenerateBasisError(ValueError):
    """Moment matrix is singular; the orthogonal family is not defined."""


def _validate_interval(c1: float, c2: float) -> None:
    if not (np.isfinite(c1) and np.isfinite(c2)):
        raise ValueError("interval endpoints must be finite")
    if c1 >= c2:
        raise ValueError(f"invalid interval: c1={c1!r} must be < c2={c2!r}")


def _moments_signed(c1: float, c2: float, delta: float, max_power: int) -> np.ndarray:
    """Moments int_{c1}^{c2} e^{delta(v-c2)} v^i dv for any real delta."""
    length = c2 - c1
    x = delta * length
    if abs(x) <= SERIES_SWITCH:
        return _moments_series(c1, length, delta, max_power)
    return _moments_recurrence(c1, c2, delta, max_power)


def _moments_series(c1: float, length: float, delta: float, max_power: int) -> np.ndarray:
    # Lam_i = sum_j delta^j/j! * int (v-c2)^j v^i dv.  With u = v-c2 in [-L,0]
    # the inner integral is sum_l C(i,l) c2^{i-l} * int_{-L}^0 u^{j+l} du, all
    # exact monomial quantities, so the only truncation is the series tail.
    c2 = c1 + length
    out = np.empty(max_power + 1)
    for i in range(max_power + 1):
        total = 0.0
        for j in range(_SERIES_CAP + 1):
            inner = 0.0
            for l in range(i + 1):
                p = j + l + 1
                u_int = -((-length) ** p) / p
                inner += comb(i, l) * c2 ** (i - l) * u_int
            term = delta**j / factorial(j) * inner
            total += term
            if j >= 4 and abs(term) <= 1e-17 * abs(total):
                break
        out[i] = total
    return out


def _moments_recurrence(c1: float, c2: float, delta: float, max_power: int) -> np.ndarray:
    x = delta * (c2 - c1)
    decay = exp(-x)
    out = np.empty(max_power + 1)
    out[0] = -expm1(-x) / delta
    for i in range(1, max_power + 1):
        out[i] = (c2**i - c1**i * decay) / delta - (i / delta) * out[i - 1]
    return out


def compute_moments(
    c1: float, c2: float, delta: float, max_power: int = MAX_POWER
) -> np.ndarray:
    """Power moments Lam_i = int_{c1}^{c2} e^{delta(v-c2)} v^i dv, i = 0..max_power.

    Closed-form evaluation: integration-by-parts recurrence when the decay span
    delta*(c2-c1) exceeds the series switch, truncated Taylor series in delta
    below it.  The two branches agree to ~1e-12 relative at the switch.
    """
    _validate_interval(c1, c2)
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta!r}")
    if not 0 <= max_power <= MAX_POWER:
        raise ValueError(f"max_power must be in 0..{MAX_POWER}, got {max_power!r}")
    return _moments_signed(c1, c2, delta, max_power)


@dataclass(frozen=True)
class OrthogonalCoefficients:
    """Monic coefficients and squared norms of the orthogonal family g_0..g_3.

    g_0 = 1, g_1 = v + kbar, g_2 = v^2 + c_coef*v + m_coef,
    g_3 = v^3 + hbar*v^2 + q_coef*v + r_coef.
    """

    kbar: float
    c_coef: float
    m_coef: float
    hbar: float
    q_coef: float
    r_coef: float
    norms: np.ndarray  # squared norms of g_0..g_3, shape (4,)

    def polynomials(self) -> list[Polynomial]:
        return [
            Polynomial([1.0]),
            Polynomial([self.kbar, 1.0]),
            Polynomial([self.m_coef, self.c_coef, 1.0]),
            Polynomial([self.r_coef, self.q_coef, self.hbar, 1.0]),
        ]


def _det_scale(*terms: float) -> float:
    return max(abs(t) for t in terms)


def compute_coefficients(moments: np.ndarray) -> OrthogonalCoefficients:
    """Orthogonal-family coefficients and norms from moments Lam_0..Lam_6.

    Closed forms: each g_k is the monic degree-k polynomial orthogonal to all
    lower degrees in the inner product whose power moments are `moments`.  The
    linear/quadratic coefficients come from 2x2 Cramer solves, the cubic from
    the 3x3 Hankel system; norms are the expanded quadratic forms in the
    moments.  Raises DegenerateBasisError when a Hankel determinant vanishes
    relative to its term magnitudes (moments of a degenerate measure).
    """
    moments = np.asarray(moments, dtype=float)
    if moments.shape != (MAX_POWER + 1,):
        raise ValueError(f"expected {MAX_POWER + 1} moments, got shape {moments.shape}")
    l0, l1, l2, l3, l4, l5, l6 = moments
    if not l0 > 0:
        raise ValueError(f"zeroth moment must be positive, got {l0!r}")

    kbar = -l1 / l0

    den2 = l1 * l1 - l2 * l0
    if abs(den2) <= 1e3 * np.finfo(float).eps * _det_scale(l1 * l1, l2 * l0):
        raise DegenerateBasisError("quadratic moment matrix is singular")
    m_coef = (l2 * l2 - l1 * l3) / den2
    c_coef = (l0 * l3 - l1 * l2) / den2

    den3 = l4 * l1 * l1 - 2 * l1 * l2 * l3 + l2**3 - l0 * l2 * l4 + l0 * l3 * l3
    scale3 = _det_scale(l4 * l1 * l1, 2 * l1 * l2 * l3, l2**3, l0 * l2 * l4, l0 * l3 * l3)
    if abs(den3) <= 1e3 * np.finfo(float).eps * scale3:
        raise DegenerateBasisError("cubic moment matrix is singular")
    hbar = (
        -l5 * l1 * l1 + l4 * l1 * l2 + l1 * l3 * l3 - l2 * l2 * l3 + l0 * l5 * l2 - l0 * l4 * l3
    ) / den3
    q_coef = (
        -l2 * l2 * l4 + l2 * l3 * l3 + l1 * l5 * l2 - l1 * l3 * l4 - l0 * l5 * l3 + l0 * l4 * l4
    ) / den3
    r_coef = -(l5 * l2 * l2 - 2 * l2 * l3 * l4 + l3**3 - l1 * l5 * l3 + l1 * l4 * l4) / den3

    norms = np.array(
        [
            l0,
            l2 + 2 * kbar * l1 + kbar * kbar * l0,
            l4
            + 2 * c_coef * l3
            + (c_coef * c_coef + 2 * m_coef) * l2
            + 2 * m_coef * c_coef * l1
            + m_coef * m_coef * l0,
            l6
            + 2 * hbar * l5
            + (hbar * hbar + 2 * q_coef) * l4
            + (2 * hbar * q_coef + 2 * r_coef) * l3
            + (2 * hbar * r_coef + q_coef * q_coef) * l2
            + 2 * q_coef * r_coef * l1
            + r_coef * r_coef * l0,
        ]
    )
    if not np.all(norms > 0):
        raise DegenerateBasisError(f"non-positive squared norm in {norms!r}")
    return OrthogonalCoefficients(
        kbar=float(kbar),
        c_coef=float(c_coef),
        m_coef=float(m_coef),
        hbar=float(hbar),
        q_coef=float(q_coef),
        r_coef=float(r_coef),
        norms=norms,
    )


def limit_coefficients(c1: float, c2: float) -> OrthogonalCoefficients:
    """Closed-form delta -> 0 limit: the monic Legendre family shifted to [c1, c2]."""
    _validate_interval(c1, c2)
    length = c2 - c1
    s = c1 + c2
    norms = np.array(
        [length, length**3 / 12.0, length**5 / 180.0, length**7 / 2800.0]
    )
    return OrthogonalCoefficients(
        kbar=-s / 2.0,
        c_coef=-s,
        m_coef=(c1 * c1 + 4 * c1 * c2 + c2 * c2) / 6.0,
        hbar=-3.0 * s / 2.0,
        q_coef=3.0 * (c1 * c1 + 3 * c1 * c2 + c2 * c2) / 5.0,
        r_coef=-s * (c1 * c1 + 8 * c1 * c2 + c2 * c2) / 20.0,
        norms=norms,
    )


def limit_weights(c1: float, c2: float) -> np.ndarray:
    """Unweighted-limit inequality weights (c2-c1)/N_k = {1, 12/L^2, 180/L^4, 2800/L^6}."""
    _validate_interval(c1, c2)
    length = c2 - c1
    return np.array(
        [1.0, 12.0 / length**2, 180.0 / length**4, 2800.0 / length**6]
    )


@dataclass(frozen=True)
class WeightedBasis:
    """Orthogonal basis data for the weighted integral inequality on [c1, c2].

    `moments` holds the norm-side (reciprocal-weight) power moments
    int e^{-delta(v-c2)} v^i dv; the inequality's left side integrates against
    e^{+delta(v-c2)}.  Coefficients and `norms` are derived from `moments`, so
    the stored family is exactly the one the Bessel bound requires.
    """

    c1: float
    c2: float
    delta: float
    moments: np.ndarray  # reciprocal-weight moments Lam~_0..Lam~_6, shape (7,)
    coefficients: OrthogonalCoefficients

    @classmethod
    def build(cls, c1: float, c2: float, delta: float) -> "WeightedBasis":
        _validate_interval(c1, c2)
        if delta < 0:
            raise ValueError(f"delta must be >= 0, got {delta!r}")
        if delta == 0:
            norm_moments = _moments_signed(c1, c2, 0.0, MAX_POWER)
        else:
            norm_moments = _moments_signed(c1, c2, -delta, MAX_POWER)
        coeffs = compute_coefficients(norm_moments)
        return cls(
            c1=float(c1),
            c2=float(c2),
            delta=float(delta),
            moments=norm_moments,
            coefficients=coeffs,
        )

    # convenience pass-throughs used heavily by the assembly code
    @property
    def kbar(self) -> float:
        return self.coefficients.kbar

    @property
    def c_coef(self) -> float:
        return self.coefficients.c_coef

    @property
    def m_coef(self) -> float:
        return self.coefficients.m_coef

    @property
    def hbar(self) -> float:
        return self.coefficients.hbar

    @property
    def q_coef(self) -> float:
        return self.coefficients.q_coef

    @property
    def r_coef(self) -> float:
        return self.coefficients.r_coef

    @property
    def norms(self) -> np.ndarray:
        return self.coefficients.norms

    def polynomials(self) -> list[Polynomial]:
        return self.coefficients.polynomials()

    def weight(self, v: np.ndarray | float) -> np.ndarray | float:
        """Inequality-side weight e^{delta(v-c2)} (<= 1 on the interval)."""
        return np.exp(self.delta * (np.asarray(v, dtype=float) - self.c2))

    def norm_weight(self, v: np.ndarray | float) -> np.ndarray | float:
        """Orthogonality/norm weight e^{-delta(v-c2)} (>= 1 on the interval)."""
        return np.exp(-self.delta * (np.asarray(v, dtype=float) - self.c2))
