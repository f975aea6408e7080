"""Numerical verification of the weighted integral and convexity inequalities.

Every bound used by the stability conditions is checked here directly against
closed-form integrals of concrete test functions: the weighted Bessel-type
bound with up-to-cubic projections, its derivative form written in boundary
values and iterated integrals, the reciprocally convex combination bound, and
its exponentially weighted two-segment variant.  The suite runners draw seeded
random cases for bulk validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import WeightedBasis
from .funcspace import ScalarFunc, TestFunction, random_test_function

__all__ = [
    "InequalityReport",
    "DerivativeReport",
    "RciReport",
    "WrciReport",
    "SuiteCase",
    "verify_weighted_inequality",
    "verify_derivative_inequality",
    "verify_rci",
    "verify_wrci",
    "equality_case",
    "run_inequality_suite",
    "SUITE_KINDS",
]

MAX_ORDER = 3


@dataclass(frozen=True)
class InequalityReport:
    lhs: float
    rhs: float
    slack: float
    scale: float
    order: int
    rhs_by_order: np.ndarray  # cumulative right side through orders 0..order


@dataclass(frozen=True)
class DerivativeReport:
    lhs: float
    rhs: float
    slack: float
    scale: float
    order: int
    rhs_by_order: np.ndarray
    # worst mismatch between direct projections of the derivative and the
    # boundary-value/iterated-integral representation; both routes are kept
    corollary_gap: float


@dataclass(frozen=True)
class RciReport:
    lhs: float
    rhs: float
    slack: float
    scale: float


@dataclass(frozen=True)
class WrciReport:
    lhs: float
    rhs: float
    slack: float
    scale: float
    split_near: float  # per-segment order-0 bound over [theta1, theta]
    split_far: float  # same over [theta, theta2]
    split_slack: float  # lhs - (split_near + split_far), also nonnegative


def _projection_matrix(tf: TestFunction, basis: WeightedBasis, order: int) -> np.ndarray:
    """Omega[k] = int rho(v) g_k(v) dv, rows k = 0..order, columns coordinates."""
    polys = basis.polynomials()
    # moments of each coordinate against 1, v, v^2, v^3; g_k combos are algebra
    vm = np.empty((MAX_ORDER + 1, tf.dim))
    for j in range(MAX_ORDER + 1):
        vm[j] = tf.project([0.0] * j + [1.0], basis.c1, basis.c2)
    out = np.zeros((order + 1, tf.dim))
    for k in range(order + 1):
        for j, coef in enumerate(polys[k].coef):
            out[k] += float(np.real(coef)) * vm[j]
    return out


def _bessel_rhs(omega: np.ndarray, gram: np.ndarray, norms: np.ndarray, order: int) -> np.ndarray:
    cum = np.empty(order + 1)
    total = 0.0
    for k in range(order + 1):
        total += float(omega[k] @ gram @ omega[k]) / norms[k]
        cum[k] = total
    return cum


def verify_weighted_inequality(
    tf: TestFunction,
    gram: np.ndarray,
    c1: float,
    c2: float,
    delta: float,
    order: int = MAX_ORDER,
) -> InequalityReport:
    """Check the weighted lower bound

        int_{c1}^{c2} e^{delta(v-c2)} rho^T G rho dv
            >= sum_{k<=order} (1/N_k) Omega_k^T G Omega_k,

    with unweighted projections Omega_k = int rho g_k dv and N_k the squared
    norms of g_k under the reciprocal weight e^{-delta(v-c2)}.
    """
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in 0..{MAX_ORDER}, got {order!r}")
    gram = np.asarray(gram, dtype=float)
    basis = WeightedBasis.build(c1, c2, delta)
    lhs = tf.weighted_energy(gram, delta, c2, c1, c2)
    omega = _projection_matrix(tf, basis, order)
    cum = _bessel_rhs(omega, gram, basis.norms, order)
    rhs = float(cum[-1])
    scale = max(abs(lhs), abs(rhs))
    return InequalityReport(
        lhs=lhs, rhs=rhs, slack=lhs - rhs, scale=scale, order=order, rhs_by_order=cum
    )


def _boundary_projections(tf: TestFunction, basis: WeightedBasis, order: int) -> np.ndarray:
    """Omega_k for the derivative of tf, written without differentiating:

    Omega_k = g_k(c2) x(c2) - g_k(c1) x(c1) - int x g_k' dv, with the moment
    integrals folded into single, double, and triple integrals of x
    (int int x = int (u-c1) x du, int int int x = int (u-c1)^2/2 x du).
    """
    c1, c2 = basis.c1, basis.c2
    x1 = tf(c1)
    x2 = tf(c2)
    i1 = tf.project([1.0], c1, c2)
    i2 = tf.project([-c1, 1.0], c1, c2)
    i3 = tf.project([c1 * c1 / 2.0, -c1, 0.5], c1, c2)
    co = basis.coefficients
    polys = basis.polynomials()
    rows = [x2 - x1]
    if order >= 1:
        g = polys[1]
        rows.append(float(np.real(g(c2))) * x2 - float(np.real(g(c1))) * x1 - i1)
    if order >= 2:
        g = polys[2]
        rows.append(
            float(np.real(g(c2))) * x2
            - float(np.real(g(c1))) * x1
            - 2.0 * i2
            - (2.0 * c1 + co.c_coef) * i1
        )
    if order >= 3:
        g = polys[3]
        rows.append(
            float(np.real(g(c2))) * x2
            - float(np.real(g(c1))) * x1
            - 6.0 * i3
            - (6.0 * c1 + 2.0 * co.hbar) * i2
            - (3.0 * c1 * c1 + 2.0 * co.hbar * c1 + co.q_coef) * i1
        )
    return np.stack(rows)


def verify_derivative_inequality(
    tf: TestFunction,
    gram: np.ndarray,
    c1: float,
    c2: float,
    delta: float,
    order: int = MAX_ORDER,
) -> DerivativeReport:
    """Weighted lower bound on the derivative energy of tf.

    Same Bessel bound applied to the derivative, with the projections computed
    twice: directly from the derivative, and through the boundary-value form
    that the assembled conditions use.  Both routes must agree; the report
    carries their gap.
    """
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in 0..{MAX_ORDER}, got {order!r}")
    gram = np.asarray(gram, dtype=float)
    basis = WeightedBasis.build(c1, c2, delta)
    dtf = tf.derivative()
    lhs = dtf.weighted_energy(gram, delta, c2, c1, c2)
    omega_direct = _projection_matrix(dtf, basis, order)
    omega_bdry = _boundary_projections(tf, basis, order)
    col_scale = 1.0 + np.abs(omega_direct).max()
    gap = float(np.abs(omega_direct - omega_bdry).max() / col_scale)
    cum = _bessel_rhs(omega_bdry, gram, basis.norms, order)
    rhs = float(cum[-1])
    scale = max(abs(lhs), abs(rhs))
    return DerivativeReport(
        lhs=lhs,
        rhs=rhs,
        slack=lhs - rhs,
        scale=scale,
        order=order,
        rhs_by_order=cum,
        corollary_gap=gap,
    )


def verify_rci(
    y1: np.ndarray,
    y2: np.ndarray,
    gram1: np.ndarray,
    gram2: np.ndarray,
    coupling: np.ndarray,
    alpha: float,
) -> RciReport:
    """Reciprocally convex bound with possibly different diagonal blocks:

        (1/alpha) y1^T G1 y1 + (1/(1-alpha)) y2^T G2 y2
            >= [y1; y2]^T [[G1, S], [S^T, G2]] [y1; y2]

    valid whenever the coupled block matrix is positive semidefinite.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    lhs = float(y1 @ gram1 @ y1) / alpha + float(y2 @ gram2 @ y2) / (1.0 - alpha)
    cross = 2.0 * float(y1 @ coupling @ y2)
    rhs = float(y1 @ gram1 @ y1) + float(y2 @ gram2 @ y2) + cross
    scale = max(abs(lhs), abs(rhs))
    return RciReport(lhs=lhs, rhs=rhs, slack=lhs - rhs, scale=scale)


def _segment_gain(delta: float, width: float) -> float:
    """delta / (e^{delta*width} - 1), continuous through delta = 0."""
    if width <= 0.0:
        return math.inf
    x = delta * width
    if abs(x) < 1e-12:
        return (1.0 - x / 2.0) / width
    return delta / math.expm1(x)


def verify_wrci(
    x: TestFunction,
    gram: np.ndarray,
    coupling: np.ndarray,
    theta1: float,
    theta: float,
    theta2: float,
    delta: float,
) -> WrciReport:
    """Exponentially weighted two-segment reciprocally convex bound.

    For x on [-theta2, -theta1] split at -theta,

        int_{-theta2}^{-theta1} e^{delta(theta1 + s)} x'(s)^T G x'(s) ds
            >= delta/(e^{delta(theta2-theta1)} - 1)
               * [Y1; Y2]^T [[G, S], [S^T, G]] [Y1; Y2],

    Y1 = x(-theta1) - x(-theta), Y2 = x(-theta) - x(-theta2).  The report also
    carries the per-segment order-0 bounds the proof chains through; each is a
    valid lower bound on its own segment's weighted energy.
    """
    if not theta1 <= theta <= theta2:
        raise ValueError(f"need theta1 <= theta <= theta2, got {(theta1, theta, theta2)!r}")
    if theta1 >= theta2:
        raise ValueError("need theta1 < theta2")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta!r}")
    gram = np.asarray(gram, dtype=float)
    dx = x.derivative()
    lhs = dx.weighted_energy(gram, delta, -theta1, -theta2, -theta1)
    y1 = x(-theta1) - x(-theta)
    y2 = x(-theta) - x(-theta2)
    gain = _segment_gain(delta, theta2 - theta1)
    rhs = gain * (
        float(y1 @ gram @ y1) + float(y2 @ gram @ y2) + 2.0 * float(y1 @ coupling @ y2)
    )
    scale = max(abs(lhs), abs(rhs))

    # proof-side split: order-0 weighted bound per segment, with the weight
    # anchor kept at -theta1 on both (the far segment's extra decay factor
    # e^{-delta(theta-theta1)} scales its reciprocal norm)
    near_w = theta - theta1
    far_w = theta2 - theta
    split_near = 0.0
    if near_w > 0.0:
        split_near = _segment_gain(delta, near_w) * float(y1 @ gram @ y1)
    split_far = 0.0
    if far_w > 0.0:
        norm_far = (math.exp(delta * (theta2 - theta1)) - math.exp(delta * near_w)) / delta if delta > 0 else far_w
        split_far = float(y2 @ gram @ y2) / norm_far
    return WrciReport(
        lhs=lhs,
        rhs=rhs,
        slack=lhs - rhs,
        scale=scale,
        split_near=split_near,
        split_far=split_far,
        split_slack=lhs - (split_near + split_far),
    )


def equality_case(basis: WeightedBasis, order_k: int, direction: np.ndarray) -> TestFunction:
    """Test function attaining equality at orders >= order_k:

    rho(v) = e^{-delta(v - c2)} g_k(v) * direction.
    """
    if not 0 <= order_k <= MAX_ORDER:
        raise ValueError(f"order_k must be in 0..{MAX_ORDER}, got {order_k!r}")
    direction = np.atleast_1d(np.asarray(direction, dtype=float))
    g = basis.polynomials()[order_k]
    base = ScalarFunc.polynomial(np.real(g.coef)).weighted(-basis.delta, basis.c2)
    return TestFunction([float(d) * base for d in direction])


def _random_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    return a.T @ a + 0.1 * np.eye(n)


def _random_coupling(rng: np.random.Generator, gram1: np.ndarray, gram2: np.ndarray) -> np.ndarray:
    """Coupling S keeping [[G1, S], [S^T, G2]] strictly positive semidefinite."""
    n = gram1.shape[0]
    raw = rng.standard_normal((n, n))
    li = np.linalg.cholesky(gram1)
    lj = np.linalg.cholesky(gram2)
    mid = np.linalg.solve(li, raw) @ np.linalg.inv(lj.T)
    top = np.linalg.norm(mid, 2)
    return raw * (0.9 / top) if top > 0 else raw


@dataclass(frozen=True)
class SuiteCase:
    index: int
    kind: str
    dim: int
    c1: float
    c2: float
    delta: float
    lhs: float
    rhs: float
    slack: float
    scale: float
    rhs_prev_order: float  # cumulative rhs one order down (NaN where n/a)
    corollary_gap: float  # projection-route mismatch (NaN where n/a)


SUITE_KINDS = ("weighted", "derivative", "rci", "wrci")


def run_inequality_suite(
    kind: str,
    num_cases: int,
    seed: int,
    dims: tuple[int, ...] = (1, 2, 3),
) -> list[SuiteCase]:
    """Seeded random verification suite for one inequality family."""
    if kind not in SUITE_KINDS:
        raise ValueError(f"unknown suite kind {kind!r}; expected one of {SUITE_KINDS}")
    rng = np.random.default_rng(seed)
    cases: list[SuiteCase] = []
    for index in range(num_cases):
        dim = int(rng.choice(dims))
        width = float(rng.uniform(0.2, 4.0))
        c2 = float(rng.uniform(-0.25, 0.25)) * width
        c1 = c2 - width
        delta = float(rng.uniform(0.0, min(6.0, 8.0 / width)))
        gram = _random_spd(rng, dim)
        prev = math.nan
        gap = math.nan
        if kind == "weighted":
            tf = random_test_function(rng, dim)
            rep = verify_weighted_inequality(tf, gram, c1, c2, delta)
            lhs, rhs, slack, scale = rep.lhs, rep.rhs, rep.slack, rep.scale
            prev = float(rep.rhs_by_order[-2])
        elif kind == "derivative":
            tf = random_test_function(rng, dim)
            rep = verify_derivative_inequality(tf, gram, c1, c2, delta)
            lhs, rhs, slack, scale = rep.lhs, rep.rhs, rep.slack, rep.scale
            prev = float(rep.rhs_by_order[-2])
            gap = rep.corollary_gap
        elif kind == "rci":
            gram2 = _random_spd(rng, dim)
            coupling = _random_coupling(rng, gram, gram2)
            y1 = rng.standard_normal(dim)
            y2 = rng.standard_normal(dim)
            alpha = float(rng.uniform(0.05, 0.95))
            rep = verify_rci(y1, y2, gram, gram2, coupling, alpha)
            lhs, rhs, slack, scale = rep.lhs, rep.rhs, rep.slack, rep.scale
        else:
            tf = random_test_function(rng, dim)
            theta1 = float(rng.uniform(0.0, 1.0))
            theta2 = theta1 + width
            theta = float(rng.uniform(theta1, theta2))
            coupling = _random_coupling(rng, gram, gram)
            rep = verify_wrci(tf, gram, coupling, theta1, theta, theta2, delta)
            lhs, rhs, slack, scale = rep.lhs, rep.rhs, rep.slack, rep.scale
            prev = rep.split_near + rep.split_far
        cases.append(
            SuiteCase(
                index=index,
                kind=kind,
                dim=dim,
                c1=c1,
                c2=c2,
                delta=delta,
                lhs=lhs,
                rhs=rhs,
                slack=slack,
                scale=scale,
                rhs_prev_order=prev,
                corollary_gap=gap,
            )
        )
    return cases
