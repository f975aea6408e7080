"""Functional evaluation along trajectories.

Links the matrix certificate to the dynamics: the augmented state collects the
15 windowed averages the quadratic form acts on, and the functional value is
what the certificate drives down at rate 2k.  Both accept arbitrary state
functions so tests can feed either simulated trajectories or synthetic smooth
signals.
"""

from __future__ import annotations

import math

import numpy as np

from .lmi import StabilityProblem
from .systems import Activation, DelayedNNSystem

__all__ = [
    "assemble_augmented_state",
    "evaluate_lkf",
    "dominance_gap",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


def _composite_nodes(a: float, b: float, panels: int) -> tuple[np.ndarray, np.ndarray]:
    edges = np.linspace(a, b, panels + 1)
    mids = (edges[:-1] + edges[1:]) / 2.0
    halves = (edges[1:] - edges[:-1]) / 2.0
    s = (mids[:, None] + halves[:, None] * _GL_NODES[None, :]).reshape(-1)
    w = (halves[:, None] * _GL_WEIGHTS[None, :]).reshape(-1)
    return s, w


def _segment_average(state_fn, a: float, b: float, power: int, panels: int) -> np.ndarray:
    """((power+1)/w^{power+1}) * int_a^b (s-a)^power x(s) ds, endpoint value when collapsed."""
    w = b - a
    if w <= 1e-9 * max(1.0, abs(a), abs(b)):
        return np.atleast_1d(np.asarray(state_fn(0.5 * (a + b)), dtype=float))
    s, wts = _composite_nodes(a, b, panels)
    vals = np.atleast_2d(np.asarray(state_fn(s), dtype=float))
    kernel = (s - a) ** power if power else np.ones_like(s)
    integral = (wts * kernel) @ vals
    return integral * (power + 1) / w ** (power + 1)


def assemble_augmented_state(
    state_fn,
    system: DelayedNNSystem,
    h: float,
    t: float,
    delay_value: float,
    xi: float,
    activation: Activation | None = None,
    panels: int = 192,
) -> np.ndarray:
    """Stack the 15 blocks the decay form acts on, at time t.

    state_fn must cover [t-h, t]; delay_value is h(t) and must lie in [0, h].
    """
    if not 0.0 <= delay_value <= h:
        raise ValueError(f"delay value must lie in [0, {h!r}], got {delay_value!r}")
    if not 0.0 < xi < h:
        raise ValueError(f"xi must lie in (0, {h!r}), got {xi!r}")
    act = activation if activation is not None else system.activation()

    def at(s: float) -> np.ndarray:
        return np.atleast_1d(np.asarray(state_fn(s), dtype=float))

    near_a = t - delay_value
    far_a = t - h
    blocks = [
        at(t),
        at(near_a),
        at(far_a),
        act(at(t)),
        act(at(near_a)),
        _segment_average(state_fn, far_a, t, 0, panels),
        _segment_average(state_fn, near_a, t, 0, panels),
        _segment_average(state_fn, far_a, near_a, 0, panels),
        _segment_average(state_fn, far_a, t, 1, panels),
        _segment_average(state_fn, near_a, t, 1, panels),
        _segment_average(state_fn, far_a, near_a, 1, panels),
        _segment_average(state_fn, far_a, t, 2, panels),
        _segment_average(state_fn, near_a, t, 2, panels),
        _segment_average(state_fn, far_a, near_a, 2, panels),
        at(t - xi),
    ]
    return np.concatenate(blocks)


def _quad_form_integral(
    fn_values: np.ndarray, weights: np.ndarray, matrix: np.ndarray
) -> float:
    return float(np.einsum("m,mi,ij,mj->", weights, fn_values, matrix, fn_values))


def evaluate_lkf(
    system: DelayedNNSystem,
    h: float,
    k: float,
    xi: float,
    mats: dict[str, np.ndarray],
    state_fn,
    deriv_fn,
    t: float,
    delay_value: float,
    activation: Activation | None = None,
    panels: int = 192,
    detail: bool = False,
):
    """Value of the certified energy functional at time t.

    state_fn and deriv_fn must cover [t-h, t]; delay_value is h(t).  The
    internal exponential weights are relative to t, so the quantity the
    certificate decreases is exp(2kt) times this value.
    """
    if not 0.0 <= delay_value <= h:
        raise ValueError(f"delay value must lie in [0, {h!r}], got {delay_value!r}")
    act = activation if activation is not None else system.activation()
    lmat = system.slope_matrix

    s_full, w_full = _composite_nodes(t - h, t, panels)
    r_full = np.atleast_2d(np.asarray(state_fn(s_full), dtype=float))
    dx_full = np.atleast_2d(np.asarray(deriv_fn(s_full), dtype=float))
    v = s_full - t  # in [-h, 0]
    decay = np.exp(2.0 * k * v)

    r_t = np.atleast_1d(np.asarray(state_fn(t), dtype=float))

    parts: dict[str, float] = {}

    # quadratic history state
    i1 = w_full @ r_full
    i2 = (w_full * (v + h)) @ r_full
    zeta = np.concatenate([r_t, i1, (2.0 / h) * i2])
    parts["state"] = float(zeta @ mats["P"] @ zeta)

    # activation potentials
    g_int = act.integral(r_t)
    d1 = np.diagonal(mats["D1"])
    d2 = np.diagonal(mats["D2"])
    sector_int = np.diagonal(lmat) * r_t**2 / 2.0 - g_int
    parts["activation"] = float(2.0 * (d1 @ g_int) + 2.0 * (d2 @ sector_int))

    # sliding-window energy over the moving delay segment
    s_near, w_near = _composite_nodes(t - delay_value, t, panels)
    r_near = np.atleast_2d(np.asarray(state_fn(s_near), dtype=float))
    eta_near = np.hstack([r_near, act(r_near)])
    w2 = np.exp(2.0 * k * (s_near - t + h)) * w_near
    parts["window"] = _quad_form_integral(eta_near, w2, mats["Q"])

    # fixed-window energies, split at the reference lag
    wu = decay * math.exp(2.0 * k * h) * w_full
    parts["fixed_windows"] = _quad_form_integral(r_full, wu, mats["U1"])
    s_u2, w_u2 = _composite_nodes(t - xi, t, panels)
    r_u2 = np.atleast_2d(np.asarray(state_fn(s_u2), dtype=float))
    parts["fixed_windows"] += _quad_form_integral(
        r_u2, np.exp(2.0 * k * (s_u2 - t + h)) * w_u2, mats["U2"]
    )
    s_u3, w_u3 = _composite_nodes(t - h, t - xi, panels)
    r_u3 = np.atleast_2d(np.asarray(state_fn(s_u3), dtype=float))
    parts["fixed_windows"] += _quad_form_integral(
        r_u3, np.exp(2.0 * k * (s_u3 - t + h)) * w_u3, mats["U3"]
    )

    # double-integral energies, reduced to single integrals with ramp kernels
    ramp = h * decay * (v + h) * w_full
    z134 = mats["Z1"] + mats["Z3"] + mats["Z4"]
    parts["double_rate"] = _quad_form_integral(dx_full, ramp, z134)
    parts["double_state"] = _quad_form_integral(r_full, ramp, mats["Z2"])

    # triangle-kernel energies; both kernels vanish at the old endpoint and
    # reach h^2/2 at s = t, so no boundary term leaks out of the window
    w_n1 = decay * ((v + h) ** 2 / 2.0) * w_full
    w_n2 = decay * ((h * h - v * v) / 2.0) * w_full
    parts["triangle"] = _quad_form_integral(dx_full, w_n1, mats["N1"])
    parts["triangle"] += _quad_form_integral(dx_full, w_n2, mats["N2"])

    # delay-fraction interpolated energy
    alpha = delay_value / h
    m_mix = alpha * mats["M1"] + (1.0 - alpha) * mats["M2"]
    parts["interpolated"] = float(r_t @ m_mix @ r_t)

    total = float(sum(parts.values()))
    if detail:
        return total, parts
    return total


def dominance_gap(
    problem: StabilityProblem,
    x: np.ndarray,
    chi: np.ndarray,
    delay_value: float,
) -> float:
    """Value of the dominating quadratic form at an interior delay value.

    The two compiled decay constraints hold the form at the delay extremes;
    interior values are their convex combination.
    """
    if not 0.0 <= delay_value <= problem.h:
        raise ValueError(
            f"delay value must lie in [0, {problem.h!r}], got {delay_value!r}"
        )
    alpha = delay_value / problem.h
    g_full = problem.constraints[0].evaluate(x)
    g_zero = problem.constraints[1].evaluate(x)
    q_full = float(chi @ g_full @ chi)
    q_zero = float(chi @ g_zero @ chi)
    shift = problem.constraints[0].margin * float(chi @ chi)
    return -(alpha * q_full + (1.0 - alpha) * q_zero) - shift
