"""Fixed-step simulation of the delayed dynamics with C1 dense output.

Classical RK4 on a uniform grid; delayed state lookups go through a cubic
Hermite interpolant over already-computed nodes, which keeps the dense output
C1 and the overall scheme fourth order away from propagated derivative
breaks.  Stage lookups reach at most step/1 into the past relative to the
segment front, so steps at or below a quarter of the minimum delay never
touch unknown values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .systems import Activation, DelayedNNSystem, DelaySignal

__all__ = ["Trajectory", "simulate", "estimate_decay_rate", "find_equilibrium"]

DEFAULT_BLOWUP = 1e12


@dataclass(frozen=True)
class Trajectory:
    """Uniform-grid solution with node derivatives for Hermite evaluation."""

    t: np.ndarray  # (m,)
    r: np.ndarray  # (m, n)
    dr: np.ndarray  # (m, n)
    blew_up: bool

    @property
    def step(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def dim(self) -> int:
        return self.r.shape[1]

    def __call__(self, when):
        """Hermite-interpolated state; scalar -> (n,), array -> (m, n)."""
        when = np.asarray(when, dtype=float)
        scalar = when.ndim == 0
        tq = np.atleast_1d(when)
        if np.any(tq < self.t[0] - 1e-12) or np.any(tq > self.t[-1] + 1e-12):
            raise ValueError("evaluation time outside the computed range")
        dt = self.step
        idx = np.clip(((tq - self.t[0]) / dt).astype(int), 0, len(self.t) - 2)
        s = (tq - self.t[idx]) / dt
        s = np.clip(s, 0.0, 1.0)[:, None]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        out = (
            h00 * self.r[idx]
            + h10 * dt * self.dr[idx]
            + h01 * self.r[idx + 1]
            + h11 * dt * self.dr[idx + 1]
        )
        return out[0] if scalar else out

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.r, axis=1)


def _as_history(history, dim: int):
    if callable(history):
        return history
    vec = np.asarray(history, dtype=float).reshape(-1)
    if vec.shape != (dim,):
        raise ValueError(f"history vector must have {dim} entries, got {vec.shape}")
    return lambda s: vec


def simulate(
    system: DelayedNNSystem,
    delay: DelaySignal,
    history,
    t_final: float,
    step: float | None = None,
    activation: Activation | None = None,
    blowup: float = DEFAULT_BLOWUP,
) -> Trajectory:
    """Integrate the closed loop from t = 0 with the given initial history.

    `history` is a callable on [-h_max, 0] or a constant vector.  The step
    must not exceed a quarter of the minimum delay so that every RK4 stage
    lookup lands on completed segments; the default is
    min(h_max/200, h_min/4).  On state norms passing `blowup` the trajectory
    is truncated and flagged.
    """
    if t_final <= 0:
        raise ValueError(f"t_final must be positive, got {t_final!r}")
    if delay.h_min <= 0:
        raise ValueError(
            "delay reaching zero is not supported by the explicit stepper; "
            f"got minimum {delay.h_min!r}"
        )
    limit = delay.h_min / 4.0
    if step is None:
        step = min(delay.h_max / 200.0, limit)
    if step <= 0 or step > limit:
        raise ValueError(f"step must lie in (0, h_min/4] = (0, {limit:g}], got {step!r}")
    act = activation if activation is not None else system.activation()
    hist = _as_history(history, system.dim)

    num = int(np.ceil(t_final / step - 1e-12))
    dt = t_final / num
    k0, k1m, k2m = system.k0_diag, system.k1, system.k2

    t_nodes = np.arange(num + 1) * dt
    r = np.empty((num + 1, system.dim))
    dr = np.empty((num + 1, system.dim))
    r[0] = hist(0.0)

    def delayed_state(when: float) -> np.ndarray:
        if when <= 0.0:
            return np.asarray(hist(when), dtype=float)
        i = min(int(when / dt), front - 1)
        s = (when - t_nodes[i]) / dt
        s = min(max(s, 0.0), 1.0)
        s2, s3 = s * s, s * s * s
        return (
            (2 * s3 - 3 * s2 + 1) * r[i]
            + (s3 - 2 * s2 + s) * dt * dr[i]
            + (-2 * s3 + 3 * s2) * r[i + 1]
            + (s3 - s2) * dt * dr[i + 1]
        )

    def rhs(y: np.ndarray, y_del: np.ndarray) -> np.ndarray:
        return -k0 * y + k1m @ act(y) + k2m @ act(y_del)

    front = 0
    blew_up = False
    for i in range(num):
        t = t_nodes[i]
        y = r[i]
        front = i  # lookups may interpolate segments up to [front-1, front]
        d1 = delayed_state(t - float(delay(t)))
        k1 = rhs(y, d1)
        dr[i] = k1
        t_half = t + dt / 2.0
        d_half = delayed_state(t_half - float(delay(t_half)))
        k2 = rhs(y + dt / 2.0 * k1, d_half)
        k3 = rhs(y + dt / 2.0 * k2, d_half)
        t_next = t + dt
        d_next = delayed_state(t_next - float(delay(t_next)))
        k4 = rhs(y + dt * k3, d_next)
        r[i + 1] = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(r[i + 1])) or np.max(np.abs(r[i + 1])) > blowup:
            blew_up = True
            num_kept = i + 2
            t_nodes = t_nodes[:num_kept]
            r = r[:num_kept]
            dr = dr[:num_kept]
            dr[-1] = 0.0
            return Trajectory(t=t_nodes, r=r, dr=dr, blew_up=True)
    front = num
    d_last = delayed_state(t_nodes[-1] - float(delay(t_nodes[-1])))
    dr[num] = rhs(r[num], d_last)
    return Trajectory(t=t_nodes, r=r, dr=dr, blew_up=blew_up)


def estimate_decay_rate(
    traj: Trajectory, skip_fraction: float = 0.25, detail: bool = False
):
    """Least-squares slope of -ln||r(t)|| over the trajectory tail.

    The initial `skip_fraction` of the horizon is dropped to let transients
    clear; returns the decay exponent (positive means contraction).  With
    detail=True also returns the fitted amplitude a, so the fit reads
    ||r(t)|| ~ a * exp(-rate * t).
    """
    if traj.blew_up:
        return (-np.inf, np.inf) if detail else -np.inf
    if not 0.0 <= skip_fraction < 1.0:
        raise ValueError(f"skip_fraction must be in [0, 1), got {skip_fraction!r}")
    norms = traj.norms()
    start = traj.t[0] + skip_fraction * (traj.t[-1] - traj.t[0])
    mask = (traj.t >= start) & (norms > 1e-280)
    if mask.sum() < 8:
        raise ValueError("too few usable samples to estimate a decay rate")
    t = traj.t[mask]
    y = np.log(norms[mask])
    slope, intercept = np.polyfit(t, y, 1)
    if detail:
        return float(-slope), float(np.exp(intercept))
    return float(-slope)


def find_equilibrium(
    system: DelayedNNSystem,
    activation: Activation | None = None,
    guess=None,
    tol: float = 1e-12,
    max_iter: int = 80,
) -> np.ndarray:
    """Damped-Newton solve of -K0 r + (K1 + K2) g(r) = 0."""
    act = activation if activation is not None else system.activation()
    ksum = system.k1 + system.k2
    r = np.zeros(system.dim) if guess is None else np.asarray(guess, dtype=float).copy()

    def residual(x):
        return -system.k0_diag * x + ksum @ act(x)

    f = residual(r)
    for _ in range(max_iter):
        if np.linalg.norm(f) <= tol:
            return r
        jac = -np.diag(system.k0_diag) + ksum * act.derivative(r)[None, :]
        try:
            step_dir = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            raise RuntimeError("singular Jacobian while locating the equilibrium")
        lam = 1.0
        base = np.linalg.norm(f)
        while lam > 1e-8:
            cand = r + lam * step_dir
            fc = residual(cand)
            if np.linalg.norm(fc) < (1.0 - 0.25 * lam) * base:
                r, f = cand, fc
                break
            lam /= 2.0
        else:
            raise RuntimeError("equilibrium search stalled")
    if np.linalg.norm(f) <= 1e3 * tol:
        return r
    raise RuntimeError("equilibrium search did not converge")
