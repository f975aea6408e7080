"""Certification drivers built on the feasibility core.

check_stability assembles and solves one (h, mu, k, xi) problem and wraps the
outcome in a re-verifiable certificate carrying the decay-envelope constants.
max_decay_rate and max_delay_bound bracket the largest certifiable decay rate
or delay ceiling by bisection, scanning a small grid of reference lags and
keeping the best verified answer together with the full probe log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .lmi import DEFAULT_MARGIN_SCALE, assemble_stability_problem
from .sdp import FeasibilityResult, solve_feasibility, verify_witness
from .systems import DelayedNNSystem

__all__ = [
    "StabilityCertificate",
    "ProbeRecord",
    "SearchOutcome",
    "EnvelopeConstants",
    "check_stability",
    "max_decay_rate",
    "max_delay_bound",
    "envelope_constants",
    "DEFAULT_XI_FRACTIONS",
    "DEFAULT_ATTENUATION_ANCHORS",
]

DEFAULT_XI_FRACTIONS = (0.25, 0.5, 0.75)

# Conditions tried per rate probe, in order: the delay-independent drain floor
# first (cheapest sufficient condition), then tangent anchors that retain the
# leaving-window attenuation.  The first condition that certifies wins.
DEFAULT_ATTENUATION_ANCHORS: tuple[float | None, ...] = (None, 0.75, 1.0, 0.5)


def _top_eigen(mat: np.ndarray) -> float:
    sym = (mat + mat.T) / 2.0
    return float(scipy.linalg.eigvalsh(sym, check_finite=False)[-1])


@dataclass(frozen=True)
class EnvelopeConstants:
    """Constants of the decay envelope ||r(t)|| <= gain * ||phi|| * e^{-kt}."""

    energy_bound: float  # functional value at t=0 is <= energy_bound * ||phi||^2
    state_floor: float  # smallest eigenvalue of the quadratic state block
    state_ceiling: float  # largest eigenvalue of the same block, for reference
    gain: float  # sqrt(energy_bound / state_floor)

    def to_dict(self) -> dict:
        return {
            "energy_bound": self.energy_bound,
            "state_floor": self.state_floor,
            "state_ceiling": self.state_ceiling,
            "gain": self.gain,
        }


def envelope_constants(
    system: DelayedNNSystem, h: float, k: float, mats: dict[str, np.ndarray]
) -> EnvelopeConstants:
    """Decay-envelope constants from a feasible witness.

    The functional's initial value is bounded by energy_bound times the
    squared sup-norm of the history (derivative energy is converted to state
    size through the dynamics, hence the coefficient-matrix factor), and the
    functional dominates e^{2kt} * state_floor * ||r(t)||^2, so certified
    trajectories obey the gain * e^{-kt} envelope.
    """
    p_eigs = scipy.linalg.eigvalsh((mats["P"] + mats["P"].T) / 2.0, check_finite=False)
    p_min, p_max = float(p_eigs[0]), float(p_eigs[-1])
    slopes = system.slopes
    slope_sq = float(np.max(slopes) ** 2)
    deriv_gain = (
        float(np.max(system.k0_diag) ** 2)
        + _top_eigen(system.k1.T @ system.k1) * slope_sq
        + _top_eigen(system.k2.T @ system.k2) * slope_sq
    )
    e2kh = math.exp(2.0 * k * h)
    h3 = h**3
    energy_bound = (
        p_max * (1.0 + 2.0 * h * h)
        + 2.0 * float(np.max(np.diagonal(mats["D1"]) * slopes))
        + 2.0 * float(np.max(np.diagonal(mats["D2"]) * slopes))
        + h * e2kh * _top_eigen(mats["Q"]) * (1.0 + slope_sq)
        + h * e2kh * (_top_eigen(mats["U1"]) + _top_eigen(mats["U2"]) + _top_eigen(mats["U3"]))
        + (
            1.5 * h3 * (_top_eigen(mats["Z1"]) + _top_eigen(mats["Z3"]) + _top_eigen(mats["Z4"]))
            + h3 / 6.0 * _top_eigen(mats["N1"])
            + h3 / 2.0 * _top_eigen(mats["N2"])
        )
        * deriv_gain
        + h * _top_eigen(mats["M1"] + mats["M2"])
        + h3 / 2.0 * _top_eigen(mats["Z2"])
    )
    return EnvelopeConstants(
        energy_bound=float(energy_bound),
        state_floor=p_min,
        state_ceiling=p_max,
        gain=math.sqrt(energy_bound / p_min),
    )


@dataclass(frozen=True)
class StabilityCertificate:
    """Outcome of one feasibility check, re-verifiable from its own fields."""

    system: DelayedNNSystem
    h: float
    mu: float
    k: float
    xi: float
    certified: bool
    witness: np.ndarray | None
    margins: dict[str, float] | None  # per-constraint smallest eigenvalue
    envelope: EnvelopeConstants | None
    solver: FeasibilityResult
    attenuation_anchor: float | None = None

    def matrices(self) -> dict[str, np.ndarray]:
        """Witness unpacked into its named matrix blocks."""
        if self.witness is None:
            raise ValueError("certificate carries no witness")
        problem = assemble_stability_problem(
            self.system,
            h=self.h,
            mu=self.mu,
            k=self.k,
            xi=self.xi,
            attenuation_anchor=self.attenuation_anchor,
        )
        return problem.layout.unpack(self.witness)

    def reverify(self) -> bool:
        """Re-assemble the constraints from scratch and re-check the witness."""
        if self.witness is None:
            return False
        problem = assemble_stability_problem(
            self.system,
            h=self.h,
            mu=self.mu,
            k=self.k,
            xi=self.xi,
            attenuation_anchor=self.attenuation_anchor,
        )
        return verify_witness(problem, self.witness).feasible

    def to_dict(self, include_witness: bool = True) -> dict:
        out = {
            "schema": "delaycert.certificate/1",
            "system": self.system.to_dict(),
            "parameters": {
                "h": self.h,
                "mu": self.mu,
                "k": self.k,
                "xi": self.xi,
                "attenuation_anchor": self.attenuation_anchor,
            },
            "certified": self.certified,
            "margins": self.margins,
            "envelope": self.envelope.to_dict() if self.envelope else None,
            "solver": {
                "status": self.solver.status,
                "shift": self.solver.shift,
                "rounds": self.solver.rounds,
                "newton_steps": self.solver.newton_steps,
                "message": self.solver.message,
                "solve_time": self.solver.solve_time,
            },
        }
        if include_witness and self.witness is not None:
            out["witness"] = self.witness.tolist()
        return out


def check_stability(
    system: DelayedNNSystem,
    h: float,
    mu: float,
    k: float,
    xi: float | None = None,
    margin_scale: float = DEFAULT_MARGIN_SCALE,
    warm_start: np.ndarray | None = None,
    solver_options: dict | None = None,
    attenuation_anchor: float | None = None,
) -> StabilityCertificate:
    """Assemble, solve, and independently verify one certification problem.

    The result is certified only when the eigenvalue re-check of the witness
    passes; solver claims alone are never trusted.  A not-certified result
    means no certificate was found, not a proof of instability.
    """
    problem = assemble_stability_problem(
        system,
        h=h,
        mu=mu,
        k=k,
        xi=xi,
        margin_scale=margin_scale,
        attenuation_anchor=attenuation_anchor,
    )
    result = solve_feasibility(problem, warm_start=warm_start, **(solver_options or {}))
    if result.status == "feasible":
        report = verify_witness(problem, result.x)
        if report.feasible:
            env = envelope_constants(system, h=h, k=k, mats=problem.layout.unpack(result.x))
            return StabilityCertificate(
                system=system,
                h=h,
                mu=mu,
                k=k,
                xi=problem.xi,
                certified=True,
                witness=result.x.copy(),
                margins=report.eigens,
                envelope=env,
                solver=result,
                attenuation_anchor=problem.attenuation_anchor,
            )
    return StabilityCertificate(
        system=system,
        h=h,
        mu=mu,
        k=k,
        xi=problem.xi,
        certified=False,
        witness=None,
        margins=None,
        envelope=None,
        solver=result,
        attenuation_anchor=problem.attenuation_anchor,
    )


@dataclass(frozen=True)
class ProbeRecord:
    """One bisection probe: parameter value tried, at which lag, and outcome.

    anchor names the attenuation condition the outcome refers to: the one that
    certified, or the first condition tried when none did.  solve_time covers
    every condition tried for this value.
    """

    value: float
    xi: float
    certified: bool
    shift: float
    solve_time: float
    anchor: float | None = None


def _sweep_anchors(
    system: DelayedNNSystem,
    h: float,
    mu: float,
    k: float,
    xi: float,
    margin_scale: float,
    warm_start: np.ndarray | None,
    solver_options: dict | None,
    anchors: tuple[float | None, ...],
) -> tuple[StabilityCertificate, float]:
    """Try each attenuation condition in turn; the first certificate wins.

    Returns (certificate, total solve time).  When nothing certifies, the
    returned certificate is the first condition's outcome, so its shift
    reports how far the primary form was from feasible.
    """
    total = 0.0
    first: StabilityCertificate | None = None
    for anchor in anchors:
        cert = check_stability(
            system,
            h=h,
            mu=mu,
            k=k,
            xi=xi,
            margin_scale=margin_scale,
            warm_start=warm_start,
            solver_options=solver_options,
            attenuation_anchor=anchor,
        )
        total += cert.solver.solve_time
        if cert.certified:
            return cert, total
        if first is None:
            first = cert
    assert first is not None
    return first, total


@dataclass(frozen=True)
class SearchOutcome:
    """Result of a bisection search with its complete probe log.

    best holds the certificate at the largest certified parameter value over
    the lag grid; ceiling is the matching not-certified probe value for the
    same lag (None when the search was capped by the range end or degenerate).
    """

    variable: str
    best: StabilityCertificate | None
    best_value: float | None
    ceiling: float | None
    probes: tuple[ProbeRecord, ...]
    tol: float

    @property
    def certified(self) -> bool:
        return self.best is not None


def _bisect_largest(attempt, lo: float, hi: float, tol: float, max_iterations: int):
    """Largest certified value in [lo, hi], assuming harder as the value grows.

    attempt(value) -> StabilityCertificate.  Returns (certificate, value,
    ceiling) or None when even lo fails; ceiling is None when hi certified.
    """
    low_cert = attempt(lo)
    if not low_cert.certified:
        return None
    if hi <= lo:
        return low_cert, lo, None
    high_cert = attempt(hi)
    if high_cert.certified:
        return high_cert, hi, None
    best_cert, best_val = low_cert, lo
    for _ in range(max_iterations):
        if hi - best_val <= tol:
            break
        mid = 0.5 * (best_val + hi)
        cert = attempt(mid)
        if cert.certified:
            best_cert, best_val = cert, mid
        else:
            hi = mid
    return best_cert, best_val, hi


def max_decay_rate(
    system: DelayedNNSystem,
    h: float,
    mu: float,
    k_range: tuple[float, float] | None = None,
    tol: float = 1e-3,
    xi_fractions: tuple[float, ...] = DEFAULT_XI_FRACTIONS,
    max_iterations: int = 60,
    margin_scale: float = DEFAULT_MARGIN_SCALE,
    solver_options: dict | None = None,
    attenuation_anchors: tuple[float | None, ...] = DEFAULT_ATTENUATION_ANCHORS,
) -> SearchOutcome:
    """Largest certifiable decay rate at a fixed delay bound.

    Bisects k over k_range (default: nearly the full admissible interval
    below the smallest self-decay rate) for each reference-lag fraction, and
    returns the best verified rate across the grid with every probe logged.
    Each probe tries the attenuation conditions in order and keeps the first
    certificate, so the bisection brackets the union of those sufficient
    conditions.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    if not attenuation_anchors:
        raise ValueError("attenuation_anchors must name at least one condition")
    k_cap = float(np.min(system.k0_diag))
    if k_range is None:
        k_range = (1e-3 * k_cap, (1.0 - 1e-9) * k_cap)
    lo, hi = float(k_range[0]), float(k_range[1])
    if not (0.0 < lo < k_cap and lo <= hi < k_cap):
        raise ValueError(
            f"k_range must satisfy 0 < lo <= hi < {k_cap:g} (smallest self-decay), got {k_range!r}"
        )
    probes: list[ProbeRecord] = []
    best = best_value = best_ceiling = None
    for frac in xi_fractions:
        xi = frac * h
        warm: np.ndarray | None = None

        def attempt(kv: float, xi=xi) -> StabilityCertificate:
            nonlocal warm
            cert, spent = _sweep_anchors(
                system,
                h=h,
                mu=mu,
                k=kv,
                xi=xi,
                margin_scale=margin_scale,
                warm_start=warm,
                solver_options=solver_options,
                anchors=attenuation_anchors,
            )
            probes.append(
                ProbeRecord(
                    value=kv,
                    xi=xi,
                    certified=cert.certified,
                    shift=cert.solver.shift,
                    solve_time=spent,
                    anchor=cert.attenuation_anchor,
                )
            )
            if cert.certified:
                warm = cert.witness
            return cert

        found = _bisect_largest(attempt, lo, hi, tol, max_iterations)
        if found is None:
            continue
        cert, value, ceiling = found
        if best_value is None or value > best_value:
            best, best_value, best_ceiling = cert, value, ceiling
    return SearchOutcome(
        variable="k",
        best=best,
        best_value=best_value,
        ceiling=best_ceiling,
        probes=tuple(probes),
        tol=tol,
    )


def max_delay_bound(
    system: DelayedNNSystem,
    mu: float,
    k: float,
    h_range: tuple[float, float] = (0.1, 32.0),
    tol: float = 1e-3,
    xi_fractions: tuple[float, ...] = DEFAULT_XI_FRACTIONS,
    max_iterations: int = 60,
    margin_scale: float = DEFAULT_MARGIN_SCALE,
    solver_options: dict | None = None,
    attenuation_anchors: tuple[float | None, ...] = (None,),
) -> SearchOutcome:
    """Largest certifiable delay bound at a fixed decay rate.

    Bisects h over h_range for each reference-lag fraction; the lag scales
    with the delay bound being probed.  Certifiability is treated as monotone
    decreasing in h on the scanned range, which every returned bracket
    witnesses explicitly (certified at best_value, not certified at ceiling).
    The attenuation refinement's lever is the product k*h, so at the small
    rates this search usually targets it changes nothing; it therefore
    defaults to the plain condition alone, and callers chasing a large rate
    can pass more anchors explicitly.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    if not attenuation_anchors:
        raise ValueError("attenuation_anchors must name at least one condition")
    lo, hi = float(h_range[0]), float(h_range[1])
    if not 0.0 < lo <= hi:
        raise ValueError(f"h_range must satisfy 0 < lo <= hi, got {h_range!r}")
    k_cap = float(np.min(system.k0_diag))
    if not 0.0 < k < k_cap:
        raise ValueError(
            f"k must lie in (0, {k_cap:g}) for this system (smallest self-decay), got {k!r}"
        )
    probes: list[ProbeRecord] = []
    best = best_value = best_ceiling = None
    for frac in xi_fractions:
        warm: np.ndarray | None = None

        def attempt(hv: float, frac=frac) -> StabilityCertificate:
            nonlocal warm
            cert, spent = _sweep_anchors(
                system,
                h=hv,
                mu=mu,
                k=k,
                xi=frac * hv,
                margin_scale=margin_scale,
                warm_start=warm,
                solver_options=solver_options,
                anchors=attenuation_anchors,
            )
            probes.append(
                ProbeRecord(
                    value=hv,
                    xi=frac * hv,
                    certified=cert.certified,
                    shift=cert.solver.shift,
                    solve_time=spent,
                    anchor=cert.attenuation_anchor,
                )
            )
            if cert.certified:
                warm = cert.witness
            return cert

        found = _bisect_largest(attempt, lo, hi, tol, max_iterations)
        if found is None:
            continue
        cert, value, ceiling = found
        if best_value is None or value > best_value:
            best, best_value, best_ceiling = cert, value, ceiling
    return SearchOutcome(
        variable="h",
        best=best,
        best_value=best_value,
        ceiling=best_ceiling,
        probes=tuple(probes),
        tol=tol,
    )
