"""Feasibility solver for the compiled matrix constraints.

Phase-I barrier method: minimise the uniform eigenvalue shift tau subject to
every constraint plus tau times the identity staying positive definite.  The
shift is an ordinary optimisation variable; damped Newton centres the weighted
objective t * tau plus the log-det barrier, and t grows geometrically along the
path.  Feasible means the shift went strictly negative at the current point.
The contract is one-sided: "feasible" always comes with a witness that passes
the independent eigenvalue check, while a stall reports "undecided", never
"infeasible".
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .lmi import CompiledConstraint

__all__ = [
    "FeasibilityResult",
    "WitnessReport",
    "PlantedProblem",
    "solve_feasibility",
    "verify_witness",
    "planted_problem",
]


@dataclass(frozen=True)
class FeasibilityResult:
    status: str  # "feasible" or "undecided"
    x: np.ndarray
    shift: float  # largest constraint violation at x (negative means slack)
    rounds: int
    newton_steps: int
    message: str
    solve_time: float

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


@dataclass(frozen=True)
class WitnessReport:
    feasible: bool
    min_eigen: float
    eigens: dict[str, float]
    target_margin: float


@dataclass(frozen=True)
class PlantedProblem:
    """Free-standing constraint set with the same evaluation interface."""

    num_variables: int
    constraints: tuple[CompiledConstraint, ...]


def _max_violation(constraints, x: np.ndarray) -> float:
    worst = -np.inf
    for c in constraints:
        g = c.evaluate(x)
        worst = max(worst, -float(np.linalg.eigvalsh(g)[0]))
    return worst


def _equilibrate(constraints, nvar: int, sweeps: int = 3):
    """Ruiz-style balancing of constraint and variable magnitudes.

    Returns per-constraint scales s and per-variable scales d such that the
    maps y -> s_j * G_j(d * y) have coefficient slices of comparable size.
    Positive scalings preserve positive semidefiniteness, so feasibility in
    scaled coordinates is feasibility of the original problem at x = d * y.
    """
    norms = [np.max(np.abs(c.tensor), axis=(1, 2)) for c in constraints]
    idxs = [c.var_idx.astype(int) for c in constraints]
    s = np.ones(len(constraints))
    d = np.ones(nvar)
    for _ in range(sweeps):
        for j, (idx, nrm) in enumerate(zip(idxs, norms)):
            cur = float(np.max(nrm * d[idx])) * s[j]
            if cur > 0.0:
                s[j] /= math.sqrt(cur)
        colmax = np.zeros(nvar)
        for j, (idx, nrm) in enumerate(zip(idxs, norms)):
            np.maximum.at(colmax, idx, nrm * s[j] * d[idx])
        nz = colmax > 0.0
        d[nz] /= np.sqrt(colmax[nz])
    return s, d


def _barrier_state(scaled, x: np.ndarray, tau: float):
    """Cholesky factors of every shifted scaled constraint, or None if not PD."""
    factors = []
    logdet = 0.0
    for idx, tensor, c0 in scaled:
        s = c0 + np.tensordot(x[idx], tensor, axes=(0, 0))
        s[np.diag_indices_from(s)] += tau
        try:
            chol = scipy.linalg.cholesky(s, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError:
            return None, np.inf
        factors.append(chol)
        logdet += 2.0 * float(np.sum(np.log(np.diagonal(chol))))
    return factors, -logdet


def _newton_system(extended, factors, num_unknowns: int):
    """Gradient and Hessian of the barrier in (x, tau) coordinates.

    extended holds, per constraint, the variable indices with the shift slot
    appended and the coefficient tensor with an identity appended for it.
    """
    grad = np.zeros(num_unknowns)
    hess = np.zeros((num_unknowns, num_unknowns))
    for (idx, tensor), chol in zip(extended, factors):
        m = tensor.shape[1]
        kk = tensor.shape[0]
        a_cols = tensor.transpose(1, 0, 2).reshape(m, kk * m)
        t = scipy.linalg.solve_triangular(chol, a_cols, lower=True, check_finite=False)
        t_cols = t.reshape(m, kk, m).transpose(2, 1, 0).reshape(m, kk * m)
        mm = scipy.linalg.solve_triangular(chol, t_cols, lower=True, check_finite=False)
        whitened = mm.reshape(m, kk, m).transpose(1, 2, 0)  # (K, m, m), symmetric
        grad[idx] += -np.trace(whitened, axis1=1, axis2=2)
        iu, ju = np.triu_indices(m)
        packed = whitened[:, iu, ju]
        packed[:, iu != ju] *= math.sqrt(2.0)
        hess[np.ix_(idx, idx)] += packed @ packed.T
    return grad, hess


def solve_feasibility(
    problem,
    warm_start: np.ndarray | None = None,
    target_margin: float = 0.0,
    max_rounds: int = 40,
    max_newton: int = 60,
    path_mult: float = 10.0,
    center_tol: float = 0.05,
    prox_weight: float = 1e-8,
    t_max: float = 1e12,
) -> FeasibilityResult:
    """Search for x with every constraint positive semidefinite.

    problem needs .constraints (affine maps) and .num_variables.  target_margin
    asks for extra uniform slack beyond the margins already compiled in.  The
    tiny proximal term keeps the barrier bounded along slack-growing rays; it
    is far below the compiled margins, so it cannot turn a feasible answer
    around.
    """
    start = time.perf_counter()
    constraints = problem.constraints
    nvar = problem.num_variables
    x = (
        np.array(warm_start, dtype=float, copy=True)
        if warm_start is not None
        else np.zeros(nvar)
    )
    if x.shape != (nvar,):
        raise ValueError(f"warm start must have shape ({nvar},), got {x.shape}")
    x_ref = x.copy()

    def finish(status, point, v, rounds, steps, msg):
        return FeasibilityResult(
            status=status,
            x=point,
            shift=v,
            rounds=rounds,
            newton_steps=steps,
            message=msg,
            solve_time=time.perf_counter() - start,
        )

    v = _max_violation(constraints, x)
    if v < 0.0 and v <= -target_margin:
        return finish("feasible", x, v, 0, 0, "warm start already feasible")

    # balance units first: decay-weighted blocks carry coefficients orders of
    # magnitude above the cone blocks, and a single shared shift couples them
    # badly.  Newton runs on s_j * G_j(d * y); every accept/report below goes
    # back through the original constraints at x = d * y.
    s_scale, d_scale = _equilibrate(constraints, nvar)
    scaled = []
    for j, c in enumerate(constraints):
        idx = c.var_idx.astype(int)
        scaled.append(
            (
                idx,
                s_scale[j] * c.tensor * d_scale[idx][:, None, None],
                s_scale[j] * c.c0,
            )
        )

    def scaled_violation(point):
        worst = -np.inf
        for idx, tensor, c0 in scaled:
            g = c0 + np.tensordot(point[idx], tensor, axes=(0, 0))
            worst = max(worst, -float(np.linalg.eigvalsh(g)[0]))
        return worst

    # shift slot rides along as unknown number nvar
    extended = []
    for (idx, tensor, _), c in zip(scaled, constraints):
        extended.append(
            (
                np.append(idx, nvar),
                np.concatenate([tensor, np.eye(c.size)[None]], axis=0),
            )
        )
    m_total = sum(c.size for c in constraints)
    y0 = x / d_scale
    v_scaled = scaled_violation(y0)
    y = np.append(y0, v_scaled + max(1.0, 0.05 * abs(v_scaled)))

    def objective(point, weight):
        factors, barrier = _barrier_state(scaled, point[:nvar], point[nvar])
        if factors is None:
            return None, np.inf
        dx = d_scale * point[:nvar] - x_ref
        return factors, barrier + weight * point[nvar] + 0.5 * prox_weight * float(dx @ dx)

    newton_total = 0
    t_weight = 1.0
    round_idx = 0
    for round_idx in range(1, max_rounds + 1):
        factors, f_val = objective(y, t_weight)
        if factors is None:
            # the line search keeps every factor PD, so only rounding lands here
            y[nvar] = scaled_violation(y) + 1.0
            factors, f_val = objective(y, t_weight)
        centered = False
        for _ in range(max_newton):
            grad, hess = _newton_system(extended, factors, nvar + 1)
            grad[nvar] += t_weight
            grad[:nvar] += prox_weight * d_scale * (d_scale * y[:nvar] - x_ref)
            hess[np.diag_indices(nvar)] += prox_weight * d_scale * d_scale
            # damp each direction relative to its own curvature: the barrier
            # Hessian spans many orders of magnitude near the boundary, and a
            # uniform shift sized by the trace flattens exactly the directions
            # the path needs
            hdiag = np.diagonal(hess).copy()
            hdiag = np.maximum(hdiag, 1e-30 * max(1.0, float(hdiag.max())))
            rel = 1e-10
            step = None
            for _attempt in range(6):
                try:
                    chol_h = scipy.linalg.cho_factor(
                        hess + rel * np.diag(hdiag), check_finite=False
                    )
                    step = scipy.linalg.cho_solve(chol_h, -grad, check_finite=False)
                    break
                except scipy.linalg.LinAlgError:
                    rel *= 100.0
            if step is None:
                break
            decrement = float(-grad @ step)
            if decrement / 2.0 <= center_tol:
                centered = True
                break
            scale = 1.0
            improved = False
            for _ in range(40):
                trial = y + scale * step
                trial_factors, trial_f = objective(trial, t_weight)
                if trial_factors is not None and trial_f <= f_val - 0.01 * scale * decrement:
                    y, factors, f_val = trial, trial_factors, trial_f
                    improved = True
                    break
                scale *= 0.5
            newton_total += 1
            if not improved:
                break
            x_cur = d_scale * y[:nvar]
            v = _max_violation(constraints, x_cur)
            if v < 0.0 and v <= -target_margin:
                return finish(
                    "feasible",
                    x_cur,
                    v,
                    round_idx,
                    newton_total,
                    "barrier path reached a strictly feasible point",
                )

        x_cur = d_scale * y[:nvar]
        v = _max_violation(constraints, x_cur)
        if v < 0.0 and v <= -target_margin:
            return finish(
                "feasible",
                x_cur,
                v,
                round_idx,
                newton_total,
                "barrier path reached a strictly feasible point",
            )
        # at a centred point the minimal shift sits within m_total / t of tau
        # (factor 1.2 absorbs approximate centering); a positive floor in the
        # scaled units means no point makes every scaled block PSD, and the
        # scalings are positive, so the original problem has no such point
        # either
        if centered and round_idx >= 2 and y[nvar] - 1.2 * m_total / t_weight > 0.0:
            return finish(
                "undecided",
                x_cur,
                v,
                round_idx,
                newton_total,
                "minimal uniform shift appears to sit above the requested margin",
            )
        if t_weight >= t_max:
            break
        t_weight = min(t_weight * path_mult, t_max)

    return finish(
        "undecided",
        d_scale * y[:nvar],
        v,
        round_idx,
        newton_total,
        "no strictly feasible point found before the iteration budget",
    )


def verify_witness(problem, x: np.ndarray, target_margin: float = 0.0) -> WitnessReport:
    """Independent eigenvalue check of a candidate witness.

    Uses the direct symmetric eigensolver rather than the factorizations the
    search relies on, so a bogus witness cannot ride on shared rounding.
    """
    eigens: dict[str, float] = {}
    worst = np.inf
    for c in problem.constraints:
        g = c.evaluate(np.asarray(x, dtype=float))
        g = (g + g.T) / 2.0
        vals = scipy.linalg.eigh(g, eigvals_only=True, driver="ev", check_finite=False)
        eigens[c.name] = float(vals[0])
        worst = min(worst, float(vals[0]))
    return WitnessReport(
        feasible=bool(worst >= target_margin),
        min_eigen=worst,
        eigens=eigens,
        target_margin=target_margin,
    )


def planted_problem(
    rng: np.random.Generator,
    num_variables: int = 30,
    sizes: tuple[int, ...] = (8, 5, 3),
    margin: float = 1e-3,
    density: float = 0.6,
) -> tuple[PlantedProblem, np.ndarray]:
    """Random constraint set that is feasible by construction.

    Returns the problem and the planted witness: each constraint evaluates at
    the witness to a random PSD matrix plus margin times the identity.
    """
    x_star = rng.normal(size=num_variables)
    constraints = []
    for idx, m in enumerate(sizes):
        kk = max(3, int(round(density * num_variables)))
        kk = min(kk, num_variables)
        var_idx = np.sort(rng.choice(num_variables, size=kk, replace=False))
        a = rng.normal(size=(kk, m, m)) / math.sqrt(m)
        a = (a + a.transpose(0, 2, 1)) / 2.0
        c_fac = rng.normal(size=(m, m)) / math.sqrt(m)
        witness_value = c_fac @ c_fac.T + margin * np.eye(m)
        c0 = witness_value - np.tensordot(x_star[var_idx], a, axes=(0, 0))
        constraints.append(
            CompiledConstraint(
                name=f"planted_{idx}",
                size=m,
                var_idx=var_idx,
                tensor=a,
                c0=c0,
                margin=margin,
            )
        )
    return PlantedProblem(num_variables, tuple(constraints)), x_star
