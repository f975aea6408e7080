"""Assembly of the delay-stability feasibility problem as linear matrix terms.

The certificate searches over a structured symmetric-variable vector x (packed
block by block) and asks for a handful of matrix constraints, all affine in x:
two negativity conditions on the quadratic form that dominates the functional
derivative (one per extreme of the delay value), coupling positivity for the
two reciprocally convex bounds, and positivity cones for every block.

The quadratic form lives on a 15-block augmented state

     1: r(t)                  6: (1/h) int over [t-h, t]         11: far double avg
     2: r(t-h(t))             7: near avg over [t-h(t), t]       12: (6/h^3) full triple
     3: r(t-h)                8: far avg over [t-h, t-h(t)]      13: near triple avg
     4: g(r(t))               9: (2/h^2) full double int         14: far triple avg
     5: g(r(t-h(t)))         10: near double avg                 15: r(t-xi)

plus the derivative row  r'(t) = -K0 x1 + K1 x4 + K2 x5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import WeightedBasis
from .systems import DelayedNNSystem

__all__ = [
    "count_variables",
    "LmiLayout",
    "CompiledConstraint",
    "StabilityProblem",
    "assemble_stability_problem",
]

NUM_BLOCKS = 15
DEFAULT_MARGIN_SCALE = 1e-6

# packing order and shapes of the decision blocks; "sym" packs the upper
# triangle row-major, "diag" the diagonal, "full" everything row-major
_BLOCK_SPECS: tuple[tuple[str, str, int], ...] = (
    ("P", "sym", 3),
    ("Q", "sym", 2),
    ("U1", "sym", 1),
    ("U2", "sym", 1),
    ("U3", "sym", 1),
    ("Z1", "sym", 1),
    ("Z2", "sym", 1),
    ("Z3", "sym", 1),
    ("Z4", "sym", 1),
    ("N1", "sym", 1),
    ("N2", "sym", 1),
    ("M1", "sym", 1),
    ("M2", "sym", 1),
    ("D1", "diag", 1),
    ("D2", "diag", 1),
    ("R1", "diag", 1),
    ("R2", "diag", 1),
    ("S1", "full", 4),
    ("S2", "full", 1),
)


def count_variables(n: int) -> int:
    """Number of scalar decision variables for state dimension n."""
    if n < 1:
        raise ValueError(f"state dimension must be >= 1, got {n!r}")
    total = 0
    for _, kind, mult in _BLOCK_SPECS:
        d = mult * n
        if kind == "sym":
            total += d * (d + 1) // 2
        elif kind == "diag":
            total += d
        else:
            total += d * d
    return total


@dataclass(frozen=True)
class _BlockInfo:
    name: str
    kind: str
    dim: int
    start: int
    count: int


class LmiLayout:
    """Packing of the structured decision blocks into one flat vector."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"state dimension must be >= 1, got {n!r}")
        self.n = n
        self.blocks: dict[str, _BlockInfo] = {}
        offset = 0
        for name, kind, mult in _BLOCK_SPECS:
            d = mult * n
            if kind == "sym":
                count = d * (d + 1) // 2
            elif kind == "diag":
                count = d
            else:
                count = d * d
            self.blocks[name] = _BlockInfo(name, kind, d, offset, count)
            offset += count
        self.num_variables = offset

    def pack(self, mats: dict[str, np.ndarray]) -> np.ndarray:
        x = np.zeros(self.num_variables)
        for name, info in self.blocks.items():
            m = np.asarray(mats[name], dtype=float)
            if info.kind == "diag" and m.ndim == 1:
                m = np.diag(m)
            if m.shape != (info.dim, info.dim):
                raise ValueError(
                    f"{name}: expected shape {(info.dim, info.dim)}, got {m.shape}"
                )
            if info.kind == "sym":
                if not np.allclose(m, m.T, atol=1e-10 * (1 + np.abs(m).max())):
                    raise ValueError(f"{name}: matrix must be symmetric")
                iu = np.triu_indices(info.dim)
                x[info.start : info.start + info.count] = m[iu]
            elif info.kind == "diag":
                x[info.start : info.start + info.count] = np.diagonal(m)
            else:
                x[info.start : info.start + info.count] = m.reshape(-1)
        return x

    def unpack(self, x: np.ndarray) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.num_variables,):
            raise ValueError(
                f"expected vector of length {self.num_variables}, got shape {x.shape}"
            )
        out: dict[str, np.ndarray] = {}
        for name, info in self.blocks.items():
            vals = x[info.start : info.start + info.count]
            if info.kind == "sym":
                m = np.zeros((info.dim, info.dim))
                iu = np.triu_indices(info.dim)
                m[iu] = vals
                m = m + m.T - np.diag(np.diagonal(m))
            elif info.kind == "diag":
                m = np.diag(vals)
            else:
                m = vals.reshape(info.dim, info.dim)
            out[name] = m
        return out


@dataclass(frozen=True)
class _Term:
    """coef * (left @ V @ right.T), plus the transposed copy when sym."""

    var: str
    left: np.ndarray
    right: np.ndarray
    coef: float
    sym: bool


@dataclass(frozen=True)
class CompiledConstraint:
    """Affine matrix map restricted to the variables it touches.

    G(x) = c0 + sum_t x[var_idx[t]] * tensor[t]; feasibility means G(x) >= 0.
    """

    name: str
    size: int
    var_idx: np.ndarray  # (K,) global indices into x
    tensor: np.ndarray  # (K, size, size)
    c0: np.ndarray  # (size, size)
    margin: float

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.c0 + np.tensordot(x[self.var_idx], self.tensor, axes=(0, 0))


def _compile_constraint(
    name: str,
    size: int,
    terms: list[_Term],
    layout: LmiLayout,
    margin_scale: float,
) -> CompiledConstraint:
    by_var: dict[str, np.ndarray] = {}
    for term in terms:
        info = layout.blocks[term.var]
        left = np.asarray(term.left, dtype=float)
        right = np.asarray(term.right, dtype=float)
        t = np.einsum("ma,nb->abmn", left, right) * term.coef
        if term.sym:
            t = t + t.transpose(0, 1, 3, 2)
        acc = by_var.setdefault(term.var, np.zeros((info.count, size, size)))
        if info.kind == "sym":
            a_idx, b_idx = np.triu_indices(info.dim)
            off = a_idx != b_idx
            packed = t[a_idx, b_idx]
            packed[off] += t[b_idx[off], a_idx[off]]
            acc += packed
        elif info.kind == "diag":
            d = np.arange(info.dim)
            acc += t[d, d]
        else:
            acc += t.reshape(info.count, size, size)
    var_idx_parts = []
    tensor_parts = []
    for var, acc in by_var.items():
        info = layout.blocks[var]
        var_idx_parts.append(np.arange(info.start, info.start + info.count))
        tensor_parts.append(acc)
    var_idx = np.concatenate(var_idx_parts)
    tensor = np.concatenate(tensor_parts, axis=0)
    margin = margin_scale * 1.0  # constant part before the shift is zero
    c0 = -margin * np.eye(size)
    return CompiledConstraint(
        name=name, size=size, var_idx=var_idx, tensor=tensor, c0=c0, margin=margin
    )


@dataclass(frozen=True)
class StabilityProblem:
    """Compiled feasibility problem for one (system, h, mu, k, xi) tuple."""

    system: DelayedNNSystem
    h: float
    mu: float
    k: float
    xi: float
    layout: LmiLayout
    constraints: tuple[CompiledConstraint, ...]
    basis: WeightedBasis
    margin_scale: float
    attenuation_anchor: float | None = None

    @property
    def num_variables(self) -> int:
        return self.layout.num_variables

    def evaluate(self, x: np.ndarray) -> list[np.ndarray]:
        return [c.evaluate(x) for c in self.constraints]

    def min_eigens(self, x: np.ndarray) -> dict[str, float]:
        out = {}
        for c in self.constraints:
            out[c.name] = float(np.linalg.eigvalsh(c.evaluate(x))[0])
        return out

    def to_sparse_dict(self, tol: float = 0.0) -> dict:
        """Sparse-triplet form of every constraint, JSON-ready."""
        cons = []
        for c in self.constraints:
            entries = []
            for t_local, gidx in enumerate(c.var_idx):
                mat = c.tensor[t_local]
                rows, cols = np.nonzero(np.abs(mat) > tol)
                keep = rows <= cols
                for rr, cc in zip(rows[keep], cols[keep]):
                    entries.append([int(gidx), int(rr), int(cc), float(mat[rr, cc])])
            c0_rows, c0_cols = np.nonzero(np.abs(c.c0) > tol)
            keep = c0_rows <= c0_cols
            const = [
                [int(rr), int(cc), float(c.c0[rr, cc])]
                for rr, cc in zip(c0_rows[keep], c0_cols[keep])
            ]
            cons.append(
                {
                    "name": c.name,
                    "size": c.size,
                    "terms": entries,
                    "constant": const,
                    "margin": c.margin,
                }
            )
        return {
            "dim": self.layout.n,
            "num_variables": self.layout.num_variables,
            "h": self.h,
            "mu": self.mu,
            "k": self.k,
            "xi": self.xi,
            "attenuation_anchor": self.attenuation_anchor,
            "constraints": cons,
        }


def _selector(n: int, block: int) -> np.ndarray:
    """15n x n selector for one augmented-state block (1-based)."""
    e = np.zeros((NUM_BLOCKS * n, n))
    e[(block - 1) * n : block * n] = np.eye(n)
    return e


def _stack(cols: list[np.ndarray]) -> np.ndarray:
    return np.hstack(cols)


def assemble_stability_problem(
    system: DelayedNNSystem,
    h: float,
    mu: float,
    k: float,
    xi: float | None = None,
    margin_scale: float = DEFAULT_MARGIN_SCALE,
    attenuation_anchor: float | None = None,
) -> StabilityProblem:
    """Build the feasibility problem certifying decay rate k at delay bound h.

    h is the delay ceiling, mu the delay-rate bound, k the decay rate, and xi
    an interior reference delay in (0, h) used by the fixed-lag state block
    (defaults to h/2).

    The energy stored over the moving window leaves with weight
    exp(2k(h - h(t))) >= 1.  With ``attenuation_anchor=None`` that weight is
    floored at one, which keeps the decay form independent of h(t) at no cost.
    Setting an anchor a in [0, 1] instead keeps the weight through its tangent
    line at h(t) = a*h: the weight is convex in h(t), so the tangent sits below
    it everywhere and the resulting decay form is still an upper bound, while
    retaining more of the drain than the flat floor.  The tangent is affine in
    h(t), so checking the two delay extremes still covers the whole range.
    """
    if h <= 0:
        raise ValueError(f"h must be positive, got {h!r}")
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu!r}")
    if attenuation_anchor is not None:
        attenuation_anchor = float(attenuation_anchor)
        if not 0.0 <= attenuation_anchor <= 1.0:
            raise ValueError(
                f"attenuation_anchor must lie in [0, 1], got {attenuation_anchor!r}"
            )
        if mu > 1.0:
            # The tangent-weighted drain multiplies (1 - mu); a negative factor
            # would flip the bound direction, so fall back to the flat floor.
            raise ValueError("attenuation_anchor requires mu <= 1")
    kmax = float(np.min(system.k0_diag))
    if not 0.0 < k < kmax:
        raise ValueError(
            f"k must lie in (0, {kmax:g}) for this system (smallest self-decay), got {k!r}"
        )
    if xi is None:
        xi = h / 2.0
    if not 0.0 < xi < h:
        raise ValueError(f"xi must lie in (0, {h:g}), got {xi!r}")
    if margin_scale <= 0:
        raise ValueError(f"margin_scale must be positive, got {margin_scale!r}")

    n = system.dim
    layout = LmiLayout(n)
    basis = WeightedBasis.build(-h, 0.0, 2.0 * k)
    co = basis.coefficients
    kbar, cc, mm = co.kbar, co.c_coef, co.m_coef
    hbar, qq, rr = co.hbar, co.q_coef, co.r_coef
    nm = basis.norms

    E = {i: _selector(n, i) for i in range(1, NUM_BLOCKS + 1)}
    lmat = system.slope_matrix
    ev = -E[1] @ system.k0 + E[4] @ system.k1.T + E[5] @ system.k2.T

    e2kh = math.exp(2.0 * k * h)
    em2kh = math.exp(-2.0 * k * h)
    e2khx = math.exp(2.0 * k * (h - xi))
    psi2_gain = 2.0 * k * h / math.expm1(2.0 * k * h)

    common: list[_Term] = []

    # -- derivative of the quadratic/history part, delay-independent pieces
    zhat = _stack([E[1], h * E[6], h * E[9]])
    common.append(_Term("P", zhat, zhat, k, True))
    common.append(_Term("D1", E[4], E[1], 2.0 * k, True))
    common.append(_Term("D2", E[1] @ lmat - E[4], E[1], 2.0 * k, True))
    common.append(_Term("D1", E[4], ev, 1.0, True))
    common.append(_Term("D2", E[1] @ lmat - E[4], ev, 1.0, True))

    # -- history energies entering and leaving the sliding windows
    q_now = _stack([E[1], E[4]])
    q_del = _stack([E[2], E[5]])
    common.append(_Term("Q", q_now, q_now, e2kh, False))
    common.append(_Term("U1", E[1], E[1], e2kh, False))
    common.append(_Term("U2", E[1], E[1], e2kh, False))
    if attenuation_anchor is None:
        common.append(_Term("Q", q_del, q_del, -(1.0 - mu), False))
    common.append(_Term("U2", E[15], E[15], -e2khx, False))
    common.append(_Term("U3", E[15], E[15], e2khx, False))
    common.append(_Term("U1", E[3], E[3], -1.0, False))
    common.append(_Term("U3", E[3], E[3], -1.0, False))

    # -- double-integral energies: produced at rate h^2, drained via the
    #    weighted projection bounds on the full window
    for var in ("Z1", "Z3", "Z4"):
        common.append(_Term(var, ev, ev, h * h, False))
    common.append(_Term("Z2", E[1], E[1], h * h, False))

    w0 = h * E[6]
    w1 = (kbar - h) * h * E[6] + (h * h / 2.0) * E[9]
    w2 = (
        (h * h - cc * h + mm) * h * E[6]
        + (cc - 2.0 * h) * (h * h / 2.0) * E[9]
        + (h**3 / 3.0) * E[12]
    )
    for w, norm in zip((w0, w1, w2), nm[:3]):
        common.append(_Term("Z2", w, w, -h / norm, False))

    x0 = E[1] - E[3]
    x1 = kbar * E[1] + (h - kbar) * E[3] - h * E[6]
    x2 = mm * E[1] + (cc * h - mm - h * h) * E[3] + (2.0 * h - cc) * h * E[6] - h * h * E[9]
    x3 = (
        rr * E[1]
        + (h**3 - hbar * h * h + qq * h - rr) * E[3]
        - (3.0 * h * h - 2.0 * hbar * h + qq) * h * E[6]
        - (hbar - 3.0 * h) * h * h * E[9]
        - h**3 * E[12]
    )
    for w, norm in zip((x0, x1, x2, x3), nm):
        common.append(_Term("Z3", w, w, -h / norm, False))

    # -- triangle-kernel energies with their two-projection drains
    common.append(_Term("N1", ev, ev, h * h / 2.0, False))
    common.append(_Term("N2", ev, ev, h * h / 2.0, False))
    n1_vectors = (
        (E[1] - E[7], 2.0),
        (E[1] + 2.0 * E[7] - 3.0 * E[10], 4.0),
        (E[2] - E[8], 2.0),
        (E[2] + 2.0 * E[8] - 3.0 * E[11], 4.0),
    )
    n2_vectors = (
        (E[2] - E[7], 2.0),
        (E[2] - 4.0 * E[7] + 3.0 * E[10], 4.0),
        (E[3] - E[8], 2.0),
        (E[3] - 4.0 * E[8] + 3.0 * E[11], 4.0),
    )
    for w, factor in n1_vectors:
        common.append(_Term("N1", w, w, -em2kh * factor, False))
    for w, factor in n2_vectors:
        common.append(_Term("N2", w, w, -em2kh * factor, False))

    # -- delay-rate coupling of the interpolated energy
    common.append(_Term("M1", E[1], E[1], mu / h, False))
    common.append(_Term("M2", E[1], E[1], -mu / h, False))

    # -- coupled two-segment projection bound (orders 0..3 per segment)
    gamma1 = [
        E[1] - E[2],
        E[1] + E[2] - 2.0 * E[7],
        E[1] - E[2] + 6.0 * E[7] - 6.0 * E[10],
        E[1] + E[2] - 12.0 * E[7] + 30.0 * E[10] - 20.0 * E[13],
    ]
    gamma2 = [
        E[2] - E[3],
        E[2] + E[3] - 2.0 * E[8],
        E[2] - E[3] + 6.0 * E[8] - 6.0 * E[11],
        E[2] + E[3] - 12.0 * E[8] + 30.0 * E[11] - 20.0 * E[14],
    ]
    for order, (g1, g2) in enumerate(zip(gamma1, gamma2)):
        weight = -em2kh * (2.0 * order + 1.0)
        common.append(_Term("Z1", g1, g1, weight, False))
        common.append(_Term("Z1", g2, g2, weight, False))
    common.append(_Term("S1", _stack(gamma1), _stack(gamma2), -em2kh, True))

    # -- weighted two-segment bound on the plain double-integral energy
    y1 = E[1] - E[2]
    y2 = E[2] - E[3]
    common.append(_Term("Z4", y1, y1, -psi2_gain, False))
    common.append(_Term("Z4", y2, y2, -psi2_gain, False))
    common.append(_Term("S2", y1, y2, -psi2_gain, True))

    # -- sector bounds on the activations
    common.append(_Term("R1", E[1] @ lmat, E[4], 1.0, True))
    common.append(_Term("R1", E[4], E[4], -1.0, True))
    common.append(_Term("R2", E[2] @ lmat, E[5], 1.0, True))
    common.append(_Term("R2", E[5], E[5], -1.0, True))

    # -- delay-extreme specific parts: the window integral splits into the
    #    near and far averages affinely in h(t), so negativity at both
    #    extremes covers the range
    z_dot = _stack([ev, E[1] - E[3], 2.0 * (E[1] - E[6])])

    def extreme_terms(avg_block: int, m_var: str) -> list[_Term]:
        za = _stack([E[1], h * E[avg_block], h * E[9]])
        return [
            _Term("P", za, z_dot, 1.0, True),
            _Term(m_var, E[1], E[1], k, True),
            _Term(m_var, E[1], ev, 1.0, True),
        ]

    theta1 = extreme_terms(7, "M1")
    theta2 = extreme_terms(8, "M2")
    if attenuation_anchor is not None:
        # Tangent line of exp(2k(h - h(t))) at h(t) = anchor*h, evaluated at
        # the two delay extremes; interpolating the extremes reproduces the
        # tangent at every interior h(t).
        slope_arg = 2.0 * k * h
        g = math.exp(slope_arg * (1.0 - attenuation_anchor))
        att_full = g * (1.0 - slope_arg * (1.0 - attenuation_anchor))
        att_zero = g * (1.0 + slope_arg * attenuation_anchor)
        theta1.append(_Term("Q", q_del, q_del, -(1.0 - mu) * att_full, False))
        theta2.append(_Term("Q", q_del, q_del, -(1.0 - mu) * att_zero, False))

    big1 = [_Term(t.var, -t.left, t.right, t.coef, t.sym) for t in common + theta1]
    big2 = [_Term(t.var, -t.left, t.right, t.coef, t.sym) for t in common + theta2]

    constraints: list[CompiledConstraint] = []
    constraints.append(
        _compile_constraint("decay_form_full_delay", NUM_BLOCKS * n, big1, layout, margin_scale)
    )
    constraints.append(
        _compile_constraint("decay_form_zero_delay", NUM_BLOCKS * n, big2, layout, margin_scale)
    )

    # coupling positivity for the two-segment projection bound
    f8 = [np.zeros((8 * n, n)) for _ in range(8)]
    for o in range(8):
        f8[o][o * n : (o + 1) * n] = np.eye(n)
    coupling1: list[_Term] = []
    for o in range(4):
        weight = 2.0 * o + 1.0
        coupling1.append(_Term("Z1", f8[o], f8[o], weight, False))
        coupling1.append(_Term("N1", f8[o], f8[o], weight, False))
        coupling1.append(_Term("Z1", f8[o + 4], f8[o + 4], weight, False))
        coupling1.append(_Term("N2", f8[o + 4], f8[o + 4], weight, False))
    coupling1.append(_Term("S1", _stack(f8[:4]), _stack(f8[4:]), 1.0, True))
    constraints.append(
        _compile_constraint("segment_coupling", 8 * n, coupling1, layout, margin_scale)
    )

    f2 = [np.zeros((2 * n, n)) for _ in range(2)]
    f2[0][:n] = np.eye(n)
    f2[1][n:] = np.eye(n)
    coupling2 = [
        _Term("Z4", f2[0], f2[0], 1.0, False),
        _Term("Z4", f2[1], f2[1], 1.0, False),
        _Term("S2", f2[0], f2[1], 1.0, True),
    ]
    constraints.append(
        _compile_constraint("window_coupling", 2 * n, coupling2, layout, margin_scale)
    )

    # positivity cones for every matrix block
    cone_vars = ("P", "Q", "U1", "U2", "U3", "Z1", "Z2", "Z3", "Z4", "N1", "N2", "M1", "M2", "D1", "D2", "R1", "R2")
    for var in cone_vars:
        dim = layout.blocks[var].dim
        eye = np.eye(dim)
        constraints.append(
            _compile_constraint(
                f"cone_{var}", dim, [_Term(var, eye, eye, 1.0, False)], layout, margin_scale
            )
        )

    return StabilityProblem(
        system=system,
        h=float(h),
        mu=float(mu),
        k=float(k),
        xi=float(xi),
        layout=layout,
        constraints=tuple(constraints),
        basis=basis,
        margin_scale=float(margin_scale),
        attenuation_anchor=attenuation_anchor,
    )
