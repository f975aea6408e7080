"""Assembly tests: variable packing, constraint compilation, and an
independent re-evaluation of the full quadratic form on random data."""

import math

import numpy as np
import pytest

from delaycert.basis import WeightedBasis
from delaycert.lmi import (
    LmiLayout,
    assemble_stability_problem,
    count_variables,
)
from delaycert.systems import DelayedNNSystem, bundled_system


def random_system(rng: np.random.Generator, n: int) -> DelayedNNSystem:
    return DelayedNNSystem(
        k0_diag=rng.uniform(0.8, 2.5, size=n),
        k1=rng.normal(size=(n, n)) * 0.4,
        k2=rng.normal(size=(n, n)) * 0.4,
        slopes=rng.uniform(0.3, 1.2, size=n),
        name="random",
    )


def random_variables(rng: np.random.Generator, layout: LmiLayout) -> dict:
    mats = {}
    for name, info in layout.blocks.items():
        raw = rng.normal(size=(info.dim, info.dim))
        if info.kind == "sym":
            mats[name] = (raw + raw.T) / 2.0
        elif info.kind == "diag":
            mats[name] = np.diag(rng.normal(size=info.dim))
        else:
            mats[name] = raw
    return mats


class TestCounting:
    @pytest.mark.parametrize(
        "n,expected", [(1, 41), (2, 140), (4, 512), (8, 1952)]
    )
    def test_exact_counts(self, n, expected):
        assert count_variables(n) == expected
        assert LmiLayout(n).num_variables == expected

    def test_closed_form_matches_block_sum(self):
        for n in range(1, 7):
            assert count_variables(n) == 29 * n * n + 12 * n

    def test_rejects_bad_dimension(self):
        with pytest.raises(ValueError):
            count_variables(0)
        with pytest.raises(ValueError):
            LmiLayout(-1)


class TestLayout:
    def test_pack_unpack_round_trip(self):
        rng = np.random.default_rng(7)
        layout = LmiLayout(3)
        mats = random_variables(rng, layout)
        x = layout.pack(mats)
        assert x.shape == (layout.num_variables,)
        back = layout.unpack(x)
        for name, mat in mats.items():
            np.testing.assert_allclose(back[name], mat, atol=1e-14)

    def test_pack_accepts_diag_vector(self):
        layout = LmiLayout(2)
        mats = random_variables(np.random.default_rng(0), layout)
        as_vec = dict(mats)
        as_vec["D1"] = np.diagonal(mats["D1"]).copy()
        np.testing.assert_allclose(layout.pack(as_vec), layout.pack(mats))

    def test_pack_rejects_asymmetric(self):
        layout = LmiLayout(2)
        mats = random_variables(np.random.default_rng(1), layout)
        mats["P"] = np.arange(36.0).reshape(6, 6)
        with pytest.raises(ValueError, match="symmetric"):
            layout.pack(mats)

    def test_unpack_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            LmiLayout(1).unpack(np.zeros(40))


def quadratic_form_oracle(system, h, mu, k, xi, mats, chi, extreme):
    """Literal block-by-block evaluation of the dominating quadratic form."""
    n = system.dim
    b = [chi[i * n : (i + 1) * n] for i in range(15)]
    lmat = system.slope_matrix
    rv = -system.k0_diag * b[0] + system.k1 @ b[3] + system.k2 @ b[4]

    basis = WeightedBasis.build(-h, 0.0, 2.0 * k)
    co = basis.coefficients
    norms = basis.norms

    e2kh = math.exp(2.0 * k * h)
    em2kh = math.exp(-2.0 * k * h)
    e2khx = math.exp(2.0 * k * (h - xi))
    psi2_gain = 2.0 * k * h / math.expm1(2.0 * k * h)

    total = 0.0

    # history-state energy growth
    zeta = np.concatenate([b[0], h * b[5], h * b[8]])
    total += 2.0 * k * (zeta @ mats["P"] @ zeta)
    total += 2.0 * (2.0 * k) * (b[3] @ mats["D1"] @ b[0])
    total += 2.0 * (2.0 * k) * ((lmat @ b[0] - b[3]) @ mats["D2"] @ b[0])
    total += 2.0 * (b[3] @ mats["D1"] @ rv)
    total += 2.0 * ((lmat @ b[0] - b[3]) @ mats["D2"] @ rv)

    eta_now = np.concatenate([b[0], b[3]])
    eta_del = np.concatenate([b[1], b[4]])
    total += e2kh * (eta_now @ mats["Q"] @ eta_now)
    total += e2kh * (b[0] @ (mats["U1"] + mats["U2"]) @ b[0])
    total -= (1.0 - mu) * (eta_del @ mats["Q"] @ eta_del)
    total -= e2khx * (b[14] @ (mats["U2"] - mats["U3"]) @ b[14])
    total -= b[2] @ (mats["U1"] + mats["U3"]) @ b[2]

    total += h * h * (rv @ (mats["Z1"] + mats["Z3"] + mats["Z4"]) @ rv)
    total += h * h * (b[0] @ mats["Z2"] @ b[0])

    kbar, cc, mm = co.kbar, co.c_coef, co.m_coef
    hbar, qq, rr = co.hbar, co.q_coef, co.r_coef
    w_vecs = [
        h * b[5],
        (kbar - h) * h * b[5] + (h * h / 2.0) * b[8],
        (h * h - cc * h + mm) * h * b[5]
        + (cc - 2.0 * h) * (h * h / 2.0) * b[8]
        + (h**3 / 3.0) * b[11],
    ]
    for w, norm in zip(w_vecs, norms[:3]):
        total -= (h / norm) * (w @ mats["Z2"] @ w)

    x_vecs = [
        b[0] - b[2],
        kbar * b[0] + (h - kbar) * b[2] - h * b[5],
        mm * b[0] + (cc * h - mm - h * h) * b[2] + (2.0 * h - cc) * h * b[5] - h * h * b[8],
        rr * b[0]
        + (h**3 - hbar * h * h + qq * h - rr) * b[2]
        - (3.0 * h * h - 2.0 * hbar * h + qq) * h * b[5]
        - (hbar - 3.0 * h) * h * h * b[8]
        - h**3 * b[11],
    ]
    for w, norm in zip(x_vecs, norms):
        total -= (h / norm) * (w @ mats["Z3"] @ w)

    total += (h * h / 2.0) * (rv @ (mats["N1"] + mats["N2"]) @ rv)
    for w, factor in (
        (b[0] - b[6], 2.0),
        (b[0] + 2.0 * b[6] - 3.0 * b[9], 4.0),
        (b[1] - b[7], 2.0),
        (b[1] + 2.0 * b[7] - 3.0 * b[10], 4.0),
    ):
        total -= em2kh * factor * (w @ mats["N1"] @ w)
    for w, factor in (
        (b[1] - b[6], 2.0),
        (b[1] - 4.0 * b[6] + 3.0 * b[9], 4.0),
        (b[2] - b[7], 2.0),
        (b[2] - 4.0 * b[7] + 3.0 * b[10], 4.0),
    ):
        total -= em2kh * factor * (w @ mats["N2"] @ w)

    total += (mu / h) * (b[0] @ (mats["M1"] - mats["M2"]) @ b[0])

    g1 = [
        b[0] - b[1],
        b[0] + b[1] - 2.0 * b[6],
        b[0] - b[1] + 6.0 * b[6] - 6.0 * b[9],
        b[0] + b[1] - 12.0 * b[6] + 30.0 * b[9] - 20.0 * b[12],
    ]
    g2 = [
        b[1] - b[2],
        b[1] + b[2] - 2.0 * b[7],
        b[1] - b[2] + 6.0 * b[7] - 6.0 * b[10],
        b[1] + b[2] - 12.0 * b[7] + 30.0 * b[10] - 20.0 * b[13],
    ]
    for order in range(4):
        total -= em2kh * (2 * order + 1) * (g1[order] @ mats["Z1"] @ g1[order])
        total -= em2kh * (2 * order + 1) * (g2[order] @ mats["Z1"] @ g2[order])
    total -= em2kh * 2.0 * (np.concatenate(g1) @ mats["S1"] @ np.concatenate(g2))

    y1 = b[0] - b[1]
    y2 = b[1] - b[2]
    total -= psi2_gain * (y1 @ mats["Z4"] @ y1 + y2 @ mats["Z4"] @ y2)
    total -= psi2_gain * 2.0 * (y1 @ mats["S2"] @ y2)

    total += 2.0 * ((lmat @ b[0]) @ mats["R1"] @ b[3]) - 2.0 * (b[3] @ mats["R1"] @ b[3])
    total += 2.0 * ((lmat @ b[1]) @ mats["R2"] @ b[4]) - 2.0 * (b[4] @ mats["R2"] @ b[4])

    avg = b[6] if extreme == 1 else b[7]
    m_var = mats["M1"] if extreme == 1 else mats["M2"]
    za = np.concatenate([b[0], h * avg, h * b[8]])
    zd = np.concatenate([rv, b[0] - b[2], 2.0 * (b[0] - b[5])])
    total += 2.0 * (za @ mats["P"] @ zd)
    total += 2.0 * k * (b[0] @ m_var @ b[0])
    total += 2.0 * (b[0] @ m_var @ rv)

    return total


class TestAssembly:
    def setup_problem(self, seed=3, n=2, h=1.1, mu=0.6, k=0.45, xi=0.4):
        rng = np.random.default_rng(seed)
        system = random_system(rng, n)
        problem = assemble_stability_problem(system, h=h, mu=mu, k=k, xi=xi)
        return rng, system, problem

    def test_constraint_inventory(self):
        _, _, problem = self.setup_problem()
        names = [c.name for c in problem.constraints]
        assert names[0] == "decay_form_full_delay"
        assert names[1] == "decay_form_zero_delay"
        assert "segment_coupling" in names
        assert "window_coupling" in names
        assert sum(1 for nm in names if nm.startswith("cone_")) == 17
        sizes = {c.name: c.size for c in problem.constraints}
        n = problem.system.dim
        assert sizes["decay_form_full_delay"] == 15 * n
        assert sizes["segment_coupling"] == 8 * n
        assert sizes["window_coupling"] == 2 * n
        assert sizes["cone_P"] == 3 * n
        assert sizes["cone_Q"] == 2 * n

    def test_constraints_are_symmetric(self):
        rng, _, problem = self.setup_problem(seed=11)
        x = rng.normal(size=problem.num_variables)
        for c in problem.constraints:
            g = c.evaluate(x)
            np.testing.assert_allclose(g, g.T, atol=1e-12)

    def test_zero_point_hits_margin(self):
        _, _, problem = self.setup_problem()
        x = np.zeros(problem.num_variables)
        for name, val in problem.min_eigens(x).items():
            assert val == pytest.approx(-problem.margin_scale, rel=1e-12), name

    @pytest.mark.parametrize("extreme,cname", [(1, "decay_form_full_delay"), (2, "decay_form_zero_delay")])
    def test_decay_form_matches_block_oracle(self, extreme, cname):
        for seed in range(6):
            rng, system, problem = self.setup_problem(seed=seed, n=2)
            mats = random_variables(rng, problem.layout)
            x = problem.layout.pack(mats)
            chi = rng.normal(size=15 * system.dim)
            expected = quadratic_form_oracle(
                system, problem.h, problem.mu, problem.k, problem.xi, mats, chi, extreme
            )
            cons = {c.name: c for c in problem.constraints}
            got = chi @ cons[cname].evaluate(x) @ chi
            # constraint holds the negated form minus the margin shift
            ref = -expected - problem.margin_scale * (chi @ chi)
            assert got == pytest.approx(ref, rel=1e-9, abs=1e-9)

    def test_oracle_matches_in_higher_dimension(self):
        rng, system, problem = self.setup_problem(seed=21, n=3, h=0.8, mu=0.3, k=0.3, xi=0.5)
        mats = random_variables(rng, problem.layout)
        x = problem.layout.pack(mats)
        chi = rng.normal(size=15 * system.dim)
        expected = quadratic_form_oracle(
            system, problem.h, problem.mu, problem.k, problem.xi, mats, chi, 1
        )
        got = chi @ problem.constraints[0].evaluate(x) @ chi
        assert got == pytest.approx(-expected - problem.margin_scale * (chi @ chi), rel=1e-9)

    def test_coupling_blocks(self):
        rng, system, problem = self.setup_problem(seed=5)
        n = system.dim
        mats = random_variables(rng, problem.layout)
        x = problem.layout.pack(mats)
        cons = {c.name: c for c in problem.constraints}

        g = cons["segment_coupling"].evaluate(x) + problem.margin_scale * np.eye(8 * n)
        z11 = g[:4 * n, :4 * n]
        z12 = g[4 * n :, 4 * n :]
        s1 = g[:4 * n, 4 * n :]
        for o in range(4):
            blk = slice(o * n, (o + 1) * n)
            np.testing.assert_allclose(
                z11[blk, blk], (2 * o + 1) * (mats["Z1"] + mats["N1"]), atol=1e-12
            )
            np.testing.assert_allclose(
                z12[blk, blk], (2 * o + 1) * (mats["Z1"] + mats["N2"]), atol=1e-12
            )
        np.testing.assert_allclose(s1, mats["S1"], atol=1e-12)

        g2 = cons["window_coupling"].evaluate(x) + problem.margin_scale * np.eye(2 * n)
        np.testing.assert_allclose(g2[:n, :n], mats["Z4"], atol=1e-12)
        np.testing.assert_allclose(g2[n:, n:], mats["Z4"], atol=1e-12)
        np.testing.assert_allclose(g2[:n, n:], mats["S2"], atol=1e-12)

    def test_cone_constraints_reproduce_blocks(self):
        rng, _, problem = self.setup_problem(seed=9)
        mats = random_variables(rng, problem.layout)
        x = problem.layout.pack(mats)
        cons = {c.name: c for c in problem.constraints}
        for var in ("P", "Q", "U3", "Z2", "N2", "M1", "D2", "R1"):
            dim = problem.layout.blocks[var].dim
            expected = np.asarray(mats[var], dtype=float) - problem.margin_scale * np.eye(dim)
            np.testing.assert_allclose(cons[f"cone_{var}"].evaluate(x), expected, atol=1e-12)

    def test_sparse_round_trip(self):
        rng, _, problem = self.setup_problem(seed=13, n=1)
        data = problem.to_sparse_dict()
        assert data["num_variables"] == 41
        x = rng.normal(size=problem.num_variables)
        for c, spec in zip(problem.constraints, data["constraints"]):
            size = spec["size"]
            rebuilt = np.zeros((size, size))
            for gidx, rr, cc, val in spec["terms"]:
                rebuilt[rr, cc] += val * x[gidx]
                if rr != cc:
                    rebuilt[cc, rr] += val * x[gidx]
            for rr, cc, val in spec["constant"]:
                rebuilt[rr, cc] += val
                if rr != cc:
                    rebuilt[cc, rr] += val
            np.testing.assert_allclose(rebuilt, c.evaluate(x), atol=1e-12)

    def test_basis_attached_at_double_rate(self):
        _, _, problem = self.setup_problem(k=0.37)
        assert problem.basis.delta == pytest.approx(0.74)
        assert problem.basis.c1 == pytest.approx(-problem.h)


class TestPreconditions:
    def test_rate_must_stay_below_self_decay(self):
        system = bundled_system("bench2")
        with pytest.raises(ValueError, match="smallest self-decay"):
            assemble_stability_problem(system, h=1.0, mu=0.5, k=2.0)
        with pytest.raises(ValueError, match="smallest self-decay"):
            assemble_stability_problem(system, h=1.0, mu=0.5, k=0.0)

    def test_xi_inside_window(self):
        system = bundled_system("bench2")
        with pytest.raises(ValueError, match="xi"):
            assemble_stability_problem(system, h=1.0, mu=0.5, k=0.5, xi=1.0)
        with pytest.raises(ValueError, match="xi"):
            assemble_stability_problem(system, h=1.0, mu=0.5, k=0.5, xi=0.0)

    def test_other_preconditions(self):
        system = bundled_system("bench2")
        with pytest.raises(ValueError, match="h must be positive"):
            assemble_stability_problem(system, h=0.0, mu=0.5, k=0.5)
        with pytest.raises(ValueError, match="mu"):
            assemble_stability_problem(system, h=1.0, mu=-0.1, k=0.5)
        with pytest.raises(ValueError, match="margin_scale"):
            assemble_stability_problem(system, h=1.0, mu=0.5, k=0.5, margin_scale=0.0)

    def test_default_xi_is_half_window(self):
        system = bundled_system("bench2")
        problem = assemble_stability_problem(system, h=1.6, mu=0.5, k=0.5)
        assert problem.xi == pytest.approx(0.8)
