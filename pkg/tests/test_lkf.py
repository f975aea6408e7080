"""Functional-layer tests: block assembly identities, quadrature agreement,
the exact produce/drain derivative identity, and closed-loop dominance."""

import math

import numpy as np
import pytest
from scipy import integrate

from conftest import (
    extend_with_history,
    gl_points,
    make_random_system,
    random_psd_variables,
)
from delaycert.dde import simulate
from delaycert.funcspace import random_test_function
from delaycert.lkf import assemble_augmented_state, dominance_gap, evaluate_lkf
from delaycert.lmi import LmiLayout, assemble_stability_problem
from delaycert.systems import DelaySignal, bundled_system


def vector_state(tf):
    """Adapt a component-stacked test function to sample-major layout."""

    def fn(s):
        vals = tf(np.asarray(s, dtype=float))
        return vals.T if vals.ndim == 2 else vals

    return fn


class TestAugmentedState:
    def test_constant_state(self):
        rng = np.random.default_rng(0)
        system = make_random_system(rng, 3)
        c = rng.normal(size=3)

        def state(s):
            if np.ndim(s) == 0:
                return c
            return np.broadcast_to(c, (np.size(s), 3))

        chi = assemble_augmented_state(
            state, system, h=1.3, t=5.0, delay_value=0.8, xi=0.6
        )
        b = chi.reshape(15, 3)
        act = system.activation()
        for idx in (0, 1, 2, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14):
            np.testing.assert_allclose(b[idx], c, atol=1e-12)
        np.testing.assert_allclose(b[3], act(c), atol=1e-12)
        np.testing.assert_allclose(b[4], act(c), atol=1e-12)

    def test_linear_state_closed_forms(self):
        rng = np.random.default_rng(1)
        system = make_random_system(rng, 2)
        p = rng.normal(size=2)
        q = rng.normal(size=2)

        def state(s):
            s = np.asarray(s, dtype=float)
            if s.ndim == 0:
                return p + q * float(s)
            return p[None, :] + q[None, :] * s[:, None]

        h, t, ht, xi = 1.1, 4.0, 0.7, 0.5
        chi = assemble_augmented_state(state, system, h=h, t=t, delay_value=ht, xi=xi)
        b = chi.reshape(15, 2)

        def expect(a, bb, power):
            # ((power+1)/w^{p+1}) int (s-a)^p (p + q s) ds = p + q*(a + w*(p+1)/(p+2))
            w = bb - a
            return p + q * (a + w * (power + 1) / (power + 2))

        np.testing.assert_allclose(b[5], expect(t - h, t, 0), atol=1e-10)
        np.testing.assert_allclose(b[6], expect(t - ht, t, 0), atol=1e-10)
        np.testing.assert_allclose(b[7], expect(t - h, t - ht, 0), atol=1e-10)
        np.testing.assert_allclose(b[8], expect(t - h, t, 1), atol=1e-10)
        np.testing.assert_allclose(b[9], expect(t - ht, t, 1), atol=1e-10)
        np.testing.assert_allclose(b[10], expect(t - h, t - ht, 1), atol=1e-10)
        np.testing.assert_allclose(b[11], expect(t - h, t, 2), atol=1e-10)
        np.testing.assert_allclose(b[12], expect(t - ht, t, 2), atol=1e-10)
        np.testing.assert_allclose(b[13], expect(t - h, t - ht, 2), atol=1e-10)
        np.testing.assert_allclose(b[14], p + q * (t - xi), atol=1e-12)

    def test_split_consistency(self):
        # the full-window moments decompose exactly over the two segments
        rng = np.random.default_rng(7)
        tf = random_test_function(rng, dim=2)
        state = vector_state(tf)
        h, t, ht = 1.4, 3.0, 0.9
        w_far = h - ht
        chi = assemble_augmented_state(
            state, make_random_system(rng, 2), h=h, t=t, delay_value=ht, xi=0.4
        )
        b = chi.reshape(15, 2)
        np.testing.assert_allclose(h * b[5], ht * b[6] + w_far * b[7], rtol=1e-9)
        lhs1 = (h * h / 2.0) * b[8]
        rhs1 = (w_far**2 / 2.0) * b[10] + (ht**2 / 2.0) * b[9] + w_far * ht * b[6]
        np.testing.assert_allclose(lhs1, rhs1, rtol=1e-9)
        lhs2 = (h**3 / 3.0) * b[11]
        rhs2 = (
            (w_far**3 / 3.0) * b[13]
            + (ht**3 / 3.0) * b[12]
            + 2.0 * w_far * (ht**2 / 2.0) * b[9]
            + w_far**2 * ht * b[6]
        )
        np.testing.assert_allclose(lhs2, rhs2, rtol=1e-9)

    def test_degenerate_delay_values(self):
        rng = np.random.default_rng(3)
        system = make_random_system(rng, 2)
        tf = random_test_function(rng, dim=2)
        state = vector_state(tf)
        h, t = 1.0, 2.5
        chi0 = assemble_augmented_state(state, system, h=h, t=t, delay_value=0.0, xi=0.5)
        b0 = chi0.reshape(15, 2)
        r_t = np.asarray(state(t))
        for idx in (1, 6, 9, 12):
            np.testing.assert_allclose(b0[idx], r_t, atol=1e-9)
        chih = assemble_augmented_state(state, system, h=h, t=t, delay_value=h, xi=0.5)
        bh = chih.reshape(15, 2)
        r_old = np.asarray(state(t - h))
        for idx in (7, 10, 13):
            np.testing.assert_allclose(bh[idx], r_old, atol=1e-9)

    def test_validation(self):
        rng = np.random.default_rng(4)
        system = make_random_system(rng, 2)
        state = vector_state(random_test_function(rng, dim=2))
        with pytest.raises(ValueError, match="delay value"):
            assemble_augmented_state(state, system, h=1.0, t=0.0, delay_value=1.5, xi=0.5)
        with pytest.raises(ValueError, match="xi"):
            assemble_augmented_state(state, system, h=1.0, t=0.0, delay_value=0.5, xi=1.5)


def exact_rate_of_change(system, h, k, xi, mats, state_fn, deriv_fn, t, ht, hdot, act):
    """Produce/drain form of d/dt V + 2kV, all integrals by quadrature."""
    lmat = system.slope_matrix
    n = system.dim
    r_t = np.asarray(state_fn(t), dtype=float)
    dx_t = np.asarray(deriv_fn(t), dtype=float)
    r_h = np.asarray(state_fn(t - h), dtype=float)
    r_xi = np.asarray(state_fn(t - xi), dtype=float)
    r_d = np.asarray(state_fn(t - ht), dtype=float)
    g_t = act(r_t)
    g_d = act(r_d)

    s, w = gl_points(t - h, t, 256)
    r_s = np.atleast_2d(state_fn(s))
    dx_s = np.atleast_2d(deriv_fn(s))
    v = s - t
    decay = np.exp(2.0 * k * v)

    i1 = w @ r_s
    avg = i1 / h
    zeta = np.concatenate([r_t, i1, (2.0 / h) * ((w * (v + h)) @ r_s)])
    zdot = np.concatenate([dx_t, r_t - r_h, 2.0 * (r_t - avg)])
    total = 2.0 * zeta @ mats["P"] @ zdot + 2.0 * k * (zeta @ mats["P"] @ zeta)

    d1 = np.diagonal(mats["D1"])
    d2 = np.diagonal(mats["D2"])
    g_int = act.integral(r_t)
    sector = np.diagonal(lmat) * r_t**2 / 2.0 - g_int
    total += 2.0 * k * (2.0 * d1 @ g_int + 2.0 * d2 @ sector)
    total += 2.0 * (d1 * g_t) @ dx_t + 2.0 * (d2 * (np.diagonal(lmat) * r_t - g_t)) @ dx_t

    eta_t = np.concatenate([r_t, g_t])
    eta_d = np.concatenate([r_d, g_d])
    total += math.exp(2.0 * k * h) * (eta_t @ mats["Q"] @ eta_t)
    total -= (1.0 - hdot) * math.exp(2.0 * k * (h - ht)) * (eta_d @ mats["Q"] @ eta_d)

    total += math.exp(2.0 * k * h) * (r_t @ (mats["U1"] + mats["U2"]) @ r_t)
    total -= r_h @ (mats["U1"] + mats["U3"]) @ r_h
    total -= math.exp(2.0 * k * (h - xi)) * (r_xi @ (mats["U2"] - mats["U3"]) @ r_xi)

    z134 = mats["Z1"] + mats["Z3"] + mats["Z4"]
    total += h * h * (dx_t @ z134 @ dx_t + r_t @ mats["Z2"] @ r_t)
    f134 = np.einsum("mi,ij,mj->m", dx_s, z134, dx_s)
    f2 = np.einsum("mi,ij,mj->m", r_s, mats["Z2"], r_s)
    total -= h * float((w * decay) @ (f134 + f2))

    fn1 = np.einsum("mi,ij,mj->m", dx_s, mats["N1"], dx_s)
    fn2 = np.einsum("mi,ij,mj->m", dx_s, mats["N2"], dx_s)
    total += (h * h / 2.0) * (dx_t @ (mats["N1"] + mats["N2"]) @ dx_t)
    total -= float((w * decay * (v + h)) @ fn1)
    total -= float((w * decay * (-v)) @ fn2)

    alpha = ht / h
    total += (hdot / h) * (r_t @ (mats["M1"] - mats["M2"]) @ r_t)
    total += alpha * (2.0 * k * (r_t @ mats["M1"] @ r_t) + 2.0 * (r_t @ mats["M1"] @ dx_t))
    total += (1.0 - alpha) * (
        2.0 * k * (r_t @ mats["M2"] @ r_t) + 2.0 * (r_t @ mats["M2"] @ dx_t)
    )
    return float(total)


class TestFunctionalValue:
    def test_parts_match_quadrature(self):
        rng = np.random.default_rng(11)
        system = make_random_system(rng, 1)
        tf = random_test_function(rng, dim=1)
        state = vector_state(tf)
        deriv = vector_state(tf.derivative())
        act = system.activation()
        layout_mats = random_psd_variables(rng, LmiLayout(1))
        h, k, xi, t, ht = 0.9, 0.35, 0.4, 1.7, 0.6
        total, parts = evaluate_lkf(
            system, h, k, xi, layout_mats, state, deriv, t, ht, detail=True
        )
        assert total == pytest.approx(sum(parts.values()))

        P = layout_mats["P"]
        i1, _ = integrate.quad(lambda s: state(s)[0], t - h, t, limit=200)
        i2, _ = integrate.quad(lambda s: (s - t + h) * state(s)[0], t - h, t, limit=200)
        zeta = np.array([state(t)[0], i1, 2.0 / h * i2])
        assert parts["state"] == pytest.approx(float(zeta @ P @ zeta), rel=1e-8)

        q00 = layout_mats["Q"]
        def eta(s):
            r = state(s)[0]
            g = act(np.array([r]))[0]
            vec = np.array([r, g])
            return math.exp(2.0 * k * (s - t + h)) * (vec @ q00 @ vec)
        val, _ = integrate.quad(eta, t - ht, t, limit=200)
        assert parts["window"] == pytest.approx(val, rel=1e-8)

        z134 = (layout_mats["Z1"] + layout_mats["Z3"] + layout_mats["Z4"])[0, 0]
        z2 = layout_mats["Z2"][0, 0]
        val3, _ = integrate.quad(
            lambda s: h
            * math.exp(2.0 * k * (s - t))
            * (s - t + h)
            * (z134 * deriv(s)[0] ** 2),
            t - h,
            t,
            limit=200,
        )
        val3b, _ = integrate.quad(
            lambda s: h
            * math.exp(2.0 * k * (s - t))
            * (s - t + h)
            * (z2 * state(s)[0] ** 2),
            t - h,
            t,
            limit=200,
        )
        assert parts["double_rate"] == pytest.approx(val3, rel=1e-8)
        assert parts["double_state"] == pytest.approx(val3b, rel=1e-8)

        n1 = layout_mats["N1"][0, 0]
        n2 = layout_mats["N2"][0, 0]
        val4, _ = integrate.quad(
            lambda s: math.exp(2.0 * k * (s - t))
            * (
                (s - t + h) ** 2 / 2.0 * n1
                + (h * h - (s - t) ** 2) / 2.0 * n2
            )
            * deriv(s)[0] ** 2,
            t - h,
            t,
            limit=200,
        )
        assert parts["triangle"] == pytest.approx(val4, rel=1e-8)

    def test_derivative_identity(self):
        # central difference of the functional equals the produce/drain form
        rng = np.random.default_rng(23)
        system = make_random_system(rng, 2)
        tf = random_test_function(rng, dim=2)
        state = vector_state(tf)
        deriv = vector_state(tf.derivative())
        act = system.activation()

        layout = LmiLayout(2)
        mats = {}
        for name, info in layout.blocks.items():
            raw = rng.normal(size=(info.dim, info.dim))
            if info.kind == "diag":
                mats[name] = np.diag(rng.normal(size=info.dim))
            else:
                mats[name] = (raw + raw.T) / 2.0

        h, k, xi = 1.0, 0.45, 0.35
        base, amp, omega = 0.55, 0.3, 0.9
        delay = DelaySignal.sinusoid(base, amp, omega)
        t_star = 2.3
        ht = float(delay(t_star))
        hdot = amp * omega * math.cos(omega * t_star)

        def value(tt):
            return evaluate_lkf(
                system, h, k, xi, mats, state, deriv, tt, float(delay(tt)), panels=256
            )

        eps = 4e-4
        v0 = value(t_star)
        fd = (value(t_star + eps) - value(t_star - eps)) / (2.0 * eps) + 2.0 * k * v0
        exact = exact_rate_of_change(
            system, h, k, xi, mats, state, deriv, t_star, ht, hdot, act
        )
        scale = max(1.0, abs(exact), abs(v0))
        assert fd == pytest.approx(exact, abs=5e-6 * scale)


class TestDominance:
    def test_closed_loop_rate_of_change_is_dominated(self):
        system = bundled_system("bench2")
        rng = np.random.default_rng(77)
        h, mu, k = 1.0, 0.8, 0.9
        base, amp = 0.6, 0.25
        omega = mu / amp
        delay = DelaySignal.sinusoid(base, amp, omega)
        assert delay.h_max <= h

        def history(s):
            return np.array([0.6, -0.4]) * math.cos(0.8 * s)

        period = 2.0 * math.pi / omega
        j0 = math.ceil((2.0 * h + 0.5) / period)
        t_final = (j0 + 4) * period + 1.0
        traj = simulate(system, delay, history, t_final=t_final)
        assert not traj.blew_up
        state = extend_with_history(traj, history)
        act = system.activation()

        def deriv(s):
            s_arr = np.atleast_1d(np.asarray(s, dtype=float))
            r_now = np.atleast_2d(state(s_arr))
            r_del = np.atleast_2d(state(s_arr - np.asarray(delay(s_arr))))
            out = (
                -system.k0_diag * r_now
                + act(r_now) @ system.k1.T
                + act(r_del) @ system.k2.T
            )
            return out[0] if np.ndim(s) == 0 else out

        problem = assemble_stability_problem(system, h=h, mu=mu, k=k, xi=h / 2)
        mats = random_psd_variables(rng, problem.layout)
        x = problem.layout.pack(mats)

        worst = np.inf
        for j in range(j0, j0 + 5):
            t_star = j * period  # rate of delay change hits +mu here
            ht = float(delay(t_star))
            assert ht == pytest.approx(base, abs=1e-12)
            chi = assemble_augmented_state(
                state, system, h=h, t=t_star, delay_value=ht, xi=problem.xi
            )
            eps = 5e-4

            def value(tt):
                return evaluate_lkf(
                    system, h, k, problem.xi, mats, state, deriv, tt, float(delay(tt))
                )

            lhs = (value(t_star + eps) - value(t_star - eps)) / (2.0 * eps)
            lhs += 2.0 * k * value(t_star)
            rhs = dominance_gap(problem, x, chi, ht)
            scale = max(abs(lhs), abs(rhs), 1.0)
            worst = min(worst, (rhs - lhs) / scale)
        assert worst >= -1e-4

    def test_dominance_gap_validation(self):
        system = bundled_system("bench2")
        problem = assemble_stability_problem(system, h=1.0, mu=0.5, k=0.5)
        x = np.zeros(problem.num_variables)
        chi = np.ones(30)
        with pytest.raises(ValueError, match="delay value"):
            dominance_gap(problem, x, chi, 1.5)
