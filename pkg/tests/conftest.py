"""Shared helpers for building random feasible-shaped data in tests."""

import numpy as np

from delaycert.lmi import LmiLayout


def make_random_system(rng: np.random.Generator, n: int):
    from delaycert.systems import DelayedNNSystem

    return DelayedNNSystem(
        k0_diag=rng.uniform(0.8, 2.5, size=n),
        k1=rng.normal(size=(n, n)) * 0.4,
        k2=rng.normal(size=(n, n)) * 0.4,
        slopes=rng.uniform(0.3, 1.2, size=n),
        name="random",
    )


def random_psd_variables(rng: np.random.Generator, layout: LmiLayout) -> dict:
    """Random blocks satisfying every cone and coupling constraint."""
    n = layout.n
    mats = {}
    for name, info in layout.blocks.items():
        if info.kind == "full":
            continue
        if info.kind == "diag":
            mats[name] = np.diag(rng.uniform(0.05, 1.0, size=info.dim))
        else:
            raw = rng.normal(size=(info.dim, info.dim))
            mats[name] = raw @ raw.T / info.dim + 0.05 * np.eye(info.dim)

    # couplings scaled inside the Schur bound of their diagonal blocks
    z11_min = min(
        np.linalg.eigvalsh(mats["Z1"] + mats["N1"])[0],
        np.linalg.eigvalsh(mats["Z1"] + mats["N2"])[0],
    )
    raw = rng.normal(size=(4 * n, 4 * n))
    cap = 0.9 * z11_min  # odd multipliers only increase the diagonal floor
    mats["S1"] = raw * min(1.0, cap / np.linalg.norm(raw, 2))
    raw2 = rng.normal(size=(n, n))
    cap2 = 0.9 * np.linalg.eigvalsh(mats["Z4"])[0]
    mats["S2"] = raw2 * min(1.0, cap2 / np.linalg.norm(raw2, 2))
    return mats


def gl_points(a: float, b: float, panels: int, order: int = 10):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mids = (edges[:-1] + edges[1:]) / 2.0
    halves = (edges[1:] - edges[:-1]) / 2.0
    s = (mids[:, None] + halves[:, None] * nodes[None, :]).reshape(-1)
    w = (halves[:, None] * weights[None, :]).reshape(-1)
    return s, w


def extend_with_history(traj, history_fn):
    """State function covering negative times through the history."""

    def fn(s):
        s = np.asarray(s, dtype=float)
        if s.ndim == 0:
            return traj(float(s)) if s >= 0.0 else np.asarray(history_fn(float(s)))
        out = np.empty((s.size, traj.dim))
        pos = s >= 0.0
        if np.any(pos):
            out[pos] = traj(s[pos])
        for i in np.nonzero(~pos)[0]:
            out[i] = np.asarray(history_fn(float(s[i])))
        return out

    return fn
