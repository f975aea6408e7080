"""Closed-form function algebra for building integral-inequality test cases.

Functions are finite sums Re[p(v) e^{zv}] with complex polynomial p and
complex rate z.  That one atom shape covers polynomials (z = 0), damped
trigonometrics (z = i*omega), and exponentials (z real), and the family is
closed under addition, products, differentiation, and definite integration,
so projections and weighted energies evaluate exactly instead of by
quadrature.  Coefficients live in raw ascending ndarrays; the suite runners
integrate hundreds of thousands of atoms, so the hot paths avoid polynomial
object wrappers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

__all__ = ["ScalarFunc", "TestFunction", "random_scalar_func", "random_test_function"]

# |z|*max(|a|,|b|,1) at or below this integrates by Taylor series in z; the
# by-parts closed form divides by z^{k+1} and cancels badly for small rates.
_SERIES_SWITCH = 2.0
_SERIES_CAP = 44
_FACTORIALS = np.cumprod(np.concatenate(([1.0], np.arange(1.0, _SERIES_CAP + 1))))


@dataclass(frozen=True, eq=False)
class _Atom:
    poly: np.ndarray  # ascending complex coefficients, at least one entry
    z: complex


def _atom(coeffs, z) -> _Atom:
    c = np.atleast_1d(np.asarray(coeffs, dtype=complex))
    return _Atom(poly=c, z=complex(z))


def _deriv_coeffs(c: np.ndarray) -> np.ndarray:
    if len(c) == 1:
        return np.zeros(1, dtype=complex)
    return c[1:] * np.arange(1, len(c))


def _integrate_atom(atom: _Atom, a: float, b: float) -> complex:
    """int_a^b p(v) e^{zv} dv, exactly."""
    c = atom.poly
    z = atom.z
    deg = len(c)
    if abs(z) * max(abs(a), abs(b), 1.0) <= _SERIES_SWITCH:
        # sum_m z^m/m! int p(v) v^m dv, all monomial integrals
        maxp = deg + _SERIES_CAP
        powers = np.arange(1, maxp + 1)
        diff = np.power(b, powers) - np.power(a, powers)  # index p-1 <-> v^p
        i_idx = np.arange(deg)
        m_idx = np.arange(_SERIES_CAP + 1)
        pgrid = i_idx[None, :] + m_idx[:, None]  # i + m
        weights = diff[pgrid] / (pgrid + 1)
        mono = weights @ c  # int p v^m dv for each m
        if z == 0:
            return mono[0]
        zpow = np.power(z, m_idx) / _FACTORIALS
        return complex(zpow @ mono)
    # antiderivative q e^{zv} with q = sum_k (-1)^k p^(k) / z^(k+1)
    q = np.zeros(deg, dtype=complex)
    dk = c
    zpow = z
    sign = 1.0
    for _ in range(deg):
        q[: len(dk)] += (sign / zpow) * dk
        dk = _deriv_coeffs(dk)
        if len(dk) == 1 and dk[0] == 0:
            break
        zpow *= z
        sign = -sign
    return complex(
        npoly.polyval(b, q) * np.exp(z * b) - npoly.polyval(a, q) * np.exp(z * a)
    )


class ScalarFunc:
    """Real-valued function of one variable as a sum of Re[p(v) e^{zv}] atoms."""

    __slots__ = ("_atoms",)

    def __init__(self, atoms: tuple[_Atom, ...] = ()):
        self._atoms = atoms

    @classmethod
    def zero(cls) -> "ScalarFunc":
        return cls(())

    @classmethod
    def polynomial(cls, coeffs) -> "ScalarFunc":
        return cls((_atom(coeffs, 0.0),))

    @classmethod
    def exponential(cls, coeffs, alpha: float) -> "ScalarFunc":
        """p(v) * e^{alpha v}."""
        return cls((_atom(coeffs, float(alpha)),))

    @classmethod
    def trig(cls, coeffs, omega: float, phase: float = 0.0) -> "ScalarFunc":
        """p(v) * sin(omega v + phase), via sin(t) = Re[-i e^{it}]."""
        front = -1j * np.exp(1j * phase)
        c = front * np.atleast_1d(np.asarray(coeffs, dtype=complex))
        return cls((_atom(c, 1j * float(omega)),))

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape, dtype=complex)
        for atom in self._atoms:
            out += npoly.polyval(v, atom.poly) * np.exp(atom.z * v)
        out = np.real(out)
        return out if out.shape else float(out)

    def derivative(self) -> "ScalarFunc":
        atoms = []
        for atom in self._atoms:
            d = _deriv_coeffs(atom.poly)
            combined = atom.z * atom.poly
            combined[: len(d)] += d
            atoms.append(_Atom(poly=combined, z=atom.z))
        return ScalarFunc(tuple(atoms))

    def integrate(self, a: float, b: float) -> float:
        a, b = float(a), float(b)
        return float(
            np.real(sum(_integrate_atom(atom, a, b) for atom in self._atoms))
        )

    def weighted(self, delta: float, c2: float) -> "ScalarFunc":
        """Multiply by e^{delta(v - c2)}."""
        front = np.exp(-delta * c2)
        # the weight is real, so Re[p e^{zv}] w(v) = Re[(p w) e^{(z+delta)v}]
        return ScalarFunc(
            tuple(_Atom(poly=front * a.poly, z=a.z + delta) for a in self._atoms)
        )

    def times_poly(self, coeffs) -> "ScalarFunc":
        """Multiply by a real polynomial without the conjugate-split blowup."""
        q = np.atleast_1d(np.asarray(coeffs, dtype=complex))
        return ScalarFunc(
            tuple(_Atom(poly=np.convolve(a.poly, q), z=a.z) for a in self._atoms)
        )

    def __add__(self, other: "ScalarFunc") -> "ScalarFunc":
        if not isinstance(other, ScalarFunc):
            return NotImplemented
        return ScalarFunc(self._atoms + other._atoms)

    def __sub__(self, other: "ScalarFunc") -> "ScalarFunc":
        return self + (-other)

    def __neg__(self) -> "ScalarFunc":
        return self * -1.0

    def __mul__(self, other):
        if isinstance(other, ScalarFunc):
            # Re(A)Re(B) = (1/2)Re(AB) + (1/2)Re(A conj(B))
            atoms = []
            for x in self._atoms:
                for y in other._atoms:
                    atoms.append(
                        _Atom(poly=0.5 * np.convolve(x.poly, y.poly), z=x.z + y.z)
                    )
                    atoms.append(
                        _Atom(
                            poly=0.5 * np.convolve(x.poly, np.conj(y.poly)),
                            z=x.z + np.conj(y.z),
                        )
                    )
            return ScalarFunc(tuple(atoms))
        scalar = float(other)
        return ScalarFunc(
            tuple(_Atom(poly=scalar * a.poly, z=a.z) for a in self._atoms)
        )

    __rmul__ = __mul__


class TestFunction:
    """Vector-valued test function: one ScalarFunc per coordinate."""

    __test__ = False  # mathematical test function, not a pytest case

    def __init__(self, components: list[ScalarFunc]):
        if not components:
            raise ValueError("need at least one component")
        self.components = list(components)

    @property
    def dim(self) -> int:
        return len(self.components)

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.stack([f(v) for f in self.components])

    def derivative(self) -> "TestFunction":
        return TestFunction([f.derivative() for f in self.components])

    def project(self, poly_coeffs, a: float, b: float) -> np.ndarray:
        """Unweighted moment vector int_a^b p(v) f(v) dv, one entry per coordinate."""
        return np.array([f.times_poly(poly_coeffs).integrate(a, b) for f in self.components])

    def weighted_energy(self, gram: np.ndarray, delta: float, c2: float, a: float, b: float) -> float:
        """int_a^b e^{delta(v - c2)} f(v)^T G f(v) dv via closed-form products."""
        gram = np.asarray(gram, dtype=float)
        n = self.dim
        total = 0.0
        for i in range(n):
            for j in range(i, n):
                if gram[i, j] == 0.0 and gram[j, i] == 0.0:
                    continue
                prod = (self.components[i] * self.components[j]).weighted(delta, c2)
                val = prod.integrate(a, b)
                coef = gram[i, j] if i == j else gram[i, j] + gram[j, i]
                total += coef * val
        return total


def random_scalar_func(rng: np.random.Generator, degree: int = 3) -> ScalarFunc:
    """Mixed polynomial + trig + exponential draw with O(1) coefficients."""
    f = ScalarFunc.polynomial(rng.standard_normal(degree + 1))
    f = f + ScalarFunc.trig(
        rng.standard_normal(2),
        omega=float(rng.uniform(0.3, 4.0)),
        phase=float(rng.uniform(0.0, 2.0 * np.pi)),
    )
    f = f + ScalarFunc.exponential(rng.standard_normal(2), alpha=float(rng.uniform(-1.5, 1.5)))
    return f


def random_test_function(rng: np.random.Generator, dim: int, degree: int = 3) -> TestFunction:
    return TestFunction([random_scalar_func(rng, degree) for _ in range(dim)])
