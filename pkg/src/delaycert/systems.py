"""System definitions: delayed neural-network dynamics, activations, delay laws.

The model is

    r'(t) = -K0 r(t) + K1 g(r(t)) + K2 g(r(t - h(t))),

with K0 positive diagonal, g componentwise slope-restricted to [0, L_j], and
h(t) a bounded delay with bounded rate.  Systems load from JSON; two benchmark
systems ship with the package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "SystemFormatError",
    "Activation",
    "DelayedNNSystem",
    "DelaySignal",
    "load_system",
    "bundled_system",
    "BUNDLED_SYSTEMS",
]

BUNDLED_SYSTEMS = ("bench2", "bench4")


class SystemFormatError(ValueError):
    """A system description failed validation; message carries the field path."""


@dataclass(frozen=True)
class Activation:
    """Componentwise activation with sector slopes diag(L).

    kind "tanh" is g_j(s) = L_j tanh(s); kind "linear" is the sector boundary
    g_j(s) = L_j s.  Both have g_j(0) = 0 and 0 <= g_j(s)/s <= L_j.
    """

    slopes: np.ndarray
    kind: str = "tanh"

    def __post_init__(self):
        slopes = np.atleast_1d(np.asarray(self.slopes, dtype=float))
        if slopes.ndim != 1 or np.any(slopes < 0) or not np.all(np.isfinite(slopes)):
            raise SystemFormatError(f"activation slopes must be finite and >= 0, got {slopes!r}")
        if self.kind not in ("tanh", "linear"):
            raise SystemFormatError(f"unknown activation kind {self.kind!r}")
        object.__setattr__(self, "slopes", slopes)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "tanh":
            return self.slopes * np.tanh(x)
        return self.slopes * x

    def derivative(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "tanh":
            return self.slopes * (1.0 - np.tanh(x) ** 2)
        return np.broadcast_to(self.slopes, x.shape).copy()

    def integral(self, x: np.ndarray) -> np.ndarray:
        """Componentwise int_0^{x_j} g_j(s) ds, closed form."""
        x = np.asarray(x, dtype=float)
        if self.kind == "tanh":
            # log cosh x = |x| + log1p(e^{-2|x|}) - log 2, overflow-safe
            ax = np.abs(x)
            return self.slopes * (ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0))
        return self.slopes * x * x / 2.0


def _as_square(raw, n: int, path: str) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    if arr.shape != (n, n):
        raise SystemFormatError(f"{path}: expected {n}x{n} matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SystemFormatError(f"{path}: entries must be finite")
    return arr


def _as_diagonal(raw, path: str) -> np.ndarray:
    """Accept a vector or a diagonal matrix; return the diagonal vector."""
    arr = np.asarray(raw, dtype=float)
    if arr.ndim == 1:
        diag = arr
    elif arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
        if np.any(arr - np.diag(np.diagonal(arr)) != 0.0):
            raise SystemFormatError(f"{path}: matrix form must be diagonal")
        diag = np.diagonal(arr).copy()
    else:
        raise SystemFormatError(f"{path}: expected a vector or square diagonal matrix")
    if not np.all(np.isfinite(diag)):
        raise SystemFormatError(f"{path}: entries must be finite")
    return diag


@dataclass(frozen=True)
class DelayedNNSystem:
    """Coefficients of the delayed network, with K0 and L kept as diagonals."""

    k0_diag: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    slopes: np.ndarray
    name: str = ""

    def __post_init__(self):
        k0 = np.atleast_1d(np.asarray(self.k0_diag, dtype=float))
        n = len(k0)
        if np.any(k0 <= 0) or not np.all(np.isfinite(k0)):
            raise SystemFormatError(f"K0: diagonal entries must be finite and > 0, got {k0!r}")
        k1 = _as_square(self.k1, n, "K1")
        k2 = _as_square(self.k2, n, "K2")
        slopes = np.atleast_1d(np.asarray(self.slopes, dtype=float))
        if slopes.shape != (n,):
            raise SystemFormatError(f"L: expected {n} entries, got shape {slopes.shape}")
        if np.any(slopes < 0) or not np.all(np.isfinite(slopes)):
            raise SystemFormatError(f"L: entries must be finite and >= 0, got {slopes!r}")
        object.__setattr__(self, "k0_diag", k0)
        object.__setattr__(self, "k1", k1)
        object.__setattr__(self, "k2", k2)
        object.__setattr__(self, "slopes", slopes)

    @property
    def dim(self) -> int:
        return len(self.k0_diag)

    @property
    def k0(self) -> np.ndarray:
        return np.diag(self.k0_diag)

    @property
    def slope_matrix(self) -> np.ndarray:
        return np.diag(self.slopes)

    def activation(self, kind: str = "tanh") -> Activation:
        return Activation(slopes=self.slopes, kind=kind)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "K0": self.k0_diag.tolist(),
            "K1": self.k1.tolist(),
            "K2": self.k2.tolist(),
            "L": self.slopes.tolist(),
        }


def _system_from_dict(data: dict, origin: str) -> DelayedNNSystem:
    if not isinstance(data, dict):
        raise SystemFormatError(f"{origin}: expected a JSON object at the top level")
    for key in ("K0", "K1", "K2", "L"):
        if key not in data:
            raise SystemFormatError(f"{origin}: missing required field {key!r}")
    k0 = _as_diagonal(data["K0"], "K0")
    name = data.get("name", "")
    if not isinstance(name, str):
        raise SystemFormatError("name: expected a string")
    try:
        return DelayedNNSystem(
            k0_diag=k0,
            k1=np.asarray(data["K1"], dtype=float),
            k2=np.asarray(data["K2"], dtype=float),
            slopes=_as_diagonal(data["L"], "L"),
            name=name,
        )
    except SystemFormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise SystemFormatError(f"{origin}: {exc}") from exc


def load_system(path: str | Path) -> DelayedNNSystem:
    """Load a system description from a JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise SystemFormatError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise SystemFormatError(f"{path}: invalid JSON ({exc})") from None
    return _system_from_dict(data, str(path))


def bundled_system(name: str) -> DelayedNNSystem:
    """Load one of the packaged benchmark systems by name."""
    if name not in BUNDLED_SYSTEMS:
        raise SystemFormatError(
            f"unknown bundled system {name!r}; available: {', '.join(BUNDLED_SYSTEMS)}"
        )
    text = resources.files("delaycert.data").joinpath(f"{name}.json").read_text()
    return _system_from_dict(json.loads(text), f"bundled:{name}")


class DelaySignal:
    """Time-varying delay h(t) with exact bounds h_min, h_max, mu_max."""

    def __init__(self, fn, h_min: float, h_max: float, mu_max: float, label: str):
        if h_min < 0:
            raise SystemFormatError(f"delay must be nonnegative, got minimum {h_min!r}")
        if h_max < h_min:
            raise SystemFormatError("delay maximum below minimum")
        self._fn = fn
        self.h_min = float(h_min)
        self.h_max = float(h_max)
        self.mu_max = float(mu_max)
        self.label = label

    def __call__(self, t):
        return self._fn(np.asarray(t, dtype=float))

    def __repr__(self):
        return f"DelaySignal({self.label})"

    @classmethod
    def constant(cls, value: float) -> "DelaySignal":
        value = float(value)
        if value < 0:
            raise SystemFormatError(f"delay must be nonnegative, got {value!r}")
        return cls(lambda t: np.full_like(t, value), value, value, 0.0, f"h={value:g}")

    @classmethod
    def sinusoid(
        cls, base: float, amplitude: float, omega: float, phase: float = 0.0
    ) -> "DelaySignal":
        """h(t) = base + amplitude * sin(omega t + phase)."""
        base, amplitude, omega, phase = map(float, (base, amplitude, omega, phase))
        h_min = base - abs(amplitude)
        if h_min < 0:
            raise SystemFormatError(
                f"sinusoid delay dips below zero (base {base!r}, amplitude {amplitude!r})"
            )
        return cls(
            lambda t: base + amplitude * np.sin(omega * t + phase),
            h_min,
            base + abs(amplitude),
            abs(amplitude * omega),
            f"h={base:g}{amplitude:+g}*sin({omega:g}t{phase:+g})",
        )

    @classmethod
    def table(cls, times, values) -> "DelaySignal":
        """Piecewise-linear interpolation through (times, values), clamped outside."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or len(times) < 2:
            raise SystemFormatError("delay table needs matching 1-d times and values, length >= 2")
        if np.any(np.diff(times) <= 0):
            raise SystemFormatError("delay table times must be strictly increasing")
        if np.any(values < 0):
            raise SystemFormatError("delay table values must be nonnegative")
        rates = np.diff(values) / np.diff(times)
        return cls(
            lambda t: np.interp(t, times, values),
            float(values.min()),
            float(values.max()),
            float(np.abs(rates).max()),
            f"table[{len(times)} pts]",
        )
