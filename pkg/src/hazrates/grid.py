"""Uniform-grid representation of functions of time.

Every continuous-time curve in this package (hazards, rates, cumulative
hazards, survival curves) is stored as its values on the uniform grid
``{0, step, 2*step, ...}`` and interpreted as piecewise linear between
nodes.  Quadrature is trapezoidal throughout, which integrates that
interpretation exactly, so the grid convention and the quadrature rule
never disagree with each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["GridFunction", "cumulative", "survival_from_cumulative"]

# Tolerance for deciding whether a time coincides with a grid node.
NODE_TOL = 1e-9


def n_intervals(t_max: float, step: float) -> int:
    """Number of whole grid steps that fit in [0, t_max]."""
    return int(np.floor(t_max / step + NODE_TOL))


@dataclass(frozen=True)
class GridFunction:
    """A real function of time sampled on a uniform grid.

    The function is defined on [0, t_max] with nodes at multiples of
    ``step``; values between nodes are linearly interpolated and
    evaluation past the last node (possible when t_max is not an exact
    multiple of step) clamps to the final value.  Instances are
    immutable: the value array is copied and marked read-only.
    """

    t_max: float
    step: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if not (np.isfinite(self.step) and self.step > 0):
            raise ValueError(f"step must be positive and finite, got {self.step!r}")
        if not (np.isfinite(self.t_max) and self.t_max >= 0):
            raise ValueError(f"t_max must be nonnegative and finite, got {self.t_max!r}")
        vals = np.array(self.values, dtype=float, copy=True)
        expected = n_intervals(self.t_max, self.step) + 1
        if vals.ndim != 1 or vals.size != expected:
            raise ValueError(
                f"values must be 1-d with {expected} entries for "
                f"t_max={self.t_max}, step={self.step}; got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must all be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, t_max: float, step: float, value: float) -> "GridFunction":
        """Constant function on [0, t_max]."""
        n = n_intervals(t_max, step)
        return cls(t_max, step, np.full(n + 1, float(value)))

    @classmethod
    def from_callable(
        cls, fn: Callable[[float], float], t_max: float, step: float
    ) -> "GridFunction":
        """Sample a scalar callable at the grid nodes."""
        n = n_intervals(t_max, step)
        times = np.arange(n + 1) * step
        return cls(t_max, step, np.array([fn(t) for t in times], dtype=float))

    def with_values(self, values: np.ndarray) -> "GridFunction":
        """New GridFunction on the same grid with different values."""
        return GridFunction(self.t_max, self.step, values)

    # -- evaluation ------------------------------------------------------------

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.step

    @property
    def n_nodes(self) -> int:
        return self.values.size

    def __call__(self, t):
        """Evaluate at scalar or array t by linear interpolation."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < -NODE_TOL) or np.any(t_arr > self.t_max + NODE_TOL):
            raise ValueError(
                f"evaluation outside [0, {self.t_max}]: got range "
                f"[{t_arr.min()}, {t_arr.max()}]"
            )
        last = (self.values.size - 1) * self.step
        clipped = np.clip(t_arr, 0.0, last)
        out = np.interp(clipped, self.times, self.values)
        if t_arr.ndim == 0:
            return float(out)
        return out

    def node_index(self, t: float) -> int:
        """Index of the grid node at time t; t must lie on a node."""
        idx = int(round(t / self.step))
        if idx < 0 or idx >= self.values.size or abs(idx * self.step - t) > NODE_TOL:
            raise ValueError(f"t={t!r} is not a grid node (step={self.step})")
        return idx

    def same_grid(self, other: "GridFunction") -> bool:
        return (
            abs(self.step - other.step) <= NODE_TOL
            and self.values.size == other.values.size
        )

    # -- pointwise arithmetic ---------------------------------------------------

    def _check_compatible(self, other: "GridFunction") -> None:
        if not self.same_grid(other):
            raise ValueError(
                f"grid mismatch: ({self.t_max}, {self.step}, {self.n_nodes}) vs "
                f"({other.t_max}, {other.step}, {other.n_nodes})"
            )

    def __add__(self, other: "GridFunction") -> "GridFunction":
        self._check_compatible(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        self._check_compatible(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: float) -> "GridFunction":
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__


def cumulative(f: GridFunction) -> GridFunction:
    """Trapezoidal cumulative integral of a nonnegative grid function.

    Exact for the piecewise-linear interpretation of ``f``.  The result
    starts at 0 and is nondecreasing.
    """
    if np.any(f.values < 0):
        raise ValueError("cumulative requires a nonnegative integrand")
    out = np.zeros_like(f.values)
    out[1:] = np.cumsum(0.5 * (f.values[1:] + f.values[:-1]) * f.step)
    return f.with_values(out)


def survival_from_cumulative(cum: GridFunction) -> GridFunction:
    """Map a cumulative hazard to the survival curve exp(-cum).

    Requires cum(0) = 0 and a nondecreasing input (up to roundoff).
    """
    if abs(cum.values[0]) > 1e-12:
        raise ValueError(f"cumulative hazard must start at 0, got {cum.values[0]!r}")
    if np.any(np.diff(cum.values) < -1e-12):
        raise ValueError("cumulative hazard must be nondecreasing")
    return cum.with_values(np.exp(-cum.values))
