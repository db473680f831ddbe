"""Frailty-marginalized hazards and the survivor-selection effect.

An unobserved positive factor Z multiplies a subject's death hazard:
given Z = z and treatment path a(.), the hazard is z * h(t, a(t)).
Averaging over survivors turns this into the observable hazard

    lambda(t | path) = m(H(t)) * h(t, a(t)),
    m(s) = -phi'(s) / phi(s),
    H(t) = integral of h(s, a(s)) ds over [0, t],

where phi is the Laplace transform of Z.  The factor m(H) is the mean
frailty among survivors of the accumulated load H.  It depends on the
whole path through H, so the marginal hazard remembers treatment
history except when Z is degenerate (phi(s) = exp(-c s) gives m == c).
That selection effect, not any lagged biology, is what breaks the
Markov property; the two-period enumeration in ``collider_table``
isolates it in the smallest possible example.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .grid import GridFunction, cumulative

__all__ = [
    "FrailtySpec",
    "DegenerateFrailty",
    "GammaFrailty",
    "CustomFrailty",
    "TreatmentPath",
    "ConditionalHazardSpec",
    "marginal_hazard",
    "markov_violation_gap",
    "invert_rate_to_h",
    "ColliderScenario",
    "collider_table",
]

_UNDERFLOW = 1e-300


class FrailtySpec(ABC):
    """Distribution of the positive multiplicative frailty Z.

    A frailty is characterized by its Laplace transform
    phi(s) = E[exp(-Z s)] together with the derivative and the inverse,
    which is all the marginalization formulas need.
    """

    @abstractmethod
    def laplace(self, s):
        """phi(s) for scalar or array s >= 0."""

    @abstractmethod
    def laplace_derivative(self, s):
        """phi'(s), negative for nondegenerate loads."""

    @abstractmethod
    def laplace_inverse(self, p):
        """s with phi(s) = p, defined for p in (0, 1]."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n frailty values."""

    def conditional_mean(self, s):
        """Mean frailty among survivors of integrated load s: -phi'/phi.

        Subclasses with a closed form override this to avoid evaluating
        phi deep in its tail.
        """
        den = np.asarray(self.laplace(s), dtype=float)
        if np.any(den < _UNDERFLOW):
            bad = np.atleast_1d(np.asarray(s))[np.atleast_1d(den) < _UNDERFLOW]
            raise ValueError(
                f"laplace transform underflow at integrated load s={bad.flat[0]!r}"
            )
        out = -np.asarray(self.laplace_derivative(s), dtype=float) / den
        return float(out) if out.ndim == 0 else out

    def check_inverse_domain(self, p) -> None:
        p_arr = np.asarray(p, dtype=float)
        if np.any(p_arr <= 0) or np.any(p_arr > 1):
            raise ValueError("laplace_inverse argument must lie in (0, 1]")


@dataclass(frozen=True)
class DegenerateFrailty(FrailtySpec):
    """Point mass at ``value``; the only frailty without selection.

    With phi(s) = exp(-value * s) the survivor mean is constant, so the
    marginal hazard depends on the path only through the current level:
    the Markov case.
    """

    value: float = 1.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.value) and self.value > 0):
            raise ValueError(f"value must be positive, got {self.value!r}")

    def laplace(self, s):
        return np.exp(-self.value * np.asarray(s, dtype=float))

    def laplace_derivative(self, s):
        return -self.value * np.exp(-self.value * np.asarray(s, dtype=float))

    def laplace_inverse(self, p):
        self.check_inverse_domain(p)
        return -np.log(np.asarray(p, dtype=float)) / self.value

    def conditional_mean(self, s):
        s_arr = np.asarray(s, dtype=float)
        out = np.full(s_arr.shape, self.value)
        return float(self.value) if s_arr.ndim == 0 else out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.full(n, self.value)


@dataclass(frozen=True)
class GammaFrailty(FrailtySpec):
    """Gamma frailty with mean 1 and the given variance.

    phi(s) = (1 + variance * s)^(-1/variance); the survivor mean is
    1 / (1 + variance * s), strictly decreasing in the load.
    """

    variance: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ValueError(f"variance must be positive, got {self.variance!r}")

    def laplace(self, s):
        v = self.variance
        return (1.0 + v * np.asarray(s, dtype=float)) ** (-1.0 / v)

    def laplace_derivative(self, s):
        v = self.variance
        return -((1.0 + v * np.asarray(s, dtype=float)) ** (-1.0 / v - 1.0))

    def laplace_inverse(self, p):
        self.check_inverse_domain(p)
        v = self.variance
        out = (np.asarray(p, dtype=float) ** (-v) - 1.0) / v
        return float(out) if out.ndim == 0 else out

    def conditional_mean(self, s):
        out = 1.0 / (1.0 + self.variance * np.asarray(s, dtype=float))
        return float(out) if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        shape = 1.0 / self.variance
        return rng.gamma(shape, self.variance, size=n)


class CustomFrailty(FrailtySpec):
    """Frailty given by user-supplied Laplace-transform callables.

    The callables are spot-checked at construction: phi(0) = 1, phi
    decreasing (negative derivative consistent with finite differences),
    and phi(laplace_inverse(p)) = p on a probe grid.
    """

    def __init__(
        self,
        laplace: Callable,
        laplace_derivative: Callable,
        laplace_inverse: Callable,
        sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None,
    ) -> None:
        self._laplace = laplace
        self._derivative = laplace_derivative
        self._inverse = laplace_inverse
        self._sampler = sampler
        self._validate()

    def _validate(self) -> None:
        if abs(float(self._laplace(0.0)) - 1.0) > 1e-9:
            raise ValueError("laplace(0) must equal 1")
        probes = np.array([0.1, 0.5, 1.0, 2.0, 5.0])
        eps = 1e-6
        fd = (self._laplace(probes + eps) - self._laplace(probes - eps)) / (2 * eps)
        an = np.asarray(self._derivative(probes), dtype=float)
        if np.any(an >= 0):
            raise ValueError("laplace_derivative must be negative on s > 0")
        rel = np.abs(fd - an) / np.maximum(np.abs(an), 1e-12)
        if np.any(rel > 1e-4):
            raise ValueError(
                "laplace_derivative inconsistent with finite differences of laplace"
            )
        ps = np.array([0.9, 0.5, 0.2])
        back = np.asarray(self._laplace(np.asarray(self._inverse(ps))), dtype=float)
        if np.any(np.abs(back - ps) > 1e-6):
            raise ValueError("laplace_inverse is not an inverse of laplace")

    def laplace(self, s):
        return self._laplace(s)

    def laplace_derivative(self, s):
        return self._derivative(s)

    def laplace_inverse(self, p):
        self.check_inverse_domain(p)
        return self._inverse(p)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self._sampler is None:
            raise ValueError("this CustomFrailty was built without a sampler")
        return np.asarray(self._sampler(rng, n), dtype=float)


@dataclass(frozen=True)
class TreatmentPath:
    """Deterministic irreversible treatment history a(t) = 1{t >= u_init}.

    ``u_init=None`` is the never-treated path.
    """

    u_init: Optional[float]

    def __post_init__(self) -> None:
        if self.u_init is not None and not (
            np.isfinite(self.u_init) and self.u_init >= 0
        ):
            raise ValueError(f"u_init must be nonnegative, got {self.u_init!r}")

    @classmethod
    def never(cls) -> "TreatmentPath":
        return cls(u_init=None)

    @classmethod
    def always(cls) -> "TreatmentPath":
        return cls(u_init=0.0)

    @classmethod
    def initiate_at(cls, u: float) -> "TreatmentPath":
        return cls(u_init=float(u))

    def level(self, t) -> np.ndarray:
        t_arr = np.asarray(t, dtype=float)
        if self.u_init is None:
            out = np.zeros(t_arr.shape, dtype=int)
        else:
            out = (t_arr >= self.u_init).astype(int)
        return int(out) if t_arr.ndim == 0 else out


@dataclass(frozen=True)
class ConditionalHazardSpec:
    """Frailty-conditional death hazard h(t, a) per treatment level.

    Parameters
    ----------
    h0, h1:
        Hazard at level 0 and level 1 on a common grid.
    """

    h0: GridFunction
    h1: GridFunction

    def __post_init__(self) -> None:
        if not self.h0.same_grid(self.h1):
            raise ValueError("h0 and h1 must share the same grid")
        if np.any(self.h0.values < 0) or np.any(self.h1.values < 0):
            raise ValueError("conditional hazards must be nonnegative")

    @classmethod
    def from_callable(
        cls, fn: Callable[[float, int], float], t_max: float, step: float
    ) -> "ConditionalHazardSpec":
        return cls(
            h0=GridFunction.from_callable(lambda t: fn(t, 0), t_max, step),
            h1=GridFunction.from_callable(lambda t: fn(t, 1), t_max, step),
        )

    @property
    def t_max(self) -> float:
        return self.h0.t_max

    @property
    def step(self) -> float:
        return self.h0.step

    def load_along(self, path: TreatmentPath, t) -> np.ndarray:
        """Integrated load H(t) = integral of h(s, a(s)) along the path.

        Uses the exact decomposition H = H0(min(t, u)) + [H1(t) - H1(u)]+
        rather than sampling h(s, a(s)) on nodes, so a switch between
        nodes costs only the usual interpolation error.
        """
        c0 = cumulative(self.h0)
        c1 = cumulative(self.h1)
        t_arr = np.asarray(t, dtype=float)
        # initiation beyond the horizon behaves like never-treated here
        if path.u_init is None or path.u_init > self.t_max:
            u = self.t_max + 1.0
        else:
            u = path.u_init
        pre = np.asarray(c0(np.minimum(t_arr, u)), dtype=float)
        post = np.maximum(
            np.asarray(c1(t_arr), dtype=float) - float(c1(min(u, self.t_max))), 0.0
        ) * (t_arr >= u)
        out = pre + post
        return float(out) if t_arr.ndim == 0 else out

    def hazard_along(self, path: TreatmentPath, t) -> np.ndarray:
        """h(t, a(t)) along the path."""
        t_arr = np.asarray(t, dtype=float)
        lvl = path.level(t_arr)
        out = np.where(lvl == 1, self.h1(t_arr), self.h0(t_arr))
        return float(out) if t_arr.ndim == 0 else out


def marginal_hazard(
    spec: ConditionalHazardSpec, frailty: FrailtySpec, path: TreatmentPath
) -> GridFunction:
    """Observable hazard along a treatment path after averaging out Z.

    Returns m(H(t)) * h(t, a(t)) on the grid of ``spec``, where m is the
    survivor mean frailty and H the integrated load along the path.
    """
    times = spec.h0.times
    load = spec.load_along(path, times)
    try:
        mean = np.asarray(frailty.conditional_mean(load), dtype=float)
    except ValueError as exc:
        bad_idx = int(np.argmin(np.asarray(frailty.laplace(load)) >= _UNDERFLOW))
        raise ValueError(f"{exc} (t={times[bad_idx]:.6g})") from exc
    vals = mean * spec.hazard_along(path, times)
    return spec.h0.with_values(vals)


def markov_violation_gap(
    spec: ConditionalHazardSpec,
    frailty: FrailtySpec,
    t: float,
    u1: float,
    u2: float,
) -> float:
    """Marginal-hazard gap at t between two initiation times u1, u2 <= t.

    Both paths carry the same current level at t, so any gap is pure
    history dependence.  It vanishes identically for degenerate frailty
    and is positive for nondegenerate frailty whenever the two loads
    differ.
    """
    if not (0 <= u1 <= t and 0 <= u2 <= t):
        raise ValueError(f"need 0 <= u1, u2 <= t, got u1={u1!r}, u2={u2!r}, t={t!r}")
    if t > spec.t_max + 1e-9:
        raise ValueError(f"t={t!r} beyond the spec grid horizon {spec.t_max!r}")
    h_now = float(spec.h1(t))
    lam = []
    for u in (u1, u2):
        path = TreatmentPath.initiate_at(u)
        load = float(spec.load_along(path, t))
        lam.append(float(np.asarray(frailty.conditional_mean(load))) * h_now)
    return abs(lam[0] - lam[1])


RatePerLevel = Union[GridFunction, tuple[GridFunction, GridFunction]]


def invert_rate_to_h(
    target_rate: RatePerLevel, frailty: FrailtySpec, path: TreatmentPath
) -> GridFunction:
    """Conditional hazard along a path that reproduces a target rate.

    Solving phi(G(t)) = exp(-R(t)) with R the cumulative target rate
    gives the load G the conditional model must accumulate; its
    derivative

        h(t) = -r(t) * phi(G(t)) / phi'(G(t))

    is the conditional hazard along the path (computed in closed form,
    no finite differences).  Feeding the result back through
    ``marginal_hazard`` with the same frailty and path recovers the
    target rate up to quadrature error.

    ``target_rate`` is either a single GridFunction (rate identical at
    both levels along the path) or a pair (rate at level 0, rate at
    level 1) composed along the path.
    """
    if isinstance(target_rate, GridFunction):
        r0, r1 = target_rate, target_rate
    else:
        r0, r1 = target_rate
        if not r0.same_grid(r1):
            raise ValueError("per-level rates must share the same grid")
    times = r0.times
    lvl = path.level(times)
    r_along = np.where(lvl == 1, r1.values, r0.values)
    if np.any(r_along < 0) or not np.all(np.isfinite(r_along)):
        raise ValueError("target rate must be nonnegative and finite")

    rate_gf = r0.with_values(r_along)
    R = cumulative(rate_gf).values
    surv = np.exp(-R)  # in (0, 1] by construction
    load = np.asarray(frailty.laplace_inverse(surv), dtype=float)
    if np.any(~np.isfinite(load)) or np.any(load < -1e-12):
        raise ValueError("laplace_inverse produced an invalid load")
    mean = np.asarray(frailty.conditional_mean(np.maximum(load, 0.0)), dtype=float)
    return rate_gf.with_values(r_along / mean)


@dataclass(frozen=True)
class ColliderScenario:
    """Two-period discrete model isolating the survivor-selection bias.

    Each subject has frailty Z from a finite distribution and may be
    treated in period 1 and/or 2; conditional on Z = z and current
    level a the death probability in a period is z * p1 * effect**a.
    ``a_policy = (q1, q2)`` gives the initiation probability per period
    (irreversible, independent of Z).  Construction fails if any
    frailty level would push a death probability outside [0, 1], rather
    than clamping it silently.
    """

    z_levels: tuple
    z_probs: tuple
    p1: float
    effect: float
    a_policy: tuple = (0.5, 0.5)

    def __post_init__(self) -> None:
        z = np.asarray(self.z_levels, dtype=float)
        pr = np.asarray(self.z_probs, dtype=float)
        if z.size == 0 or z.size != pr.size:
            raise ValueError("z_levels and z_probs must be nonempty and equal length")
        if np.any(z <= 0):
            raise ValueError("frailty levels must be positive")
        if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-9:
            raise ValueError("z_probs must be a probability vector")
        if not (0 < self.p1 <= 1):
            raise ValueError(f"p1 must lie in (0, 1], got {self.p1!r}")
        if not (np.isfinite(self.effect) and self.effect > 0):
            raise ValueError(f"effect must be positive, got {self.effect!r}")
        q = np.asarray(self.a_policy, dtype=float)
        if q.shape != (2,) or np.any(q < 0) or np.any(q > 1):
            raise ValueError("a_policy must be two probabilities")
        worst = z.max() * self.p1 * max(1.0, self.effect)
        if worst > 1.0 + 1e-12:
            raise ValueError(
                f"death probability {worst!r} exceeds 1; refusing to clamp"
            )

    def death_prob(self, z, a: int):
        return np.asarray(z, dtype=float) * self.p1 * self.effect**a


def collider_table(scenario: ColliderScenario) -> dict[tuple[int, int], float]:
    """Exact P(N2 = 1 | N1 = 0, A1 = a1, A2 = a2) for all level pairs.

    Enumeration over the frailty levels; no sampling.  Conditioning on
    surviving period 1 tilts the frailty distribution by the survival
    probability 1 - p(z, a1), which is how A1 influences period 2
    without any direct effect.  The treatment policy cancels from the
    conditional, so the table covers (1, 0) as well even though the
    irreversible policy gives that history probability zero.
    """
    z = np.asarray(scenario.z_levels, dtype=float)
    pr = np.asarray(scenario.z_probs, dtype=float)
    out: dict[tuple[int, int], float] = {}
    for a1 in (0, 1):
        surv1 = 1.0 - scenario.death_prob(z, a1)
        den = float(np.sum(pr * surv1))
        if den <= 0:
            raise ValueError(f"no survivors of period 1 under a1={a1}")
        for a2 in (0, 1):
            num = float(np.sum(pr * surv1 * scenario.death_prob(z, a2)))
            out[(a1, a2)] = num / den
    return out
