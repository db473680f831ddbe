"""Potential-outcome survival under fixed treatment regimes, and the
rate-based transform it is contrasted with.

For a deterministic regime the death hazard along the enforced path is
known exactly, so potential survival is a plain exponentiated
cumulative with no estimation involved.  rate_based_survival applies
the same transform to a rate function; the difference between the two
is the quantity of interest, since the transform is only valid for
hazards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import GridFunction, cumulative, survival_from_cumulative
from .model import IllnessDeathModel
from .numerics import trapz

__all__ = [
    "Regime",
    "potential_survival",
    "rate_based_survival",
    "causal_hazard_ratio",
    "duration_model_ratio",
]

_RATIO_FLOOR = 1e-12


@dataclass(frozen=True)
class Regime:
    """Deterministic treatment regime: never, always, or initiate at u."""

    kind: str
    u: Optional[float] = None

    _KINDS = ("never", "always", "initiate_at")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"kind must be one of {self._KINDS}, got {self.kind!r}")
        if self.kind == "initiate_at":
            if self.u is None or not (np.isfinite(self.u) and self.u >= 0):
                raise ValueError(f"initiate_at needs a finite u >= 0, got {self.u!r}")
        elif self.u is not None:
            raise ValueError(f"regime {self.kind!r} takes no initiation time")

    @classmethod
    def never(cls) -> "Regime":
        return cls("never")

    @classmethod
    def always(cls) -> "Regime":
        return cls("always")

    @classmethod
    def initiate_at(cls, u: float) -> "Regime":
        return cls("initiate_at", float(u))


def potential_survival(model: IllnessDeathModel, regime: Regime) -> GridFunction:
    """Survival of the death time when treatment follows the regime.

    never: exp(-Lam02(t)); always: exp(-K12(0, t)); initiate at u:
    exp(-Lam02(min(t, u)) - K12(u, max(t, u))).  No occupation
    probabilities enter: the regime fixes the path, so this is the
    correct interventional curve the rate-based transform is judged
    against.
    """
    times = model.times
    if regime.kind == "never":
        return survival_from_cumulative(cumulative(model.lambda02))
    if regime.kind == "always":
        total = np.asarray(model.lambda12.cumulative(0.0, times), dtype=float)
    else:
        u = float(regime.u)
        if u > model.t_max + 1e-9:
            raise ValueError(f"initiation time {u} beyond grid horizon {model.t_max}")
        cum02 = cumulative(model.lambda02)
        pre = np.minimum(cum02.values, cum02(u))
        post = np.asarray(model.lambda12.cumulative(u, np.maximum(times, u)), dtype=float)
        total = pre + post
    return GridFunction(model.t_max, model.step, np.exp(-total))


def rate_based_survival(rate: GridFunction) -> GridFunction:
    """exp of minus the cumulative rate.

    This is the survival-scale transform that is exact for a hazard but
    generally wrong for a rate, because a rate averages over survivors
    with mixed treatment histories.
    """
    if np.any(rate.values < 0):
        raise ValueError("rate must be nonnegative")
    return survival_from_cumulative(cumulative(rate))


def causal_hazard_ratio(model: IllnessDeathModel) -> GridFunction:
    """Pointwise hazard ratio between treated-from-0 and never-treated.

    lambda12(t | 0) / lambda02(t) on the grid.  This is the causally
    meaningful ratio a proportional-rates fit is mistaken for.
    """
    times = model.times
    denom = model.lambda02.values
    bad = np.nonzero(denom < _RATIO_FLOOR)[0]
    if bad.size:
        listed = ", ".join(f"{times[i]:g}" for i in bad[:5])
        raise ValueError(f"untreated hazard vanishes near t = {listed}; ratio undefined")
    num = np.asarray(model.lambda12.value(times, 0.0), dtype=float)
    return GridFunction(model.t_max, model.step, num / denom)


def duration_model_ratio(lambda0: GridFunction, beta: float, gamma: float, t: float) -> float:
    """Log-survival ratio at t implied by the duration-augmented model.

    Under a rate model with coefficients beta for current level and
    gamma for time on treatment, the always-vs-never log-survival ratio
    is e^beta * int_0^t lambda0(u) e^{gamma u} du / int_0^t lambda0(u) du,
    a time-dependent quantity unless gamma = 0.
    """
    if not (t > 0):
        raise ValueError(f"t must be positive, got {t!r}")
    weighted = lambda0.with_values(lambda0.values * np.exp(gamma * lambda0.times))
    denom = trapz(lambda0, 0.0, t)
    if denom <= 0:
        raise ValueError(f"cumulative baseline vanishes on [0, {t}]")
    return float(np.exp(beta) * trapz(weighted, 0.0, t) / denom)
