"""Fixed-point construction of a proportional-rates illness-death model.

Given the initiation hazard, the post-initiation kernel, and a target
log rate ratio beta, the builder looks for an untreated death hazard
lambda02 such that the model's treated rate satisfies

    r12(t) = exp(beta) * lambda02(t)   for all t.

Since r12 itself depends on lambda02 through the initiation-time
weights, this is a fixed-point problem.  Starting from an initial
guess, each sweep computes r12 for the current lambda02 and replaces
lambda02 by exp(-beta) * r12 (optionally blended with the previous
iterate).  There is no convergence proof for this scheme, so the full
deviation trace is part of the result and callers are expected to
inspect it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridFunction
from .kernels import HazardKernel
from .model import IllnessDeathModel
from .numerics import SolverConfig
from .rates import rate_treated, rate_untreated

__all__ = ["IterationRecord", "BuildReport", "build", "rate_ratio", "DEFAULT_BUILD"]

#: Default configuration: sup-norm tolerance on the rate-ratio deviation.
DEFAULT_BUILD = SolverConfig(tol=1e-6, max_iter=50, damping=1.0)

# lambda02 nodes below this level make the rate ratio ill-defined.
ZERO_DENOM = 1e-12


@dataclass(frozen=True)
class IterationRecord:
    """Snapshot of one fixed-point sweep.

    ``sup_dev`` is the sup over grid nodes in (0, t_max] of
    |r12/lambda02 - exp(beta)| evaluated at this iterate.
    """

    index: int
    sup_dev: float
    lambda02: GridFunction
    rate: GridFunction


@dataclass(frozen=True)
class BuildReport:
    """Result of the fixed-point construction."""

    lambda02: GridFunction
    converged: bool
    iterations: tuple[IterationRecord, ...]
    target_ratio: float

    @property
    def deviations(self) -> np.ndarray:
        return np.array([rec.sup_dev for rec in self.iterations])


def build(
    lambda01: GridFunction,
    lambda12: HazardKernel,
    beta: float,
    init_lambda02: GridFunction | None = None,
    config: SolverConfig = DEFAULT_BUILD,
) -> BuildReport:
    """Solve the proportional-rates fixed point for lambda02.

    Parameters
    ----------
    lambda01:
        Treatment initiation hazard on the model grid.
    lambda12:
        Post-initiation death hazard kernel.
    beta:
        Target log rate ratio; the constructed model has
        r12 = exp(beta) * lambda02.
    init_lambda02:
        Starting iterate; defaults to the constant 1 on the grid.
    config:
        Sup-norm tolerance on the rate-ratio deviation, iteration
        budget, and damping for the update
        lambda02 <- (1 - damping) * lambda02 + damping * exp(-beta) * r12.

    Non-convergence is reported through ``converged=False`` together
    with the full deviation trace rather than raised, so callers can
    distinguish a slow iteration from a diverging one.
    """
    if init_lambda02 is None:
        init_lambda02 = GridFunction.constant(lambda01.t_max, lambda01.step, 1.0)
    if not lambda01.same_grid(init_lambda02):
        raise ValueError("init_lambda02 must live on the lambda01 grid")
    if np.any(init_lambda02.values < 0):
        raise ValueError("init_lambda02 must be nonnegative")

    target = float(np.exp(beta))
    lam02 = init_lambda02
    records: list[IterationRecord] = []
    converged = False

    for index in range(config.max_iter + 1):
        model = IllnessDeathModel(lambda01, lam02, lambda12)
        r12 = rate_treated(model)
        dev = _sup_deviation(r12, lam02, target)
        records.append(
            IterationRecord(index=index, sup_dev=dev, lambda02=lam02, rate=r12)
        )
        if dev < config.tol:
            converged = True
            break
        if index == config.max_iter:
            break
        update = np.exp(-beta) * r12.values
        new_vals = (1.0 - config.damping) * lam02.values + config.damping * update
        if np.any(new_vals < 0):
            # r12 >= 0 makes this unreachable; guard against kernel bugs
            raise RuntimeError("fixed-point update produced a negative hazard")
        lam02 = lam02.with_values(new_vals)

    # the loop always breaks right after recording the final iterate
    return BuildReport(
        lambda02=records[-1].lambda02,
        converged=converged,
        iterations=tuple(records),
        target_ratio=target,
    )


def _sup_deviation(r12: GridFunction, lam02: GridFunction, target: float) -> float:
    """Sup over nodes in (0, t_max] of |r12/lambda02 - target|."""
    denom = lam02.values[1:]
    if np.any(denom < ZERO_DENOM):
        bad = lam02.times[1:][denom < ZERO_DENOM]
        raise ValueError(
            f"lambda02 vanishes at t={bad[:5].tolist()}{'...' if bad.size > 5 else ''}; "
            "rate ratio undefined"
        )
    return float(np.max(np.abs(r12.values[1:] / denom - target)))


def rate_ratio(model: IllnessDeathModel) -> GridFunction:
    """Pointwise treated/untreated rate ratio r12 / lambda02.

    Nodes where lambda02 falls below 1e-12 have no well-defined ratio;
    they are reported in the raised error rather than silently dropped.
    """
    r12 = rate_treated(model)
    r02 = rate_untreated(model)
    bad = r02.values < ZERO_DENOM
    if np.any(bad):
        times = model.times[bad]
        raise ValueError(
            f"rate ratio undefined where lambda02 < {ZERO_DENOM}: "
            f"t={times[:5].tolist()}{'...' if times.size > 5 else ''}"
        )
    return r12.with_values(r12.values / r02.values)
