"""Estimators over counting-process rows.

Every estimator here shares one risk-set convention: a row (start,
stop] with level a is at risk for a level-a event on the half-open
interval, so Y_a(t) counts rows with start < t <= stop.  Events sit at
row stops, and the level "at" an event time is the level recorded on
the row where the event occurs.  Risk sets are evaluated by binary
search over the sorted start and stop arrays, which keeps every
estimator O(n log n) in the number of rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .model import CountingRow
from .numerics import ConvergenceError

__all__ = [
    "StepFunction",
    "CoxFit",
    "AalenAdditiveFit",
    "nelson_aalen_by_treatment",
    "extended_km",
    "cox_fit",
    "aalen_additive",
    "log_surv_ratio",
]

_MAX_NEWTON = 25
_SCORE_TOL = 1e-9
_DIVERGENCE_BOUND = 30.0


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function given by jump times and post-jump values."""

    jump_times: np.ndarray
    values: np.ndarray
    initial: float = 0.0

    def __post_init__(self) -> None:
        jt = np.asarray(self.jump_times, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if jt.ndim != 1 or vals.shape != jt.shape:
            raise ValueError("jump_times and values must be 1-d arrays of equal length")
        if jt.size and np.any(np.diff(jt) <= 0):
            raise ValueError("jump_times must be strictly increasing")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", vals)
        jt.flags.writeable = False
        vals.flags.writeable = False

    def __call__(self, t):
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right")
        padded = np.concatenate([[self.initial], self.values])
        out = padded[idx]
        return float(out) if np.asarray(t).ndim == 0 else out

    @property
    def increments(self) -> np.ndarray:
        """Jump sizes, aligned with jump_times."""
        return np.diff(np.concatenate([[self.initial], self.values]))


@dataclass(frozen=True)
class CoxFit:
    """Fitted partial-likelihood model.

    Scalars for the current-level model; pairs (level, duration) for
    the duration-augmented model.
    """

    beta_hat: Union[float, tuple[float, float]]
    model_se: Union[float, tuple[float, float]]
    robust_se: Union[float, tuple[float, float]]
    iterations: int
    loglik: float


@dataclass(frozen=True)
class AalenAdditiveFit:
    """Additive-rates increments: baseline B0 and treatment contrast B1.

    ``singular_times`` lists event times where one arm had an empty risk
    set, making the least-squares design singular there; the estimable
    component still receives its increment (the same indicator
    convention the Nelson-Aalen estimator uses for empty risk sets).
    """

    b0: StepFunction
    b1: StepFunction
    singular_times: np.ndarray

    def __iter__(self):
        return iter((self.b0, self.b1))


def _columns(rows: Sequence[CountingRow]) -> dict[str, np.ndarray]:
    return {
        "id": np.array([r.id for r in rows]),
        "start": np.array([r.start for r in rows], dtype=float),
        "stop": np.array([r.stop for r in rows], dtype=float),
        "treat": np.array([r.treat for r in rows], dtype=int),
        "event": np.array([r.event for r in rows], dtype=bool),
    }


def _risk_counts(starts_sorted: np.ndarray, stops_sorted: np.ndarray, times: np.ndarray) -> np.ndarray:
    """#{rows with start < t <= stop} for each t, via two binary searches."""
    entered = np.searchsorted(starts_sorted, times, side="left")
    exited = np.searchsorted(stops_sorted, times, side="left")
    return entered - exited


def _event_table(col: dict[str, np.ndarray], level: int) -> tuple[np.ndarray, np.ndarray]:
    """Unique event times at a level and their multiplicities."""
    mask = col["event"] & (col["treat"] == level)
    return np.unique(col["stop"][mask], return_counts=True)


def nelson_aalen_by_treatment(rows: Sequence[CountingRow]) -> dict[int, StepFunction]:
    """Cumulative rate estimator per current treatment level.

    Jumps dN_a(t)/Y_a(t) at each level-a event time; times with an
    empty risk set contribute nothing.  Empty strata give a flat zero.
    """
    col = _columns(rows)
    out: dict[int, StepFunction] = {}
    for level in (0, 1):
        in_level = col["treat"] == level
        starts = np.sort(col["start"][in_level])
        stops = np.sort(col["stop"][in_level])
        times, d = _event_table(col, level)
        if times.size == 0:
            out[level] = StepFunction(np.empty(0), np.empty(0), 0.0)
            continue
        y = _risk_counts(starts, stops, times)
        keep = y > 0
        jumps = d[keep] / y[keep]
        out[level] = StepFunction(times[keep], np.cumsum(jumps), 0.0)
    return out


def extended_km(rows: Sequence[CountingRow]) -> dict[int, StepFunction]:
    """Product-limit survival per current treatment level.

    Multiplies (1 - dN_a/Y_a) over level-a event times, with tied
    events aggregated before the factor.  An empty stratum stays at 1.
    """
    col = _columns(rows)
    out: dict[int, StepFunction] = {}
    for level in (0, 1):
        in_level = col["treat"] == level
        starts = np.sort(col["start"][in_level])
        stops = np.sort(col["stop"][in_level])
        times, d = _event_table(col, level)
        if times.size == 0:
            out[level] = StepFunction(np.empty(0), np.empty(0), 1.0)
            continue
        y = _risk_counts(starts, stops, times)
        keep = y > 0
        factors = 1.0 - d[keep] / y[keep]
        out[level] = StepFunction(times[keep], np.cumprod(factors), 1.0)
    return out


def _initiation_by_subject(col: dict[str, np.ndarray]) -> np.ndarray:
    """Per-row initiation time: the subject's earliest treated-row start.

    Untreated rows of never-treated subjects get +inf (never used: the
    duration covariate is zero off treatment).
    """
    ids, codes = np.unique(col["id"], return_inverse=True)
    u_by_subject = np.full(ids.size, np.inf)
    treated = col["treat"] == 1
    np.minimum.at(u_by_subject, codes[treated], col["start"][treated])
    return u_by_subject[codes]


def _prepare_events(col: dict[str, np.ndarray]):
    """Sorted per-event arrays plus the unique-time index of each event."""
    ev = col["event"]
    order = np.argsort(col["stop"][ev], kind="stable")
    ev_time = col["stop"][ev][order]
    ev_treat = col["treat"][ev][order]
    ev_u = _initiation_by_subject(col)[ev][order]
    uniq, kidx, d = np.unique(ev_time, return_inverse=True, return_counts=True)
    return ev_time, ev_treat, ev_u, uniq, kidx, d


def _padded_cumsum(x: np.ndarray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(x)])


def _range_sums(prefix: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return prefix[hi] - prefix[lo]


def _group_by_id(ids: np.ndarray, contributions: np.ndarray) -> np.ndarray:
    """Sum per-row score contributions within subject id."""
    _, codes = np.unique(ids, return_inverse=True)
    if contributions.ndim == 1:
        return np.bincount(codes, weights=contributions)
    return np.stack(
        [np.bincount(codes, weights=contributions[:, j]) for j in range(contributions.shape[1])],
        axis=1,
    )


def _fit_current_level(col: dict[str, np.ndarray]) -> CoxFit:
    ev_time, ev_treat, ev_u, uniq, kidx, d = _prepare_events(col)
    d1 = np.bincount(kidx, weights=ev_treat.astype(float), minlength=uniq.size)
    if ev_treat.sum() == 0 or ev_treat.sum() == ev_treat.size:
        raise ConvergenceError("all events in one stratum: monotone partial likelihood")

    y = {}
    for level in (0, 1):
        in_level = col["treat"] == level
        y[level] = _risk_counts(
            np.sort(col["start"][in_level]), np.sort(col["stop"][in_level]), uniq
        ).astype(float)

    beta = 0.0
    iterations = 0
    for _ in range(_MAX_NEWTON):
        theta = np.exp(beta)
        s0 = y[0] + theta * y[1]
        xbar = theta * y[1] / s0
        score = float(d1.sum() - np.sum(d * xbar))
        info = float(np.sum(d * xbar * (1.0 - xbar)))
        if abs(score) < _SCORE_TOL:
            break
        if info <= 0 or not np.isfinite(score):
            raise ConvergenceError("singular information in partial-likelihood fit")
        beta += score / info
        iterations += 1
        if abs(beta) > _DIVERGENCE_BOUND:
            raise ConvergenceError("divergent coefficient: monotone partial likelihood")
    else:
        raise ConvergenceError(f"no convergence in {_MAX_NEWTON} Newton steps")

    theta = np.exp(beta)
    s0 = y[0] + theta * y[1]
    xbar = theta * y[1] / s0
    info = float(np.sum(d * xbar * (1.0 - xbar)))
    loglik = float(beta * d1.sum() - np.sum(d * np.log(s0)))

    # Robust part: per-row score residuals, summed within subject.
    # Expected-part sums over event times in (start, stop] come from
    # prefix sums over the unique-time axis.
    p_ds0 = _padded_cumsum(d / s0)
    p_xbar = _padded_cumsum(d * xbar / s0)
    lo = np.searchsorted(uniq, col["start"], side="right")
    hi = np.searchsorted(uniq, col["stop"], side="right")
    a = col["treat"].astype(float)
    expected = np.exp(beta * a) * (
        a * _range_sums(p_ds0, lo, hi) - _range_sums(p_xbar, lo, hi)
    )
    observed = np.zeros(a.size)
    ev_rows = np.nonzero(col["event"])[0]
    k_of_row = np.searchsorted(uniq, col["stop"][ev_rows])
    observed[ev_rows] = a[ev_rows] - xbar[k_of_row]
    u_i = _group_by_id(col["id"], observed - expected)
    robust_var = float(np.sum(u_i**2)) / info**2
    return CoxFit(
        beta_hat=float(beta),
        model_se=float(np.sqrt(1.0 / info)),
        robust_se=float(np.sqrt(robust_var)),
        iterations=iterations,
        loglik=loglik,
    )


def _treated_prefix_tables(col: dict[str, np.ndarray], gamma: float):
    """Prefix sums of e^{-gamma*u} * {1, u, u^2} over treated rows.

    Kept in both start order and stop order so risk-set sums at a time t
    become entered-minus-exited differences of the two tables.
    """
    treated = col["treat"] == 1
    u = _initiation_by_subject(col)[treated]
    starts = col["start"][treated]
    stops = col["stop"][treated]
    w = np.exp(-gamma * u)
    tables = {}
    for key, times in (("start", starts), ("stop", stops)):
        order = np.argsort(times, kind="stable")
        tables[key] = {
            "times": times[order],
            "t0": _padded_cumsum(w[order]),
            "t1": _padded_cumsum((u * w)[order]),
            "t2": _padded_cumsum((u * u * w)[order]),
        }
    return tables


def _treated_risk_sums(tables, times: np.ndarray):
    ent = np.searchsorted(tables["start"]["times"], times, side="left")
    ex = np.searchsorted(tables["stop"]["times"], times, side="left")
    t0 = tables["start"]["t0"][ent] - tables["stop"]["t0"][ex]
    t1 = tables["start"]["t1"][ent] - tables["stop"]["t1"][ex]
    t2 = tables["start"]["t2"][ent] - tables["stop"]["t2"][ex]
    return t0, t1, t2


def _fit_duration(col: dict[str, np.ndarray]) -> CoxFit:
    """Two-covariate model: current level and time since initiation.

    At an event time t a treated row contributes weight
    e^{beta + gamma*(t - u)} = e^{beta + gamma*t} e^{-gamma*u}, so the
    risk-set sums reduce to prefix sums of e^{-gamma*u} moments.
    """
    ev_time, ev_treat, ev_u, uniq, kidx, d = _prepare_events(col)
    if ev_treat.sum() == 0 or ev_treat.sum() == ev_treat.size:
        raise ConvergenceError("all events in one stratum: monotone partial likelihood")
    in0 = col["treat"] == 0
    y0 = _risk_counts(
        np.sort(col["start"][in0]), np.sort(col["stop"][in0]), uniq
    ).astype(float)
    ev_x = np.stack([ev_treat.astype(float), np.where(ev_treat == 1, ev_time - ev_u, 0.0)], axis=1)
    sum_ev_x = ev_x.sum(axis=0)

    theta = np.zeros(2)
    iterations = 0
    for _ in range(_MAX_NEWTON):
        beta, gamma = theta
        tables = _treated_prefix_tables(col, gamma)
        t0, t1, t2 = _treated_risk_sums(tables, uniq)
        w = np.exp(beta + gamma * uniq)
        s0 = y0 + w * t0
        # risk-set moments of (1, t - u) under the exponential weight
        m1a = w * t0
        m1b = w * (uniq * t0 - t1)
        m2bb = w * (uniq**2 * t0 - 2 * uniq * t1 + t2)
        xbar = np.stack([m1a / s0, m1b / s0], axis=1)
        score = sum_ev_x - np.array([np.sum(d * xbar[:, 0]), np.sum(d * xbar[:, 1])])
        i00 = np.sum(d * (m1a / s0 - xbar[:, 0] ** 2))
        i01 = np.sum(d * (m1b / s0 - xbar[:, 0] * xbar[:, 1]))
        i11 = np.sum(d * (m2bb / s0 - xbar[:, 1] ** 2))
        info = np.array([[i00, i01], [i01, i11]])
        if np.max(np.abs(score)) < _SCORE_TOL:
            break
        try:
            delta = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as err:
            raise ConvergenceError("singular information in partial-likelihood fit") from err
        theta = theta + delta
        iterations += 1
        if np.max(np.abs(theta)) > _DIVERGENCE_BOUND:
            raise ConvergenceError("divergent coefficient: monotone partial likelihood")
    else:
        raise ConvergenceError(f"no convergence in {_MAX_NEWTON} Newton steps")

    beta, gamma = theta
    loglik = float(np.sum(ev_x @ theta) - np.sum(d * np.log(s0)))
    cov_model = np.linalg.inv(info)

    # Robust part.  Prefix sums over unique event times; treated rows
    # need the e^{gamma*t_k} weighted variants.
    egt = np.exp(gamma * uniq)
    p = {
        "q0": _padded_cumsum(d * egt / s0),
        "qt": _padded_cumsum(d * uniq * egt / s0),
        "qx1": _padded_cumsum(d * egt * xbar[:, 0] / s0),
        "qx2": _padded_cumsum(d * egt * xbar[:, 1] / s0),
        "px1": _padded_cumsum(d * xbar[:, 0] / s0),
        "px2": _padded_cumsum(d * xbar[:, 1] / s0),
    }
    lo = np.searchsorted(uniq, col["start"], side="right")
    hi = np.searchsorted(uniq, col["stop"], side="right")
    a = col["treat"].astype(float)
    u_row = _initiation_by_subject(col)
    expected = np.zeros((a.size, 2))
    tr = col["treat"] == 1
    w_tr = np.exp(beta - gamma * u_row[tr])
    expected[tr, 0] = w_tr * (
        _range_sums(p["q0"], lo[tr], hi[tr]) - _range_sums(p["qx1"], lo[tr], hi[tr])
    )
    expected[tr, 1] = w_tr * (
        _range_sums(p["qt"], lo[tr], hi[tr])
        - _range_sums(p["qx2"], lo[tr], hi[tr])
        - u_row[tr] * _range_sums(p["q0"], lo[tr], hi[tr])
    )
    un = ~tr
    expected[un, 0] = -_range_sums(p["px1"], lo[un], hi[un])
    expected[un, 1] = -_range_sums(p["px2"], lo[un], hi[un])
    observed = np.zeros((a.size, 2))
    ev_rows = np.nonzero(col["event"])[0]
    k_of_row = np.searchsorted(uniq, col["stop"][ev_rows])
    x_ev = np.stack(
        [a[ev_rows], np.where(tr[ev_rows], col["stop"][ev_rows] - u_row[ev_rows], 0.0)],
        axis=1,
    )
    observed[ev_rows] = x_ev - xbar[k_of_row]
    u_i = _group_by_id(col["id"], observed - expected)
    meat = u_i.T @ u_i
    cov_robust = cov_model @ meat @ cov_model
    return CoxFit(
        beta_hat=(float(beta), float(gamma)),
        model_se=(float(np.sqrt(cov_model[0, 0])), float(np.sqrt(cov_model[1, 1]))),
        robust_se=(float(np.sqrt(cov_robust[0, 0])), float(np.sqrt(cov_robust[1, 1]))),
        iterations=iterations,
        loglik=loglik,
    )


def cox_fit(rows: Sequence[CountingRow], covariates: str = "current") -> CoxFit:
    """Maximize the Breslow partial likelihood by Newton-Raphson.

    covariates="current" fits the single binary current-level
    coefficient; "duration" adds time since initiation, recomputed at
    each event time inside the risk set.  Both return model-based and
    subject-clustered sandwich standard errors.
    """
    if covariates not in ("current", "duration"):
        raise ValueError(f"unknown covariate set {covariates!r}")
    col = _columns(rows)
    if not np.any(col["event"]):
        raise ValueError("need at least one event to fit")
    if covariates == "current":
        return _fit_current_level(col)
    return _fit_duration(col)


def cox_loglik_parts(rows: Sequence[CountingRow], beta: float) -> tuple[float, float, float]:
    """(loglik, score, information) of the current-level model at beta.

    Exposed so the analytic gradient can be checked against finite
    differences of the log partial likelihood.
    """
    col = _columns(rows)
    if not np.any(col["event"]):
        raise ValueError("need at least one event")
    ev_time, ev_treat, ev_u, uniq, kidx, d = _prepare_events(col)
    d1 = np.bincount(kidx, weights=ev_treat.astype(float), minlength=uniq.size)
    y = {}
    for level in (0, 1):
        in_level = col["treat"] == level
        y[level] = _risk_counts(
            np.sort(col["start"][in_level]), np.sort(col["stop"][in_level]), uniq
        ).astype(float)
    theta = np.exp(beta)
    s0 = y[0] + theta * y[1]
    xbar = theta * y[1] / s0
    loglik = float(beta * d1.sum() - np.sum(d * np.log(s0)))
    score = float(d1.sum() - np.sum(d * xbar))
    info = float(np.sum(d * xbar * (1.0 - xbar)))
    return loglik, score, info


def aalen_additive(rows: Sequence[CountingRow]) -> AalenAdditiveFit:
    """Least-squares additive increments for the two-level design.

    With a binary level the normal equations solve in closed form:
    dB0 = dN0/Y0 and dB1 = dN1/Y1 - dN0/Y0, the same float divisions
    the treatment-specific cumulative rate estimator performs, so the
    increments match it exactly, not merely to rounding.
    """
    col = _columns(rows)
    times0, d0 = _event_table(col, 0)
    times1, d1 = _event_table(col, 1)
    times = np.union1d(times0, times1)
    n0 = np.zeros(times.size)
    n0[np.searchsorted(times, times0)] = d0
    n1 = np.zeros(times.size)
    n1[np.searchsorted(times, times1)] = d1
    y = {}
    for level in (0, 1):
        in_level = col["treat"] == level
        y[level] = _risk_counts(
            np.sort(col["start"][in_level]), np.sort(col["stop"][in_level]), times
        ).astype(float)
    jump0 = np.where(n0 > 0, n0 / np.where(y[0] > 0, y[0], 1.0), 0.0)
    jump1 = np.where(n1 > 0, n1 / np.where(y[1] > 0, y[1], 1.0), 0.0)
    singular = times[(y[0] == 0) | (y[1] == 0)]
    b0 = StepFunction(times, np.cumsum(jump0), 0.0)
    b1 = StepFunction(times, np.cumsum(jump1 - jump0), 0.0)
    return AalenAdditiveFit(b0=b0, b1=b1, singular_times=singular)


def log_surv_ratio(s1: StepFunction, s0: StepFunction, t: float) -> float:
    """log s1(t) / log s0(t), defined only when both lie strictly in (0, 1)."""
    v1 = float(s1(t))
    v0 = float(s0(t))
    for name, v in (("s1", v1), ("s0", v0)):
        if not 0.0 < v < 1.0:
            raise ValueError(f"{name}({t}) = {v}: log-survival ratio needs values in (0, 1)")
    return float(np.log(v1) / np.log(v0))
