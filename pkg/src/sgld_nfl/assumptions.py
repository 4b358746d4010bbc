"""Numerical checks of the posterior-sensitivity and order-gap assumptions.

The checks sample schedules and datasets, so a verdict of True means
"consistent with the assumption on this grid", nothing stronger.

Perturbation scales. A perturbation ``delta`` of the Gaussian-mean
posterior (flat prior, variance ``1/n``) can be read three ways:

``suff_stat``
    ``S -> S + delta``: the posterior mean moves by ``delta / n``.
``mean``
    the posterior mean moves by ``delta``.
``standardized``
    the posterior mean moves by ``delta`` posterior standard deviations
    (the unit-variance calculation).

The sensitivity check for large perturbations holds for the Gaussian
under the ``mean`` reading, and the small-perturbation check holds
under the ``standardized`` reading; every report carries all three curves.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence

import numpy as np

from .engine import make_stream
from .measures import split_index
from .models import FLAT, dataset_from_observations, gaussian_mean_model, posterior_exact
from .tvmetrics import tv_gaussian_exact, tv_moment_lower_bound

__all__ = [
    "AssumptionReport",
    "SCALES",
    "perturbation_shift",
    "check_assumption1",
    "check_assumption2",
    "check_assumption3",
]

Scale = Literal["suff_stat", "mean", "standardized"]
SCALES: tuple[Scale, ...] = ("suff_stat", "mean", "standardized")


@dataclass
class AssumptionReport:
    assumption_id: str
    n_grid: list[int]
    statistic_per_n: list[float]
    threshold: float
    verdict_per_n: list[bool]
    trend_summary: dict
    extra: dict[str, list[float]] = field(default_factory=dict)

    def __post_init__(self):
        if not len(self.n_grid) == len(self.statistic_per_n) == len(self.verdict_per_n):
            raise ValueError("report columns must have equal length")

    def write_csv(self, path) -> None:
        cols = list(self.extra)
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "statistic", "threshold", "verdict"] + cols)
            for i, n in enumerate(self.n_grid):
                w.writerow(
                    [n, repr(float(self.statistic_per_n[i])), repr(float(self.threshold)), int(self.verdict_per_n[i])]
                    + [repr(float(self.extra[c][i])) for c in cols]
                )

    def summary(self) -> str:
        lines = [f"[{self.assumption_id}] threshold={self.threshold:g}"]
        for n, stat, ok in zip(self.n_grid, self.statistic_per_n, self.verdict_per_n):
            lines.append(f"  n={n:<8d} statistic={stat:.6g}  {'ok' if ok else 'below'}")
        for key, value in self.trend_summary.items():
            lines.append(f"  {key}: {value}")
        return "\n".join(lines)


def _trend(values: Sequence[float]) -> dict:
    v = np.asarray(values, dtype=float)
    d = np.diff(v)
    if v.size < 2:
        direction = "n/a"
    elif np.all(d >= 0):
        direction = "nondecreasing"
    elif np.all(d <= 0):
        direction = "nonincreasing"
    else:
        direction = "mixed"
    return {"direction": direction, "first": float(v[0]) if v.size else math.nan, "last": float(v[-1]) if v.size else math.nan}


def perturbation_shift(delta: float, n: int, scale: Scale) -> float:
    """Shift in the sufficient statistic ``S`` realising ``delta`` on ``scale``."""
    if scale == "suff_stat":
        return delta
    if scale == "mean":
        return n * delta
    if scale == "standardized":
        return math.sqrt(n) * delta
    raise ValueError(f"unknown scale {scale!r}")


def _posterior_pair_tv(data, delta: float, scale: Scale, prior=FLAT) -> float:
    post = posterior_exact(data, prior)
    pert = posterior_exact(data, prior, shift=perturbation_shift(delta, data.n, scale))
    return tv_gaussian_exact(post, pert).value


def _datasets(theta0, n, trials, master_seed, tag):
    model = gaussian_mean_model()
    for k in range(trials):
        rng = np.random.default_rng(make_stream(master_seed, tag, n, k))
        yield dataset_from_observations(model, rng.normal(theta0, 1.0, size=n), theta0, master_seed)


def check_assumption1(
    n_grid: Sequence[int],
    c_schedule: Callable[[int], float] = math.log,
    trials: int = 5,
    gamma: float = 0.9,
    theta0: float = 0.0,
    master_seed: int = 0,
    scale: Scale = "mean",
) -> AssumptionReport:
    """Large perturbations ``delta_n = c_n / sqrt(n)`` should keep TV above ``gamma``.

    Statistic per ``n`` is the minimum exact TV over ``trials`` datasets on
    ``scale``; the other scales and the moment lower bound
    ``delta_n^2 / (4/n + delta_n^2)`` go into ``extra``.
    """
    stats, verdicts = [], []
    extra = {f"tv_{s}": [] for s in SCALES}
    extra["delta_n"] = []
    extra["moment_bound"] = []
    for n in n_grid:
        delta = c_schedule(n) / math.sqrt(n)
        per_scale = {s: math.inf for s in SCALES}
        for data in _datasets(theta0, n, trials, master_seed, 1):
            for s in SCALES:
                per_scale[s] = min(per_scale[s], _posterior_pair_tv(data, delta, s))
        sd = 1.0 / math.sqrt(n)
        bound = tv_moment_lower_bound(0.0, sd, delta, sd).value
        for s in SCALES:
            extra[f"tv_{s}"].append(per_scale[s])
        extra["delta_n"].append(delta)
        extra["moment_bound"].append(bound)
        stats.append(per_scale[scale])
        verdicts.append(delta > 0 and per_scale[scale] >= gamma)
    trend = _trend(stats)
    trend["scale"] = scale
    return AssumptionReport("A1", list(n_grid), stats, gamma, verdicts, trend, extra)


def check_assumption2(
    n_grid: Sequence[int],
    c_schedule: Callable[[int], float] = lambda n: 1.0 / math.log(n),
    trials: int = 5,
    gamma: float = 0.35,
    theta0: float = 0.0,
    master_seed: int = 0,
    scale: Scale = "standardized",
) -> AssumptionReport:
    """Small perturbations ``delta_n = c_n / sqrt(n)``: is ``TV / delta_n >= gamma``?

    ``delta_n = 0`` yields ratio 0 and is excluded from the verdicts (False).
    """
    stats, verdicts = [], []
    extra = {f"ratio_{s}": [] for s in SCALES}
    extra["delta_n"] = []
    for n in n_grid:
        delta = c_schedule(n) / math.sqrt(n)
        per_scale = {s: math.inf for s in SCALES}
        for data in _datasets(theta0, n, trials, master_seed, 2):
            for s in SCALES:
                ratio = _posterior_pair_tv(data, delta, s) / delta if delta > 0 else 0.0
                per_scale[s] = min(per_scale[s], ratio)
        for s in SCALES:
            extra[f"ratio_{s}"].append(per_scale[s])
        extra["delta_n"].append(delta)
        stats.append(per_scale[scale])
        verdicts.append(delta > 0 and per_scale[scale] >= gamma)
    trend = _trend(stats)
    trend["scale"] = scale
    return AssumptionReport("A2", list(n_grid), stats, gamma, verdicts, trend, extra)


def order_gaps(theta0: float, n: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Order gaps of ``trials`` independent sorted Gaussian datasets of size ``n``."""
    s = split_index(n)
    x = np.sort(rng.normal(theta0, 1.0, size=(trials, n)), axis=1)
    return np.abs(x[:, s - 1:].mean(axis=1) - x.mean(axis=1))


def check_assumption3(
    theta0: float,
    n_grid: Sequence[int],
    eta: float = 0.3,
    trials: int = 1000,
    master_seed: int = 0,
) -> AssumptionReport:
    """Estimate ``P[order_gap < eta]`` along the grid; it should fall toward 0.

    The statistic uses a constant threshold ``eta``. The threshold ``eta * n``
    is evaluated as well and stored in ``extra["prob_literal"]``.
    """
    probs, literal, mean_gap, verdicts = [], [], [], []
    for n in n_grid:
        rng = np.random.default_rng(make_stream(master_seed, 3, n))
        gaps = order_gaps(theta0, n, trials, rng)
        probs.append(float(np.mean(gaps < eta)))
        literal.append(float(np.mean(gaps < eta * n)))
        mean_gap.append(float(gaps.mean()))
    for i, p in enumerate(probs):
        verdicts.append(p <= probs[i - 1] if i else True)
    decreasing = all(verdicts)
    trend = _trend(probs)
    trend["nonincreasing"] = decreasing
    trend["final_probability"] = probs[-1] if probs else math.nan
    trend["literal_final_probability"] = literal[-1] if literal else math.nan
    return AssumptionReport(
        "A3", list(n_grid), probs, eta, verdicts, trend,
        {"prob_literal": literal, "mean_gap": mean_gap},
    )
