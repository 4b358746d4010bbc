"""Minibatch driving measures: uniform, perturbed, their coupling and exact TV.

Index vectors are 1-based, matching the usual ``[n] = {1, ..., n}`` notation.
The perturbed measure replaces each coordinate, independently with
probability ``delta``, by a uniform draw from the upper block
``{s, ..., n}`` where ``s = ceil(n / 2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .tvmetrics import TVResult

__all__ = [
    "IndexVector",
    "DrivingMeasure",
    "CoupledDraw",
    "WeightVector",
    "split_index",
    "sample_uniform",
    "sample_perturbed",
    "sample_coupled",
    "coordinate_weights",
    "upper_block_probabilities",
    "binomial_logpmf",
    "tv_binomial",
    "tv_exact_measures",
    "tv_coupling_bound",
    "lemma32_scaling_probe",
]


def split_index(n: int) -> int:
    """Return ``s = ceil(n/2)``, the first index of the upper block."""
    return (n + 1) // 2


def _check_sizes(n: int, M: int) -> None:
    if n < 1 or M < 1:
        raise ValueError(f"n and M must be >= 1 (got n={n}, M={M})")


def _check_delta(delta: float) -> None:
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1] (got {delta})")


@dataclass(frozen=True)
class IndexVector:
    """A minibatch of ``M`` data indices in ``[1, n]``."""

    entries: np.ndarray
    n: int

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int64)
        if entries.ndim != 1:
            raise ValueError("entries must be one-dimensional")
        if entries.size and (entries.min() < 1 or entries.max() > self.n):
            raise ValueError(f"entries must lie in [1, {self.n}]")
        object.__setattr__(self, "entries", entries)

    @property
    def M(self) -> int:
        return int(self.entries.size)

    @property
    def zero_based(self) -> np.ndarray:
        return self.entries - 1

    def __len__(self) -> int:
        return self.M

    def __eq__(self, other) -> bool:
        if not isinstance(other, IndexVector):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.entries, other.entries)

    __hash__ = None


@dataclass(frozen=True)
class CoupledDraw:
    """Joint draw ``(E, D)`` with the Bernoulli flips and replacement indices."""

    E: IndexVector
    D: IndexVector
    B: np.ndarray
    E_plus: np.ndarray


@dataclass(frozen=True)
class WeightVector:
    """Per-coordinate marginal ``w_i = P(D[1] = i)``, indexed 0..n-1."""

    weights: np.ndarray

    @property
    def n(self) -> int:
        return int(self.weights.size)

    def __getitem__(self, i):
        return self.weights[i]

    def __len__(self) -> int:
        return self.n


def sample_uniform(n: int, M: int, rng: np.random.Generator) -> IndexVector:
    _check_sizes(n, M)
    return IndexVector(rng.integers(1, n + 1, size=M), n)


def _draw_coupled_arrays(n, shape, delta, rng):
    # Draw order is fixed: E, then B, then E_plus.
    s = split_index(n)
    E = rng.integers(1, n + 1, size=shape)
    B = rng.random(size=shape) < delta
    E_plus = rng.integers(s, n + 1, size=shape)
    D = np.where(B, E_plus, E)
    return E, D, B, E_plus


def sample_perturbed(n: int, M: int, delta: float, rng: np.random.Generator) -> IndexVector:
    """Draw ``D ~ nu_{M,delta}``.

    Uses the same random draws as :func:`sample_coupled` and returns ``D``.
    """
    _check_sizes(n, M)
    _check_delta(delta)
    _, D, _, _ = _draw_coupled_arrays(n, M, delta, rng)
    return IndexVector(D, n)


def sample_coupled(n: int, M: int, delta: float, rng: np.random.Generator) -> CoupledDraw:
    """Draw ``(E, D)`` from the coordinatewise replacement coupling.

    ``E`` is uniform on ``[n]^M``; ``D[i] = E[i]`` unless the Bernoulli(delta)
    flip ``B[i]`` fires, in which case ``D[i]`` is a fresh uniform draw from
    the upper block.
    """
    _check_sizes(n, M)
    _check_delta(delta)
    E, D, B, E_plus = _draw_coupled_arrays(n, M, delta, rng)
    return CoupledDraw(IndexVector(E, n), IndexVector(D, n), B, E_plus)


def coordinate_weights(n: int, delta: float) -> WeightVector:
    if n < 1:
        raise ValueError(f"n must be >= 1 (got {n})")
    _check_delta(delta)
    s = split_index(n)
    w = np.full(n, (1.0 - delta) / n)
    w[s - 1:] += delta / (n - s + 1)
    return WeightVector(w)


@dataclass(frozen=True)
class DrivingMeasure:
    """Uniform ``mu_M`` or perturbed ``nu_{M,delta}`` on ``[n]^M``."""

    kind: Literal["uniform", "perturbed"]
    n: int
    M: int
    delta: float = 0.0

    def __post_init__(self):
        _check_sizes(self.n, self.M)
        _check_delta(self.delta)
        if self.kind not in ("uniform", "perturbed"):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind == "uniform" and self.delta != 0.0:
            raise ValueError("a uniform measure has delta = 0")

    @classmethod
    def uniform(cls, n: int, M: int) -> "DrivingMeasure":
        return cls("uniform", n, M, 0.0)

    @classmethod
    def perturbed(cls, n: int, M: int, delta: float) -> "DrivingMeasure":
        return cls("perturbed", n, M, float(delta))

    @property
    def s(self) -> int:
        return split_index(self.n)

    def coordinate_weights(self) -> WeightVector:
        return coordinate_weights(self.n, self.delta)

    def sample(self, rng: np.random.Generator) -> IndexVector:
        if self.kind == "uniform":
            return sample_uniform(self.n, self.M, rng)
        return sample_perturbed(self.n, self.M, self.delta, rng)


def upper_block_probabilities(n: int, delta: float) -> tuple[float, float]:
    """Probability that one coordinate lands in ``{s..n}`` under mu and nu."""
    s = split_index(n)
    p0 = (n - s + 1) / n
    p1 = (1.0 - delta) * p0 + delta
    return p0, p1


def binomial_logpmf(N: int, p: float) -> np.ndarray:
    """log P[Bin(N, p) = k] for k = 0..N via log-gamma accumulation."""
    k = np.arange(N + 1, dtype=float)
    log_choose = gammaln(N + 1.0) - gammaln(k + 1.0) - gammaln(N - k + 1.0)
    return log_choose + xlogy(k, p) + xlog1py(N - k, -p)


def tv_binomial(N: int, p: float, q: float) -> float:
    """Exact TV (half-L1) between Bin(N, p) and Bin(N, q)."""
    if p == q:
        return 0.0
    a = np.exp(binomial_logpmf(N, p))
    b = np.exp(binomial_logpmf(N, q))
    return float(min(1.0, 0.5 * np.abs(a - b).sum()))


def tv_exact_measures(n: int, M: int, delta: float) -> TVResult:
    """Exact ``||mu_M - nu_{M,delta}||_TV`` (sup-over-sets convention).

    Both measures are uniform within each block once the number of
    upper-block coordinates is fixed, so the likelihood ratio depends only on
    that count and the TV reduces to a TV between two binomials.
    """
    _check_sizes(n, M)
    _check_delta(delta)
    p0, p1 = upper_block_probabilities(n, delta)
    return TVResult(tv_binomial(M, p0, p1), "binomial-reduction")


def tv_coupling_bound(M: int, delta: float) -> float:
    """``1 - (1 - delta)^M``: the disagreement probability of the coordinate coupling."""
    _check_delta(delta)
    return -math.expm1(M * math.log1p(-delta)) if delta < 1.0 else 1.0


@dataclass
class ProbeRow:
    alpha: float
    delta: float
    tv: float
    constant: float  # delta * sqrt(M) / alpha**2
    saturated: bool = False


def lemma32_scaling_probe(
    n: int, M: int, alpha_grid: Sequence[float], tol: float = 1e-6
) -> list[ProbeRow]:
    """For each ``alpha``, find the largest ``delta`` with TV(mu_M, nu_{M,delta}) <= alpha.

    The TV is nondecreasing in ``delta``, so plain bisection works. Rows where
    even ``delta = 1`` stays below ``alpha`` are flagged ``saturated``.
    """
    rows = []
    for alpha in alpha_grid:
        if not 0.0 < alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 1/2) (got {alpha})")
        tv_one = tv_exact_measures(n, M, 1.0).value
        if tv_one <= alpha:
            rows.append(ProbeRow(alpha, 1.0, tv_one, math.sqrt(M) / alpha**2, True))
            continue
        lo, hi = 0.0, 1.0
        tv_lo = 0.0
        while True:
            mid = 0.5 * (lo + hi)
            tv_mid = tv_exact_measures(n, M, mid).value
            if tv_mid <= alpha:
                lo, tv_lo = mid, tv_mid
            else:
                hi = mid
            if alpha - tv_lo <= tol and tv_lo <= alpha or hi - lo < 1e-15:
                break
        rows.append(ProbeRow(alpha, lo, tv_lo, lo * math.sqrt(M) / alpha**2))
    return rows
