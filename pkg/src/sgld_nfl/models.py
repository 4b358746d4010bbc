"""Exponential-family likelihoods, datasets and exact Gaussian-mean posteriors.

A likelihood has the form ``p(x | theta) = h(x) exp(theta R(x) - A(theta))``,
so ``d/dtheta log p(x | theta) = R(x) - A'(theta)`` and the posterior
depends on the data only through ``S = sum_i R(X_i)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .measures import WeightVector, split_index

__all__ = [
    "ExponentialFamilyModel",
    "Dataset",
    "GaussianPosterior",
    "FlatPrior",
    "NormalPrior",
    "FLAT",
    "gaussian_mean_model",
    "make_dataset",
    "dataset_from_observations",
    "posterior_exact",
    "weighted_posterior",
    "effective_shift",
    "order_gap",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class ExponentialFamilyModel:
    name: str
    suff_stat_fn: Callable[[np.ndarray], np.ndarray]
    log_partition: Callable[[float], float]
    log_partition_deriv: Callable[[float], float]
    base_log_density: Callable[[np.ndarray], np.ndarray]
    sampler: Optional[Callable[[float, int, np.random.Generator], np.ndarray]] = None

    def log_likelihood(self, x, theta: float):
        x = np.asarray(x, dtype=float)
        return self.base_log_density(x) + theta * self.suff_stat_fn(x) - self.log_partition(theta)

    def grad_log_likelihood(self, x, theta: float):
        """Gradient in theta: ``R(x) - A'(theta)``."""
        return self.suff_stat_fn(np.asarray(x, dtype=float)) - self.log_partition_deriv(theta)

    def sample(self, theta: float, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.sampler is None:
            raise NotImplementedError(f"model {self.name!r} has no sampler")
        return self.sampler(theta, n, rng)


def gaussian_mean_model() -> ExponentialFamilyModel:
    """N(theta, 1): ``R(x) = x``, ``A(theta) = theta^2 / 2``."""
    log_norm = -0.5 * math.log(2 * math.pi)
    return ExponentialFamilyModel(
        name="gaussian-mean",
        suff_stat_fn=lambda x: np.asarray(x, dtype=float),
        log_partition=lambda theta: 0.5 * theta * theta,
        log_partition_deriv=lambda theta: theta,
        base_log_density=lambda x: log_norm - 0.5 * np.square(x),
        sampler=lambda theta, n, rng: rng.normal(theta, 1.0, size=n),
    )


@dataclass(frozen=True)
class Dataset:
    """Observations sorted ascending, with cached sufficient statistics."""

    observations: np.ndarray
    suff_values: np.ndarray
    total_S: float
    model_name: str = "gaussian-mean"
    generating_theta: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=float)
        if obs.size and np.any(np.diff(obs) < 0):
            raise ValueError("observations must be sorted ascending")
        if obs.shape != np.shape(self.suff_values):
            raise ValueError("suff_values must align with observations")
        object.__setattr__(self, "observations", obs)

    @property
    def n(self) -> int:
        return int(self.observations.size)


def dataset_from_observations(
    model: ExponentialFamilyModel,
    observations,
    generating_theta: Optional[float] = None,
    seed: Optional[int] = None,
) -> Dataset:
    obs = np.sort(np.asarray(observations, dtype=float))
    suff = np.asarray(model.suff_stat_fn(obs), dtype=float)
    suff.setflags(write=False)
    obs.setflags(write=False)
    return Dataset(obs, suff, float(np.sum(suff)), model.name, generating_theta, seed)


def make_dataset(
    model: ExponentialFamilyModel,
    theta0: float,
    n: int,
    rng: np.random.Generator,
    seed: Optional[int] = None,
) -> Dataset:
    """Draw ``n`` i.i.d. observations from ``p(. | theta0)`` and sort them."""
    if n < 1:
        raise ValueError(f"n must be >= 1 (got {n})")
    return dataset_from_observations(model, model.sample(theta0, n, rng), theta0, seed)


@dataclass(frozen=True)
class GaussianPosterior:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError(f"variance must be positive (got {self.variance})")

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.normal(self.mean, self.sd, size=size)


@dataclass(frozen=True)
class FlatPrior:
    def grad(self, theta):
        return 0.0 * theta

    def describe(self) -> str:
        return "flat"


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("prior variance must be positive")

    def grad(self, theta):
        return -(theta - self.mean) / self.variance

    def describe(self) -> str:
        return f"normal({self.mean},{self.variance})"


FLAT = FlatPrior()
Prior = Union[FlatPrior, NormalPrior]


def _require_gaussian(dataset: Dataset) -> None:
    if dataset.model_name != "gaussian-mean":
        raise NotImplementedError("exact posteriors are only available for the Gaussian mean model")


def posterior_exact(dataset: Dataset, prior: Prior = FLAT, shift: float = 0.0) -> GaussianPosterior:
    """Posterior of the Gaussian mean with ``S`` replaced by ``S + shift``."""
    _require_gaussian(dataset)
    n = dataset.n
    S = dataset.total_S + shift
    if isinstance(prior, NormalPrior):
        precision = n + 1.0 / prior.variance
        return GaussianPosterior((S + prior.mean / prior.variance) / precision, 1.0 / precision)
    if n == 0:
        raise ValueError("flat prior with no data gives an improper posterior")
    return GaussianPosterior(S / n, 1.0 / n)


def weighted_shift(dataset: Dataset, weights: WeightVector) -> float:
    """Shift in ``S`` induced by the likelihood ``prod_i p(X_i|theta)^(n w_i)``."""
    if weights.n != dataset.n:
        raise ValueError("weight vector length does not match dataset size")
    return dataset.n * float(np.dot(weights.weights, dataset.suff_values)) - dataset.total_S


def weighted_posterior(dataset: Dataset, weights: WeightVector, prior: Prior = FLAT) -> GaussianPosterior:
    """Posterior of the reweighted likelihood.

    Since the weights sum to one, the Gaussian log-partition term is still
    ``n A(theta)`` and only the sufficient statistic moves.
    """
    return posterior_exact(dataset, prior, shift=weighted_shift(dataset, weights))


def _block_means(dataset: Dataset) -> tuple[float, float]:
    n = dataset.n
    s = split_index(n)
    r = dataset.suff_values
    return float(np.mean(r[s - 1:])), float(np.mean(r))


def effective_shift(dataset: Dataset, delta: float) -> float:
    """Expected per-coordinate change ``E[R(X_D[1])] - E[R(X_E[1])]``.

    Equals ``delta * (upper-block mean - full mean)`` of the sufficient
    statistic; the weighted-posterior shift in ``S`` is ``n`` times this.
    """
    upper, full = _block_means(dataset)
    return delta * (upper - full)


def order_gap(dataset: Dataset) -> float:
    """``|upper-block mean - full mean|`` of the sufficient statistic."""
    upper, full = _block_means(dataset)
    return abs(upper - full)


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# n={dataset.n}\n")
        fh.write(f"# theta0={dataset.generating_theta!r}\n")
        fh.write(f"# model={dataset.model_name}\n")
        fh.write(f"# seed={dataset.seed!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x"])
        for x in dataset.observations:
            w.writerow([repr(float(x))])


def load_dataset(path: Union[str, Path], model: Optional[ExponentialFamilyModel] = None) -> Dataset:
    meta = {}
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
            elif line != "x":
                rows.append(float(line))
    model = model or gaussian_mean_model()
    if meta.get("model", model.name) != model.name:
        raise ValueError(f"dataset model {meta['model']!r} does not match {model.name!r}")
    theta0 = None if meta.get("theta0", "None") == "None" else float(meta["theta0"])
    seed = None if meta.get("seed", "None") == "None" else int(meta["seed"])
    ds = dataset_from_observations(model, rows, theta0, seed)
    if "n" in meta and int(meta["n"]) != ds.n:
        raise ValueError("row count does not match header n")
    return ds
