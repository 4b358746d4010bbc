"""Forward-mapping Markov chains with explicit randomness, instantiated as SGLD.

Each step draws a minibatch ``E_t`` from the driving measure and a noise
``U_t``, then applies the forward map ``F(theta, r, E, U)``. The state is
scalar; the auxiliary slot ``r`` is carried through unused.

Two execution paths exist:

* :func:`run_chain` / :func:`run_coupled` / :func:`run_replicates` follow one
  chain (or one coupled pair) at a time and are the reference implementation.
* :func:`simulate_coupled_batch` advances a block of coupled pairs in
  lockstep with vectorised draws; the experiments use it.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Optional, Union

import numpy as np

from .measures import DrivingMeasure, IndexVector, sample_coupled, split_index, upper_block_probabilities, binomial_logpmf
from .models import FLAT, Dataset, ExponentialFamilyModel, Prior, gaussian_mean_model, posterior_exact

__all__ = [
    "SGLDConfig",
    "Trajectory",
    "CoupledRun",
    "BatchResult",
    "make_stream",
    "forward_map",
    "sgld_step",
    "run_chain",
    "run_coupled",
    "run_replicates",
    "simulate_coupled_batch",
]

NoiseMode = Literal["literal", "sqrt_eps"]
Coupling = Literal["maximal", "coordinate"]
RandomStream = Union[np.random.Generator, np.random.SeedSequence, int]


def make_stream(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Seed sequence for the stream named by ``key`` under ``master_seed``."""
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))


def _generator(rng: RandomStream) -> tuple[np.random.Generator, dict]:
    if isinstance(rng, np.random.Generator):
        return rng, {}
    if isinstance(rng, (int, np.integer)):
        rng = np.random.SeedSequence(int(rng))
    record = {"master_seed": rng.entropy, "stream": list(rng.spawn_key)}
    return np.random.default_rng(rng), record


@dataclass(frozen=True)
class SGLDConfig:
    """SGLD tuning for one dataset.

    ``initial`` is either ``"posterior"`` (an exact draw from the unperturbed
    posterior) or a fixed starting value. ``noise="literal"`` adds a standard
    normal each step regardless of the step size; ``"sqrt_eps"`` scales it by
    ``sqrt(step_size)``, the usual Langevin discretisation.
    """

    step_size: float
    minibatch_size: int
    horizon: int
    dataset: Dataset
    measure: Optional[DrivingMeasure] = None
    prior: Prior = FLAT
    initial: Union[str, float] = "posterior"
    noise: NoiseMode = "literal"
    model: ExponentialFamilyModel = field(default_factory=gaussian_mean_model)

    def __post_init__(self):
        if not self.step_size >= 0:
            raise ValueError("step_size must be nonnegative")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.noise not in ("literal", "sqrt_eps"):
            raise ValueError(f"unknown noise mode {self.noise!r}")
        if self.measure is None:
            object.__setattr__(self, "measure", DrivingMeasure.uniform(self.dataset.n, self.minibatch_size))
        if self.measure.n != self.dataset.n or self.measure.M != self.minibatch_size:
            raise ValueError("driving measure does not match dataset size / minibatch size")

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def noise_scale(self) -> float:
        return 1.0 if self.noise == "literal" else math.sqrt(self.step_size)

    def prior_grad(self, theta):
        return self.prior.grad(theta)

    def with_measure(self, measure: DrivingMeasure) -> "SGLDConfig":
        return SGLDConfig(
            self.step_size, self.minibatch_size, self.horizon, self.dataset, measure,
            self.prior, self.initial, self.noise, self.model,
        )

    def initial_state(self, rng: np.random.Generator) -> float:
        if isinstance(self.initial, str):
            if self.initial != "posterior":
                raise ValueError(f"unknown initial distribution {self.initial!r}")
            return float(posterior_exact(self.dataset, self.prior).sample(rng))
        return float(self.initial)


@dataclass
class Trajectory:
    states: np.ndarray
    seed_record: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.states) - 1


@dataclass
class CoupledRun:
    chain_mu: Trajectory
    chain_nu: Trajectory
    first_divergence: Optional[int] = None


def sgld_step(theta: float, minibatch: IndexVector, noise: float, config: SGLDConfig) -> float:
    """``theta + (eps/2) (grad log prior + (n/M) sum_j grad log p(X_E[j] | theta)) + noise``."""
    r = config.dataset.suff_values[minibatch.zero_based]
    grad_sum = float(np.sum(r)) - minibatch.M * config.model.log_partition_deriv(theta)
    drift = config.prior_grad(theta) + (config.n / minibatch.M) * grad_sum
    return float(theta + 0.5 * config.step_size * drift + noise)


def forward_map(theta: float, r, minibatch: IndexVector, noise: float, config: SGLDConfig):
    """One application of ``F``; SGLD has no auxiliary state, so ``r`` passes through."""
    return sgld_step(theta, minibatch, noise, config), r


def run_chain(config: SGLDConfig, rng: RandomStream) -> Trajectory:
    gen, record = _generator(rng)
    states = np.empty(config.horizon + 1)
    theta = config.initial_state(gen)
    r = None
    states[0] = theta
    scale = config.noise_scale
    for t in range(1, config.horizon + 1):
        E = config.measure.sample(gen)
        U = scale * gen.standard_normal()
        theta, r = forward_map(theta, r, E, U, config)
        states[t] = theta
    return Trajectory(states, record)


def run_coupled(config: SGLDConfig, delta: float, rng: RandomStream) -> CoupledRun:
    """Run the uniform chain and its perturbed twin on shared randomness.

    Both chains start from the same point and share every Gaussian noise;
    the minibatches come from the coordinatewise coupling, so the chains
    agree exactly until the first step where ``D_t != E_t``.
    """
    if config.measure.kind != "uniform":
        raise ValueError("run_coupled expects a config driven by the uniform measure")
    gen, record = _generator(rng)
    n, M, T = config.n, config.minibatch_size, config.horizon
    mu = np.empty(T + 1)
    nu = np.empty(T + 1)
    mu[0] = nu[0] = config.initial_state(gen)
    scale = config.noise_scale
    first = None
    for t in range(1, T + 1):
        draw = sample_coupled(n, M, delta, gen)
        U = scale * gen.standard_normal()
        mu[t] = sgld_step(mu[t - 1], draw.E, U, config)
        nu[t] = sgld_step(nu[t - 1], draw.D, U, config)
        if first is None and draw.D != draw.E:
            first = t
    return CoupledRun(Trajectory(mu, dict(record)), Trajectory(nu, dict(record)), first)


def run_replicates(config: SGLDConfig, replicate_count: int, master_seed: int, threads: int = 1) -> list[float]:
    """Terminal states of independent chains; replicate ``r`` uses stream ``(master_seed, r)``."""
    if replicate_count < 1:
        raise ValueError("replicate_count must be >= 1")

    def one(r):
        return float(run_chain(config, make_stream(master_seed, r)).states[-1])

    if threads <= 1:
        return [one(r) for r in range(replicate_count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(replicate_count)))


@dataclass
class BatchResult:
    """Terminal states of a block of coupled pairs.

    ``agree[i]`` is True when pair ``i`` used identical minibatches at every
    step, hence identical trajectories. ``paths_mu``/``paths_nu`` hold the
    first few trajectories when requested (rows are chains, columns times
    ``0, stride, 2*stride, ...``).
    """

    theta_mu: np.ndarray
    theta_nu: np.ndarray
    agree: np.ndarray
    times: Optional[np.ndarray] = None
    paths_mu: Optional[np.ndarray] = None
    paths_nu: Optional[np.ndarray] = None


def _maximal_binomial_coupling(N, p, q, size, rng):
    """Draw ``(K, K')`` from a maximal coupling of Bin(N, p) and Bin(N, q)."""
    a = np.exp(binomial_logpmf(N, p))
    b = np.exp(binomial_logpmf(N, q))
    a /= a.sum()
    b /= b.sum()
    overlap = np.minimum(a, b)
    w = float(overlap.sum())
    u_mix = rng.random(size)
    u1 = rng.random(size)
    u2 = rng.random(size)

    def inverse_cdf(weights, u):
        if u.size == 0:
            return np.zeros(0, dtype=np.int64)
        cdf = np.cumsum(weights)
        cdf /= cdf[-1]
        return np.minimum(np.searchsorted(cdf, u, side="right"), N)

    same = u_mix < w
    K = np.empty(size, dtype=np.int64)
    K2 = np.empty(size, dtype=np.int64)
    if w > 0:
        K[same] = inverse_cdf(overlap, u1[same])
        K2[same] = K[same]
    if w < 1:
        K[~same] = inverse_cdf(np.clip(a - b, 0, None), u1[~same])
        K2[~same] = inverse_cdf(np.clip(b - a, 0, None), u2[~same])
    return K, K2


def simulate_coupled_batch(
    config: SGLDConfig,
    delta: float,
    n_chains: int,
    rng: np.random.Generator,
    coupling: Coupling = "maximal",
    record: int = 0,
    stride: int = 1,
) -> BatchResult:
    """Advance ``n_chains`` coupled (uniform, perturbed) SGLD pairs in lockstep.

    ``coupling="coordinate"`` uses the per-coordinate replacement coupling.
    ``coupling="maximal"`` couples whole driving sequences: both measures
    are uniform inside each block given the total number ``K`` of
    upper-block picks over all ``M*T`` coordinates, so a maximal coupling of
    the two binomial counts, followed by shared per-step hypergeometric
    splits and shared in-block draws, is a maximal coupling of the full
    sequences. Pairs with equal counts see identical minibatch multisets.

    The SGLD update depends on the minibatch only through its multiset, so
    the maximal path draws per-step block counts rather than ordered vectors.
    """
    if config.measure.kind != "uniform":
        raise ValueError("batch simulation expects a config driven by the uniform measure")
    if coupling not in ("maximal", "coordinate"):
        raise ValueError(f"unknown coupling {coupling!r}")
    n, M, T = config.n, config.minibatch_size, config.horizon
    s = split_index(n)
    r = np.asarray(config.dataset.suff_values, dtype=float)
    eps = config.step_size
    scale = config.noise_scale
    dA = config.model.log_partition_deriv
    prior = config.prior

    if isinstance(config.initial, str):
        theta0 = posterior_exact(config.dataset, prior).sample(rng, size=n_chains)
    else:
        theta0 = np.full(n_chains, float(config.initial))
    mu = np.array(theta0, dtype=float)
    nu = mu.copy()

    keep = min(record, n_chains)
    times = np.arange(0, T + 1, max(1, stride))
    paths_mu = np.empty((keep, times.size)) if keep else None
    paths_nu = np.empty((keep, times.size)) if keep else None
    slot = 0

    def save(t):
        nonlocal slot
        if keep and slot < times.size and times[slot] == t:
            paths_mu[:, slot] = mu[:keep]
            paths_nu[:, slot] = nu[:keep]
            slot += 1

    def step(theta, suff_sum, z):
        drift = prior.grad(theta) + (n / M) * (suff_sum - M * dA(theta))
        return theta + 0.5 * eps * drift + scale * z

    save(0)
    rows = np.arange(n_chains)
    if coupling == "coordinate":
        agree = np.ones(n_chains, dtype=bool)
        for t in range(1, T + 1):
            E = rng.integers(0, n, size=(n_chains, M))
            B = rng.random((n_chains, M)) < delta
            E_plus = rng.integers(s - 1, n, size=(n_chains, M))
            D = np.where(B, E_plus, E)
            z = rng.standard_normal(n_chains)
            agree &= np.all(D == E, axis=1)
            mu = step(mu, r[E].sum(axis=1), z)
            nu = step(nu, r[D].sum(axis=1), z)
            save(t)
        return BatchResult(mu, nu, agree, times if keep else None, paths_mu, paths_nu)

    N = M * T
    p0, p1 = upper_block_probabilities(n, delta)
    K_mu, K_nu = _maximal_binomial_coupling(N, p0, p1, n_chains, rng)
    agree = K_mu == K_nu
    split = ~agree
    rem_mu, rem_nu = K_mu.copy(), K_nu.copy()
    zero = np.zeros((n_chains, 1))
    for t in range(1, T + 1):
        left = N - (t - 1) * M
        k_mu = rng.hypergeometric(rem_mu, left - rem_mu, M) if N else np.zeros(n_chains, dtype=np.int64)
        k_nu = k_mu.copy()
        if split.any():
            k_nu[split] = rng.hypergeometric(rem_nu[split], left - rem_nu[split], M)
        rem_mu -= k_mu
        rem_nu -= k_nu
        up = np.hstack([zero, np.cumsum(r[rng.integers(s - 1, n, size=(n_chains, M))], axis=1)])
        if s > 1:
            low = np.hstack([zero, np.cumsum(r[rng.integers(0, s - 1, size=(n_chains, M))], axis=1)])
        else:
            low = np.zeros((n_chains, M + 1))
        z = rng.standard_normal(n_chains)
        mu = step(mu, up[rows, k_mu] + low[rows, M - k_mu], z)
        nu = step(nu, up[rows, k_nu] + low[rows, M - k_nu], z)
        save(t)
    return BatchResult(mu, nu, agree, times if keep else None, paths_mu, paths_nu)
