"""Total-variation distances: exact Gaussian, moment lower bound, histogram estimates.

Every value here uses the sup-over-sets convention
``||P - Q||_TV = sup_A |P(A) - Q(A)|``, i.e. half the L1 distance between
densities. Some texts use the full L1 distance; multiply by 2 to convert.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal, Optional, Union

import numpy as np
from scipy import integrate
from scipy.special import erf, ndtr

if TYPE_CHECKING:
    from .models import GaussianPosterior

__all__ = [
    "TVResult",
    "BinRule",
    "tv_gaussian_exact",
    "tv_gaussian_numeric",
    "gaussian_crossings",
    "tv_moment_lower_bound",
    "tv_empirical_vs_gaussian",
    "tv_empirical_two_sample",
]

Method = Literal["exact-gaussian", "moment-lower-bound", "binned-empirical", "binomial-reduction"]
# "scott" or a fixed bin count
BinRule = Union[int, Literal["scott"]]

DEFAULT_BINS = 50
MIN_SAMPLES = 100


@dataclass(frozen=True)
class TVResult:
    value: float
    method: Method
    mc_error: Optional[float] = None
    bin_count: Optional[int] = None

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise ValueError(f"TV value {self.value} outside [0, 1]")

    def __float__(self) -> float:
        return self.value


def _moments(g) -> tuple[float, float]:
    if g.variance <= 0:
        raise ValueError(f"variance must be positive (got {g.variance})")
    return float(g.mean), math.sqrt(g.variance)


def gaussian_crossings(m1: float, s1: float, m2: float, s2: float) -> list[float]:
    """Points where the N(m1, s1^2) and N(m2, s2^2) densities are equal."""
    if s1 == s2:
        return [] if m1 == m2 else [0.5 * (m1 + m2)]
    # log N1 - log N2 = 0  ->  a x^2 + b x + c = 0
    a = 1.0 / (2 * s2**2) - 1.0 / (2 * s1**2)
    b = m1 / s1**2 - m2 / s2**2
    c = m2**2 / (2 * s2**2) - m1**2 / (2 * s1**2) + math.log(s2 / s1)
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    r = math.sqrt(disc)
    return sorted([(-b - r) / (2 * a), (-b + r) / (2 * a)])


def tv_gaussian_numeric(a: "GaussianPosterior", b: "GaussianPosterior", tol: float = 1e-10) -> float:
    """Half-L1 between two Gaussians by adaptive quadrature on mean +/- 10 sd."""
    m1, s1 = _moments(a)
    m2, s2 = _moments(b)
    lo = min(m1 - 10 * s1, m2 - 10 * s2)
    hi = max(m1 + 10 * s1, m2 + 10 * s2)
    c1, c2 = 1.0 / (s1 * math.sqrt(2 * math.pi)), 1.0 / (s2 * math.sqrt(2 * math.pi))

    def integrand(x):
        return abs(c1 * math.exp(-0.5 * ((x - m1) / s1) ** 2) - c2 * math.exp(-0.5 * ((x - m2) / s2) ** 2))

    # split at density crossings (kinks of |p - q|) and at the means
    cuts = [lo] + sorted(p for p in gaussian_crossings(m1, s1, m2, s2) + [m1, m2] if lo < p < hi) + [hi]
    total = 0.0
    for left, right in zip(cuts[:-1], cuts[1:]):
        if right > left:
            val, _ = integrate.quad(integrand, left, right, epsabs=tol, epsrel=1e-12, limit=200)
            total += val
    return min(1.0, 0.5 * total)


def tv_gaussian_exact(a: "GaussianPosterior", b: "GaussianPosterior", numeric: bool = False) -> TVResult:
    """TV between two Gaussians.

    Equal variances use the closed form ``erf(|dm| / (2 sqrt(2) sigma))``,
    which equals ``Phi(|dm|/2sigma) - Phi(-|dm|/2sigma)``; unequal variances
    (or ``numeric=True``) integrate ``|p - q| / 2``.
    """
    m1, s1 = _moments(a)
    m2, s2 = _moments(b)
    if s1 == s2 and not numeric:
        value = float(erf(abs(m1 - m2) / (2.0 * math.sqrt(2.0) * s1)))
    else:
        value = tv_gaussian_numeric(a, b)
    return TVResult(min(1.0, max(0.0, value)), "exact-gaussian")


def tv_moment_lower_bound(mean_p: float, sd_p: float, mean_q: float, sd_q: float) -> TVResult:
    """``dm^2 / ((sd_p + sd_q)^2 + dm^2)``, valid for any pair with these moments."""
    if sd_p < 0 or sd_q < 0:
        raise ValueError("standard deviations must be nonnegative")
    dm2 = (mean_p - mean_q) ** 2
    if dm2 == 0.0:
        return TVResult(0.0, "moment-lower-bound")
    return TVResult(dm2 / ((sd_p + sd_q) ** 2 + dm2), "moment-lower-bound")


def _bin_count(rule: BinRule, samples: np.ndarray, width_span: float) -> int:
    if rule == "scott":
        sd = float(np.std(samples, ddof=1))
        if sd == 0.0:
            return DEFAULT_BINS
        h = 3.49 * sd * samples.size ** (-1.0 / 3.0)
        return max(1, int(math.ceil(width_span / h)))
    k = int(rule)
    if k < 1:
        raise ValueError(f"bin count must be >= 1 (got {k})")
    return k


def _as_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples (got {x.size})")
    return x


def _half_l1(p: np.ndarray, q: np.ndarray) -> float:
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def tv_empirical_vs_gaussian(samples, target: "GaussianPosterior", bin_rule: BinRule = DEFAULT_BINS) -> TVResult:
    """Histogram TV between samples and an exact Gaussian.

    Equal-width bins span target mean +/- 6 sd, with two extra tail bins so
    both sides carry total mass 1. Binning can only merge mass, so up to
    sampling noise this underestimates the true TV.
    """
    x = _as_samples(samples)
    m, s = _moments(target)
    lo, hi = m - 6 * s, m + 6 * s
    k = _bin_count(bin_rule, x, hi - lo)
    edges = np.linspace(lo, hi, k + 1)
    counts, _ = np.histogram(x, bins=edges)
    # np.histogram closes the last bin; the tail bins follow the same convention
    below = np.count_nonzero(x < lo)
    above = np.count_nonzero(x > hi)
    p_hat = np.concatenate([[below], counts, [above]]) / x.size
    cdf = ndtr((edges - m) / s)
    q = np.concatenate([[cdf[0]], np.diff(cdf), [1.0 - cdf[-1]]])
    mc = 0.5 * math.sqrt(float(np.sum(p_hat * (1 - p_hat))) / x.size)
    return TVResult(_half_l1(p_hat, q), "binned-empirical", mc_error=mc, bin_count=k)


def tv_empirical_two_sample(samples_a, samples_b, bin_rule: BinRule = DEFAULT_BINS) -> TVResult:
    """Histogram TV between two sample sets on a common equal-width grid."""
    a = _as_samples(samples_a)
    b = _as_samples(samples_b)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        return TVResult(0.0, "binned-empirical", mc_error=0.0, bin_count=1)
    k = _bin_count(bin_rule, np.concatenate([a, b]), hi - lo)
    edges = np.linspace(lo, hi, k + 1)
    pa = np.histogram(a, bins=edges)[0] / a.size
    pb = np.histogram(b, bins=edges)[0] / b.size
    var = np.sum(pa * (1 - pa)) / a.size + np.sum(pb * (1 - pb)) / b.size
    return TVResult(_half_l1(pa, pb), "binned-empirical", mc_error=0.5 * math.sqrt(float(var)), bin_count=k)
