"""Short-run and long-run lower-bound experiments.

For every ``n`` on a grid we draw a Gaussian dataset, run ``replicates``
coupled pairs of SGLD chains (uniform vs perturbed minibatches, perturbation
``omega_n``) for ``T_n`` steps with minibatch size ``M_n``, and estimate

    Delta_n = TV(L(Z_T), posterior) + TV(L(Z~_T), weighted posterior)

with histogram estimates against the exact Gaussian targets.

Replicates are split into fixed-size blocks, block ``b`` at size ``n`` using
stream ``(seed, 1, n, b)``. Thread count only changes which worker runs a
block, so outputs are identical for any ``threads``.
"""
from __future__ import annotations

import ast
import csv
import json
import math
import operator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import numpy as np

from . import __version__
from .engine import SGLDConfig, make_stream, simulate_coupled_batch
from .measures import coordinate_weights, tv_coupling_bound, tv_exact_measures
from .models import (
    GaussianPosterior,
    effective_shift,
    gaussian_mean_model,
    make_dataset,
    order_gap,
    posterior_exact,
    weighted_posterior,
)
from .tvmetrics import tv_empirical_two_sample, tv_empirical_vs_gaussian, tv_gaussian_exact, tv_gaussian_numeric

__all__ = [
    "Schedule",
    "ScalingRegime",
    "RegimeCheck",
    "ExperimentConfig",
    "ExperimentRecord",
    "short_run_regime",
    "long_run_regime",
    "validate_regime",
    "run_theorem1",
    "run_theorem2",
    "write_records",
    "read_records",
    "write_outputs",
    "RECORD_COLUMNS",
]

# ---------------------------------------------------------------------------
# schedules


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.FloorDiv: operator.floordiv,
    ast.Pow: operator.pow,
    ast.Mod: operator.mod,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    "floor": math.floor,
    "ceil": math.ceil,
    "sqrt": math.sqrt,
    "log": math.log,
    "log10": math.log10,
    "exp": math.exp,
    "min": min,
    "max": max,
    "int": int,
}


class Schedule:
    """An arithmetic expression in ``n`` (and ``M``), e.g. ``"floor(n**0.25)"``."""

    def __init__(self, expr: Union[str, int, float]):
        self.expr = str(expr)
        self._tree = ast.parse(self.expr, mode="eval").body
        self._check(self._tree)

    def _check(self, node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name) and node.id in ("n", "M"):
            return
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            self._check(node.operand)
            return
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
            for arg in node.args:
                self._check(arg)
            return
        raise ValueError(f"unsupported schedule expression: {self.expr!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise ValueError(f"{node.id!r} is not available in {self.expr!r}")
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        return _FUNCS[node.func.id](*(self._eval(a, env) for a in node.args))

    def __call__(self, n: int, M: Optional[int] = None):
        env = {"n": n}
        if M is not None:
            env["M"] = M
        return self._eval(self._tree, env)

    def __repr__(self) -> str:
        return f"Schedule({self.expr!r})"


@dataclass
class ScalingRegime:
    name: Literal["short-run", "long-run"]
    T_of_n: str
    M_of_n: str
    omega_of_n: str
    epsilon_of_n: str = "1/n"
    n_grid: list[int] = field(default_factory=lambda: [100, 1000, 10000])

    def at(self, n: int) -> dict:
        """Evaluate all schedules at ``n``; ``T`` may refer to ``M``."""
        M = int(Schedule(self.M_of_n)(n))
        T = int(Schedule(self.T_of_n)(n, M))
        omega = float(Schedule(self.omega_of_n)(n, M))
        eps = float(Schedule(self.epsilon_of_n)(n, M))
        if M < 1 or T < 0:
            raise ValueError(f"schedules give M={M}, T={T} at n={n}")
        if not 0.0 <= omega <= 1.0:
            raise ValueError(f"omega_n={omega} outside [0, 1] at n={n}")
        return {"n": n, "M": M, "T": T, "omega": omega, "epsilon": eps}


def short_run_regime(n_grid: Sequence[int] = (100, 1000, 10000)) -> ScalingRegime:
    return ScalingRegime("short-run", "floor(sqrt(n))", "floor(n**0.25)", "n**-0.4", "1/n", list(n_grid))


def long_run_regime(n_grid: Sequence[int] = (100, 1000, 10000)) -> ScalingRegime:
    return ScalingRegime("long-run", "floor(n**1.5)//M", "10", "n**-0.9", "1/n", list(n_grid))


@dataclass
class RegimeCheck:
    rows: list[dict]
    violations: list[str]
    degenerate: bool

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_regime(regime: ScalingRegime, min_fold: float = 1.0) -> RegimeCheck:
    """Check the scaling conditions directionally on the grid.

    A quantity required to tend to 0 must shrink from the first to the last
    grid point by more than ``min_fold``; one required to diverge must grow
    by more than ``min_fold``. ``omega_n = 0`` everywhere is accepted as a
    degenerate regime and skips the ``omega`` conditions.
    """
    if len(regime.n_grid) < 2:
        raise ValueError("a regime needs at least two grid points")
    rows = []
    for n in regime.n_grid:
        p = regime.at(n)
        p["TM_over_n"] = p["T"] * p["M"] / n
        p["omega_sqrt_MT"] = p["omega"] * math.sqrt(p["M"] * p["T"])
        p["omega_sqrt_n"] = p["omega"] * math.sqrt(n)
        rows.append(p)
    degenerate = all(r["omega"] == 0.0 for r in rows)
    if regime.name == "short-run":
        wanted = {"TM_over_n": "to0", "omega_sqrt_MT": "to0", "omega_sqrt_n": "toinf"}
    elif regime.name == "long-run":
        wanted = {"TM_over_n": "toinf", "omega_sqrt_MT": "to0"}
    else:
        raise ValueError(f"unknown regime {regime.name!r}")
    violations = []
    for key, direction in wanted.items():
        if degenerate and key.startswith("omega"):
            continue
        first, last = rows[0][key], rows[-1][key]
        if direction == "to0":
            ok = first > 0 and last < first and first / max(last, 1e-300) > min_fold
        else:
            ok = last > first and (first == 0 or last / first > min_fold)
        if not ok:
            sense = "decrease toward 0" if direction == "to0" else "grow without bound"
            violations.append(f"{key} must {sense} on the grid ({first:.4g} -> {last:.4g})")
    return RegimeCheck(rows, violations, degenerate)


# ---------------------------------------------------------------------------
# experiment


@dataclass
class ExperimentConfig:
    regime: ScalingRegime
    replicates: int
    master_seed: int
    theta0: float = 0.0
    coupling: Literal["maximal", "coordinate"] = "maximal"
    noise: Literal["literal", "sqrt_eps"] = "literal"
    slack: float = 0.2
    bins: Union[int, str] = 50
    block_size: int = 1000
    threads: int = 1
    initial: Union[str, float] = "posterior"
    trajectories: int = 0
    traj_stride: int = 1
    min_fold: float = 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = asdict(self.regime)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["regime"] = ScalingRegime(**d["regime"])
        return cls(**d)


@dataclass
class ExperimentRecord:
    n: int
    M: int
    T: int
    omega: float
    epsilon: float
    replicates: int
    tv_chain_vs_posterior: float
    tv_chain_mc_error: float
    tv_perturbed_chain_vs_perturbed_posterior: float
    tv_perturbed_mc_error: float
    delta_sum: float
    target_gap: float
    target_gap_check: float
    tv_two_chains: float
    tv_two_chains_mc_error: float
    coupling_agreement: float
    agreement_bound_coordinate: float
    agreement_bound_maximal: float
    eta_observed: float
    gamma_observed: float
    coupling_budget: float
    triangle_rhs: float
    threshold: float
    threshold_eta_gamma: float
    verdict: bool
    verdict_eta_gamma: bool
    degenerate: bool
    bin_count: int
    master_seed: int
    data_stream: str
    chain_streams: str

    def triangle_holds(self, k: float = 3.0) -> bool:
        mc = self.tv_chain_mc_error + self.tv_perturbed_mc_error + self.tv_two_chains_mc_error
        return self.delta_sum >= self.target_gap - self.tv_two_chains - k * mc


RECORD_COLUMNS = [f.name for f in fields(ExperimentRecord)]


def _run_blocks(cfg: SGLDConfig, omega, exp: ExperimentConfig, n: int):
    R, size = exp.replicates, exp.block_size
    starts = list(range(0, R, size))

    def one(b):
        rng = np.random.default_rng(make_stream(exp.master_seed, 1, n, b))
        count = min(size, R - starts[b])
        keep = exp.trajectories if b == 0 else 0
        return simulate_coupled_batch(cfg, omega, count, rng, exp.coupling, record=keep, stride=exp.traj_stride)

    if exp.threads <= 1:
        results = [one(b) for b in range(len(starts))]
    else:
        with ThreadPoolExecutor(max_workers=exp.threads) as pool:
            results = list(pool.map(one, range(len(starts))))
    mu = np.concatenate([r.theta_mu for r in results])
    nu = np.concatenate([r.theta_nu for r in results])
    agree = np.concatenate([r.agree for r in results])
    return mu, nu, agree, results[0], len(starts)


def _one_n(exp: ExperimentConfig, params: dict, theorem: int, degenerate: bool):
    n, M, T, omega, eps = params["n"], params["M"], params["T"], params["omega"], params["epsilon"]
    model = gaussian_mean_model()
    data = make_dataset(model, exp.theta0, n, np.random.default_rng(make_stream(exp.master_seed, 0, n)), exp.master_seed)
    post = posterior_exact(data)
    target = weighted_posterior(data, coordinate_weights(n, omega))
    shift = effective_shift(data, omega)
    gap = tv_gaussian_exact(post, target).value
    # second path: per-coordinate shift straight into the mean, numeric integration
    gap_check = tv_gaussian_numeric(post, GaussianPosterior(post.mean + shift, post.variance))

    cfg = SGLDConfig(eps, M, T, data, initial=exp.initial, noise=exp.noise, model=model)
    mu, nu, agree, first_block, nblocks = _run_blocks(cfg, omega, exp, n)

    bins = exp.bins if exp.bins == "scott" else int(exp.bins)
    tv_mu = tv_empirical_vs_gaussian(mu, post, bins)
    tv_nu = tv_empirical_vs_gaussian(nu, target, bins)
    tv_two = tv_empirical_two_sample(mu, nu, bins)
    delta_sum = tv_mu.value + tv_nu.value

    eta = order_gap(data)
    standardized = abs(shift) * math.sqrt(n)
    if theorem == 1:
        gamma = gap
        threshold = (1 - exp.slack) * gamma
        threshold_eg = threshold
    else:
        gamma = gap / standardized if standardized > 0 else 0.0
        threshold = (1 - exp.slack) * eta * omega
        threshold_eg = (1 - exp.slack) * eta * gamma * omega
    mc_total = tv_mu.mc_error + tv_nu.mc_error + tv_two.mc_error
    rec = ExperimentRecord(
        n=n, M=M, T=T, omega=omega, epsilon=eps, replicates=exp.replicates,
        tv_chain_vs_posterior=tv_mu.value, tv_chain_mc_error=tv_mu.mc_error,
        tv_perturbed_chain_vs_perturbed_posterior=tv_nu.value, tv_perturbed_mc_error=tv_nu.mc_error,
        delta_sum=delta_sum, target_gap=gap, target_gap_check=gap_check,
        tv_two_chains=tv_two.value, tv_two_chains_mc_error=tv_two.mc_error,
        coupling_agreement=float(np.mean(agree)),
        agreement_bound_coordinate=1.0 - tv_coupling_bound(M * T, omega),
        agreement_bound_maximal=1.0 - tv_exact_measures(n, max(M * T, 1), omega).value if T else 1.0,
        eta_observed=eta, gamma_observed=gamma,
        coupling_budget=math.sqrt(omega) * (M * T) ** 0.25,
        triangle_rhs=gap - tv_two.value - 3.0 * mc_total,
        threshold=threshold, threshold_eta_gamma=threshold_eg,
        verdict=delta_sum >= threshold, verdict_eta_gamma=delta_sum >= threshold_eg,
        degenerate=degenerate or omega == 0.0,
        bin_count=tv_mu.bin_count,
        master_seed=exp.master_seed,
        data_stream=f"{exp.master_seed}:0:{n}",
        chain_streams=f"{exp.master_seed}:1:{n}:0..{nblocks - 1}",
    )
    return rec, first_block


def _run(exp: ExperimentConfig, theorem: int, expected: str):
    if exp.regime.name != expected:
        raise ValueError(f"theorem {theorem} needs a {expected} regime (got {exp.regime.name})")
    if exp.replicates < 100:
        raise ValueError("need at least 100 replicates for histogram TV estimates")
    check = validate_regime(exp.regime, exp.min_fold)
    if not check.ok:
        raise ValueError("regime violates its scaling conditions: " + "; ".join(check.violations))
    records, paths = [], {}
    for params in check.rows:
        rec, first_block = _one_n(exp, params, theorem, check.degenerate)
        records.append(rec)
        if exp.trajectories:
            paths[rec.n] = first_block
    return records, paths


def run_theorem1(exp: ExperimentConfig, return_paths: bool = False):
    """Short-run experiment; the verdict compares ``Delta_n`` with ``(1-a)`` times the target gap."""
    records, paths = _run(exp, 1, "short-run")
    return (records, paths) if return_paths else records


def run_theorem2(exp: ExperimentConfig, return_paths: bool = False):
    """Long-run experiment; the verdict compares ``Delta_n`` with ``(1-a) eta omega_n``.

    ``threshold_eta_gamma`` additionally multiplies by the observed
    sensitivity ``gamma`` (target gap per posterior sd of mean shift).
    """
    records, paths = _run(exp, 2, "long-run")
    return (records, paths) if return_paths else records


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records(records: Sequence[ExperimentRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for rec in records:
            w.writerow([_fmt(getattr(rec, c)) for c in RECORD_COLUMNS])


def read_records(path) -> list[ExperimentRecord]:
    types = {f.name: f.type for f in fields(ExperimentRecord)}
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for key, raw in row.items():
                t = types[key]
                if t == "bool":
                    kw[key] = raw == "1"
                elif t == "int":
                    kw[key] = int(raw)
                elif t == "float":
                    kw[key] = float(raw)
                else:
                    kw[key] = raw
            out.append(ExperimentRecord(**kw))
    return out


PLOT_SERIES = {
    "delta_n": "delta_sum",
    "target_gap": "target_gap",
    "coupling_agreement": "coupling_agreement",
}


def write_outputs(records, out_dir, exp: ExperimentConfig, command: str, paths=None) -> list[Path]:
    """Write records.csv, plotdata_*.csv, optional traj_<n>.csv and manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "records.csv"]
    write_records(records, written[0])
    for name, attr in PLOT_SERIES.items():
        p = out / f"plotdata_{name}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y"])
            for rec in records:
                w.writerow([rec.n, _fmt(getattr(rec, attr))])
        written.append(p)
    for n, block in (paths or {}).items():
        p = out / f"traj_{n}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "pair", "theta_mu", "theta_nu"])
            for i in range(block.paths_mu.shape[0]):
                for j, t in enumerate(block.times):
                    w.writerow([int(t), i, _fmt(float(block.paths_mu[i, j])), _fmt(float(block.paths_nu[i, j]))])
        written.append(p)
    manifest = {
        "command": command,
        "version": __version__,
        "seed": exp.master_seed,
        "threads": exp.threads,
        "config": exp.to_dict(),
        "csv_schemas": {
            "records.csv": RECORD_COLUMNS,
            "plotdata_<name>.csv": ["x", "y"],
            "traj_<n>.csv": ["t", "pair", "theta_mu", "theta_nu"],
        },
        "files": [p.name for p in written],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return written
