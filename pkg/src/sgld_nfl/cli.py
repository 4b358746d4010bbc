"""Command line entry point: ``sgld-nfl <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .assumptions import check_assumption1, check_assumption2, check_assumption3
from .engine import SGLDConfig, make_stream, run_chain, run_coupled, run_replicates
from .experiments import (
    ExperimentConfig,
    ScalingRegime,
    Schedule,
    long_run_regime,
    run_theorem1,
    run_theorem2,
    short_run_regime,
    write_outputs,
)
from .measures import DrivingMeasure, coordinate_weights, lemma32_scaling_probe, tv_exact_measures
from .models import GaussianPosterior, gaussian_mean_model, make_dataset, save_dataset
from .tvmetrics import tv_empirical_two_sample, tv_empirical_vs_gaussian, tv_gaussian_exact, tv_moment_lower_bound



class UsageError(Exception):
    pass


def _floats(text: str, count: int) -> list[float]:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != count:
        raise argparse.ArgumentTypeError(f"expected {count} comma-separated numbers, got {text!r}")
    return [float(p) for p in parts]


def _ints(text: str) -> list[int]:
    return [int(float(p)) for p in text.split(",") if p.strip()]


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    return cfg


def _write_manifest(out: Path, command: str, seed, config: dict, files: list[str], schemas: dict) -> None:
    manifest = {"command": command, "version": __version__, "seed": seed, "config": config,
                "csv_schemas": schemas, "files": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _chain_config(args, n: int, rng) -> SGLDConfig:
    model = gaussian_mean_model()
    data = make_dataset(model, args.theta0, n, rng, args.seed)
    measure = DrivingMeasure.perturbed(n, args.M, args.delta) if args.delta > 0 else DrivingMeasure.uniform(n, args.M)
    initial = "posterior" if args.initial == "posterior" else float(args.initial)
    eps = args.eps if args.eps is not None else 1.0 / n
    return SGLDConfig(eps, args.M, args.T, data, measure, initial=initial, noise=args.noise, model=model)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    seed = 0 if args.seed is None else args.seed
    cfg = _chain_config(args, args.n, np.random.default_rng(make_stream(seed, 0, args.n)))
    traj = run_chain(cfg, make_stream(seed, 1))
    print(f"theta_0={float(traj.states[0])!r} theta_T={float(traj.states[-1])!r} T={traj.horizon}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_dataset(cfg.dataset, out / "dataset.csv")
        with (out / "trajectory.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "theta"])
            for t, th in enumerate(traj.states):
                w.writerow([t, repr(float(th))])
        files = ["dataset.csv", "trajectory.csv"]
        if args.replicates:
            thetas = run_replicates(cfg, args.replicates, seed, threads=args.threads or 1)
            with (out / "replicates.csv").open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["replicate", "theta_T"])
                for r, th in enumerate(thetas):
                    w.writerow([r, repr(float(th))])
            files.append("replicates.csv")
        _write_manifest(out, "simulate", seed, {k: v for k, v in vars(args).items() if k != "func"}, files,
                        {"trajectory.csv": ["t", "theta"], "replicates.csv": ["replicate", "theta_T"]})
    return 0


def cmd_couple(args) -> int:
    seed = 0 if args.seed is None else args.seed
    delta = args.delta
    args.delta = 0.0
    cfg = _chain_config(args, args.n, np.random.default_rng(make_stream(seed, 0, args.n)))
    run = run_coupled(cfg, delta, make_stream(seed, 1))
    fd = "none" if run.first_divergence is None else str(run.first_divergence)
    print(f"first_divergence = {fd}")
    print(f"theta_T (uniform) = {float(run.chain_mu.states[-1])!r}")
    print(f"theta_T (perturbed) = {float(run.chain_nu.states[-1])!r}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "coupled.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "theta_mu", "theta_nu"])
            for t, (a, b) in enumerate(zip(run.chain_mu.states, run.chain_nu.states)):
                w.writerow([t, repr(float(a)), repr(float(b))])
        config = {k: v for k, v in vars(args).items() if k != "func"}
        config["delta"] = delta
        _write_manifest(out, "couple", seed, config, ["coupled.csv"], {"coupled.csv": ["t", "theta_mu", "theta_nu"]})
    return 0


def _read_column(path) -> np.ndarray:
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                values.append(float(line.split(",")[-1]))
            except ValueError:
                continue  # header
    return np.asarray(values)


def cmd_tv(args) -> int:
    bins = "scott" if args.bins == "scott" else int(args.bins)
    if args.gaussian:
        m1, v1, m2, v2 = args.gaussian
        res = tv_gaussian_exact(GaussianPosterior(m1, v1), GaussianPosterior(m2, v2))
    elif args.moment:
        res = tv_moment_lower_bound(*args.moment)
    elif args.measures:
        n, M, delta = args.measures
        res = tv_exact_measures(int(n), int(M), delta)
    elif args.samples:
        if args.target is None:
            raise UsageError("--samples needs --target MEAN,VAR")
        res = tv_empirical_vs_gaussian(_read_column(args.samples), GaussianPosterior(*args.target), bins)
    elif args.two_sample:
        res = tv_empirical_two_sample(_read_column(args.two_sample[0]), _read_column(args.two_sample[1]), bins)
    else:
        raise UsageError("tv needs one of --gaussian, --moment, --measures, --samples, --two-sample")
    print(f"{res.value:.{args.digits}f}")
    if res.mc_error is not None:
        print(f"mc_error {res.mc_error:.{args.digits}f}  bins {res.bin_count}")
    return 0


def cmd_weights(args) -> int:
    w = coordinate_weights(args.n, args.delta)
    lines = [f"{i + 1},{float(w.weights[i])!r}" for i in range(w.n)]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "weights.csv").write_text("index,weight\n" + "\n".join(lines) + "\n")
    else:
        print("index,weight")
        print("\n".join(lines))
    return 0


def cmd_probe(args) -> int:
    rows = lemma32_scaling_probe(args.n, args.M, args.alphas)
    header = "alpha,delta,tv,delta_sqrtM_over_alpha2,saturated"
    lines = [f"{r.alpha!r},{r.delta!r},{r.tv!r},{r.constant!r},{int(r.saturated)}" for r in rows]
    print(header)
    print("\n".join(lines))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "probe_lemma32.csv").write_text(header + "\n" + "\n".join(lines) + "\n")
    return 0


def cmd_verify(args) -> int:
    if args.seed is None:
        raise UsageError("verify-assumptions requires --seed")
    cfg = _load_config(args.config)
    grid = args.n_grid or cfg.get("n_grid", [100, 1000, 10000])
    trials = args.trials or cfg.get("trials", 1000)
    reports = [
        check_assumption1(grid, math.log, min(trials, 20), args.gamma1, args.theta0, args.seed),
        check_assumption2(grid, lambda n: 1.0 / math.log(n), min(trials, 20), args.gamma2, args.theta0, args.seed),
        check_assumption3(args.theta0, grid, args.eta, trials, args.seed),
    ]
    text = "\n\n".join(r.summary() for r in reports)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        files = []
        for r in reports:
            name = f"assumption_{r.assumption_id}.csv"
            r.write_csv(out / name)
            files.append(name)
        (out / "summary.txt").write_text(text + "\n")
        _write_manifest(out, "verify-assumptions", args.seed,
                        {"n_grid": grid, "trials": trials, "gamma1": args.gamma1, "gamma2": args.gamma2,
                         "eta": args.eta, "theta0": args.theta0}, files + ["summary.txt"],
                        {"assumption_<id>.csv": ["n", "statistic", "threshold", "verdict", "..."]})
    return 0


_EXP_KEYS = ("theta0", "coupling", "noise", "slack", "bins", "block_size", "initial", "trajectories",
             "traj_stride", "min_fold")


def _experiment_config(args, theorem: int) -> ExperimentConfig:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise UsageError(f"theorem{theorem} requires --seed (or 'seed' in the config file)")
    base = short_run_regime() if theorem == 1 else long_run_regime()
    regime = ScalingRegime(
        base.name,
        str(cfg.get("T", base.T_of_n)),
        str(cfg.get("M", base.M_of_n)),
        str(cfg.get("omega", base.omega_of_n)),
        str(cfg.get("epsilon", base.epsilon_of_n)),
        [int(n) for n in (args.n_grid or cfg.get("n_grid", base.n_grid))],
    )
    for expr in (regime.T_of_n, regime.M_of_n, regime.omega_of_n, regime.epsilon_of_n):
        Schedule(expr)
    kw = {k: cfg[k] for k in _EXP_KEYS if k in cfg}
    unknown = set(cfg) - set(_EXP_KEYS) - {"seed", "T", "M", "omega", "epsilon", "n_grid", "replicates", "threads"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key in ("coupling", "noise", "trajectories", "bins"):
        value = getattr(args, key, None)
        if value is not None:
            kw[key] = value
    replicates = args.replicates or cfg.get("replicates", 10000 if theorem == 1 else 1000)
    threads = args.threads or cfg.get("threads", 1)
    return ExperimentConfig(regime, int(replicates), int(seed), threads=int(threads), **kw)


def _cmd_theorem(args, theorem: int) -> int:
    exp = _experiment_config(args, theorem)
    runner = run_theorem1 if theorem == 1 else run_theorem2
    records, paths = runner(exp, return_paths=True)
    for r in records:
        print(
            f"n={r.n:<7d} M={r.M:<4d} T={r.T:<7d} omega={r.omega:.4g}  Delta_n={r.delta_sum:.4f}  "
            f"gap={r.target_gap:.4f}  agree={r.coupling_agreement:.4f}  verdict={'yes' if r.verdict else 'no'}"
        )
    if args.out:
        write_outputs(records, args.out, exp, f"theorem{theorem}", paths)
        if args.plot:
            from .report import render_figures

            render_figures(args.out, f"{exp.regime.name} (seed {exp.master_seed})")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master RNG seed (required for experiments)")
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--replicates", type=int)
    common.add_argument("--threads", type=int, default=None)

    parser = argparse.ArgumentParser(prog="sgld-nfl", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def chain_opts(p, T=100):
        p.add_argument("--n", type=int, default=100)
        p.add_argument("--M", type=int, default=10)
        p.add_argument("--T", type=int, default=T)
        p.add_argument("--eps", type=float, help="step size (default 1/n)")
        p.add_argument("--delta", type=float, default=0.0)
        p.add_argument("--theta0", type=float, default=0.0)
        p.add_argument("--noise", choices=["literal", "sqrt_eps"], default="literal")
        p.add_argument("--initial", default="posterior", help="'posterior' or a number")

    p = sub.add_parser("simulate", parents=[common], help="run one SGLD chain")
    chain_opts(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("couple", parents=[common], help="run a coupled uniform/perturbed pair")
    chain_opts(p, T=50)
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("tv", parents=[common], help="total-variation computations")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--gaussian", type=lambda s: _floats(s, 4), metavar="M1,V1,M2,V2")
    g.add_argument("--moment", type=lambda s: _floats(s, 4), metavar="MP,SDP,MQ,SDQ")
    g.add_argument("--measures", type=lambda s: _floats(s, 3), metavar="N,M,DELTA")
    g.add_argument("--samples", metavar="FILE")
    g.add_argument("--two-sample", nargs=2, metavar="FILE")
    p.add_argument("--target", type=lambda s: _floats(s, 2), metavar="MEAN,VAR")
    p.add_argument("--bins", default="50")
    p.add_argument("--digits", type=int, default=5)
    p.set_defaults(func=cmd_tv)

    p = sub.add_parser("weights", parents=[common], help="per-coordinate weights of the perturbed measure")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("verify-assumptions", parents=[common], help="check the posterior and order-gap assumptions")
    p.add_argument("--n-grid", type=_ints)
    p.add_argument("--trials", type=int)
    p.add_argument("--gamma1", type=float, default=0.9)
    p.add_argument("--gamma2", type=float, default=0.35)
    p.add_argument("--eta", type=float, default=0.3)
    p.add_argument("--theta0", type=float, default=0.0)
    p.set_defaults(func=cmd_verify)

    for theorem, help_text in ((1, "short-run experiment"), (2, "long-run experiment")):
        p = sub.add_parser(f"theorem{theorem}", parents=[common], help=help_text)
        p.add_argument("--n-grid", type=_ints)
        p.add_argument("--coupling", choices=["maximal", "coordinate"])
        p.add_argument("--noise", choices=["literal", "sqrt_eps"])
        p.add_argument("--bins")
        p.add_argument("--trajectories", type=int, help="number of coupled pairs to export as traj_<n>.csv")
        p.add_argument("--plot", action="store_true", help="render PNG figures beside the CSVs")
        p.set_defaults(func=lambda a, t=theorem: _cmd_theorem(a, t))

    p = sub.add_parser("probe-lemma32", parents=[common], help="largest delta with TV(mu, nu) <= alpha")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--M", type=int, default=100)
    p.add_argument("--alphas", type=lambda s: [float(x) for x in s.split(",")], default=[0.05, 0.1, 0.2, 0.4])
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "bins", None) is not None and args.bins != "scott":
        try:
            args.bins = int(args.bins)
        except ValueError:
            parser.error(f"--bins must be an integer or 'scott' (got {args.bins!r})")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sgld-nfl: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"sgld-nfl: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
