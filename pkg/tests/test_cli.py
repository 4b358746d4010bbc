import json
import subprocess
import sys

import pytest

from sgld_nfl.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_tv_gaussian(capsys):
    code, out, _ = run(capsys, "tv", "--gaussian", "0,1,1,1")
    assert code == 0 and out.strip() == "0.38292"


def test_tv_measures_and_moment(capsys):
    assert run(capsys, "tv", "--measures", "4,2,0.5", "--digits", "6")[1].strip() == "0.203125"
    assert run(capsys, "tv", "--moment", "0,1,2,1")[1].strip() == "0.50000"


def test_tv_samples(capsys, tmp_path, rng):
    f = tmp_path / "s.csv"
    f.write_text("x\n" + "\n".join(repr(float(v)) for v in rng.normal(size=2000)) + "\n")
    code, out, _ = run(capsys, "tv", "--samples", str(f), "--target", "0,1")
    assert code == 0 and "mc_error" in out
    code, out, _ = run(capsys, "tv", "--two-sample", str(f), str(f))
    assert out.splitlines()[0] == "0.00000"


def test_tv_samples_without_target(capsys, tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("1\n2\n")
    assert run(capsys, "tv", "--samples", str(f))[0] == 2


def test_tv_requires_mode(capsys):
    code, _, err = run(capsys, "tv")
    assert code == 2 and "usage" in err


def test_couple_zero_delta(capsys):
    code, out, _ = run(capsys, "couple", "--seed", "3", "--delta", "0", "--n", "50", "--M", "5", "--T", "20")
    assert code == 0 and out.splitlines()[0] == "first_divergence = none"


def test_couple_writes_csv(capsys, tmp_path):
    run(capsys, "couple", "--seed", "3", "--delta", "0.5", "--n", "20", "--M", "2", "--T", "10", "--out", str(tmp_path))
    lines = (tmp_path / "coupled.csv").read_text().splitlines()
    assert lines[0] == "t,theta_mu,theta_nu" and len(lines) == 12
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["delta"] == 0.5


def test_simulate_outputs(capsys, tmp_path):
    args = ["simulate", "--seed", "2", "--n", "30", "--M", "3", "--T", "5", "--out", str(tmp_path), "--replicates", "10"]
    assert run(capsys, *args)[0] == 0
    assert (tmp_path / "dataset.csv").read_text().startswith("# n=30")
    assert len((tmp_path / "replicates.csv").read_text().splitlines()) == 11
    first = (tmp_path / "trajectory.csv").read_bytes()
    run(capsys, *args, "--threads", "3")
    assert (tmp_path / "trajectory.csv").read_bytes() == first


def test_weights(capsys):
    code, out, _ = run(capsys, "weights", "--n", "4", "--delta", "0.5")
    assert out.splitlines() == ["index,weight", "1,0.125", "2,0.29166666666666663", "3,0.29166666666666663",
                                "4,0.29166666666666663"]


def test_probe(capsys):
    code, out, _ = run(capsys, "probe-lemma32", "--n", "1000", "--M", "100", "--alphas", "0.1")
    assert code == 0
    assert out.splitlines()[0].startswith("alpha,delta")
    assert float(out.splitlines()[1].split(",")[2]) == pytest.approx(0.1, abs=1e-6)


def test_verify_assumptions(capsys, tmp_path):
    code, out, _ = run(capsys, "verify-assumptions", "--seed", "1", "--n-grid", "100,1000", "--trials", "50",
                       "--out", str(tmp_path))
    assert code == 0 and "[A1]" in out and "[A3]" in out
    assert (tmp_path / "assumption_A2.csv").exists()


def test_verify_requires_seed(capsys):
    assert run(capsys, "verify-assumptions")[0] == 2


def test_theorem_requires_seed(capsys):
    code, _, err = run(capsys, "theorem1", "--n-grid", "100,400")
    assert code == 2 and "--seed" in err


def test_theorem1_small(capsys, tmp_path):
    code, out, _ = run(capsys, "theorem1", "--seed", "4", "--n-grid", "100,400", "--replicates", "300",
                       "--out", str(tmp_path), "--plot", "--trajectories", "1")
    assert code == 0 and len(out.splitlines()) == 2
    for name in ("records.csv", "plotdata_delta_n.csv", "manifest.json", "traj_100.csv", "summary.png"):
        assert (tmp_path / name).exists()


def test_theorem_config_file(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 2, "n_grid": [100, 400], "replicates": 200, "noise": "sqrt_eps"}))
    code, _, _ = run(capsys, "theorem1", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["noise"] == "sqrt_eps" and manifest["seed"] == 2


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 2, "bogus": 1}))
    assert run(capsys, "theorem1", "--config", str(cfg))[0] == 2


def test_bad_regime_is_runtime_error(capsys):
    code, _, err = run(capsys, "theorem2", "--seed", "1", "--n-grid", "100")
    assert code == 1 and "error" in err


def test_unknown_subcommand():
    proc = subprocess.run([sys.executable, "-m", "sgld_nfl", "nope"], capture_output=True, text=True)
    assert proc.returncode == 2


def test_example_configs_parse():
    from pathlib import Path

    from sgld_nfl.cli import _experiment_config, build_parser

    root = Path(__file__).resolve().parents[1] / "configs"
    for name, cmd in (("short_run.json", "theorem1"), ("long_run.json", "theorem2")):
        args = build_parser().parse_args([cmd, "--config", str(root / name)])
        exp = _experiment_config(args, 1 if cmd == "theorem1" else 2)
        assert exp.master_seed == 1
