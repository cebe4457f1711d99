import json

import pytest
import yaml

from avgreen.experiments import ConfigError, ExperimentConfig, load_config, main, run_experiment


def test_defaults_merge():
    cfg = ExperimentConfig.from_dict({"kind": "bound-probe", "params": {"eps_values": [0.5]}})
    assert cfg.N == 256 and cfg.params["eps_values"] == [0.5] and cfg.params["random_weights"] is True


@pytest.mark.parametrize("data,field", [
    ({"kind": "mc-green", "delta": 1.5}, "delta"),
    ({"kind": "mc-green", "d": 2, "mu": 0.0}, "mu"),
    ({"kind": "kernel-decay", "params": {"symbol": "riesz", "s": -1.0}}, "params.s"),
    ({"kind": "bound-probe", "window": [8, 200]}, "window"),
    ({"kind": "feshbach-verify", "distribution": [{"value": 2, "prob": 1}]}, "distribution"),
    ({"kind": "partition-audit", "n_values": [9]}, "n_values"),
])
def test_validation_names_field(data, field):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(data)
    assert exc.value.field == field
    assert field in str(exc.value)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"kind": "bound-probe", "colour": "red"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"kind": "no-such-kind"})


def test_hash_ignores_output_location():
    a = ExperimentConfig.from_dict({"kind": "feshbach-verify"}, out="x")
    b = ExperimentConfig.from_dict({"kind": "feshbach-verify"}, out="y")
    c = ExperimentConfig.from_dict({"kind": "feshbach-verify", "seed": 3})
    assert a.hash() == b.hash() != c.hash()


@pytest.mark.parametrize("fmt", ["yaml", "json"])
def test_config_file_round_trip(tmp_path, fmt):
    cfg = ExperimentConfig.from_dict({"kind": "constraint-rewrite", "n_values": [6, 7]})
    path = tmp_path / f"c.{fmt}"
    dump = yaml.safe_dump if fmt == "yaml" else json.dumps
    path.write_text(dump(cfg.to_dict()))
    again = ExperimentConfig.from_dict(load_config(path))
    assert again.to_dict() == cfg.to_dict()


def test_run_is_deterministic(tmp_path):
    cfg = ExperimentConfig.from_dict({"kind": "feshbach-verify"}, out=str(tmp_path))
    r1, r2 = run_experiment(cfg), run_experiment(cfg)
    assert r1.passed and r1.experiment_id != r2.experiment_id
    m1 = (tmp_path / r1.experiment_id / "metrics.json").read_bytes()
    m2 = (tmp_path / r2.experiment_id / "metrics.json").read_bytes()
    assert m1 == m2
    lines = (tmp_path / "runs.jsonl").read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec["config_hash"] == cfg.hash() and rec["experiment_id"] == r1.experiment_id
    assert {"wall_time", "versions", "artifacts", "metrics"} <= set(rec)


def test_main_exit_codes(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["feshbach-verify", "--out", out]) == 0
    assert capsys.readouterr().out.startswith("PASS feshbach-verify")
    assert main(["feshbach-verify", "--out", out, "--set", "tolerances.discrepancy=-1"]) == 2
    assert main(["mc-green", "--out", out, "--set", "delta=3"]) == 1
    assert "delta" in capsys.readouterr().err


def test_main_reads_config_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("kind: constraint-rewrite\nn_values: [6]\nparams:\n  size_n: [64]\n  n_paths: 200\n")
    assert main(["constraint-rewrite", "--config", str(path), "--out", str(tmp_path)]) == 0
    assert main(["bound-probe", "--config", str(path), "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("kind,sets", [
    ("kernel-decay", ["N=64", "window=[2, 16]"]),
    ("series-term", ["N=64", "window=[2, 16]"]),
    ("partition-audit", ["n_values=[3, 4]", "params.decomposition_n=[3]"]),
    ("bound-probe", ["N=128", "n_values=[1, 2]", "params.eps_values=[1.0]"]),
])
def test_subcommands_run(tmp_path, kind, sets):
    args = [kind, "--out", str(tmp_path)]
    for s in sets:
        args += ["--set", s]
    assert main(args) in (0, 2)
    run = next(p for p in tmp_path.iterdir() if p.is_dir())
    assert (run / "config.json").exists() and (run / "metrics.json").exists()
