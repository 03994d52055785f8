import filecmp
import json

import numpy as np
import pytest

from gradnetot import cli, gradnet as gn
from gradnetot.errors import ConfigError
from gradnetot.experiments import commands


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def same_csvs(a, b):
    names = sorted(p.name for p in a.glob("*.csv"))
    assert names and names == sorted(p.name for p in b.glob("*.csv"))
    return all(filecmp.cmp(a / n, b / n, shallow=False) for n in names)


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"iterations": 3, "learning_rate": 1.0})
    code, out, err = run(capsys, "gauss2d", "--config", cfg, "--out-dir", str(tmp_path / "o"))
    assert code != 0
    doc = json.loads(err)
    assert doc["error"] == "ConfigError" and "learning_rate" in doc["message"]


def test_bad_json_and_missing_paths(tmp_path, capsys):
    (tmp_path / "bad.json").write_text("{nope")
    code, _, err = run(capsys, "gauss2d", "--config", str(tmp_path / "bad.json"))
    assert code != 0 and json.loads(err)["error"] == "ConfigError"
    code, _, err = run(capsys, "morph", "--out-dir", str(tmp_path / "o"))
    assert code != 0 and "source" in json.loads(err)["message"]


def test_config_validation():
    with pytest.raises(ConfigError):
        commands.HighDimConfig(dims=[1, 2])
    with pytest.raises(ConfigError):
        commands.Gauss2DConfig(architectures=["ICNN"])
    with pytest.raises(ConfigError):
        commands.MorphConfig(source="a", target="b", sigma2_start=1e-6)
    with pytest.raises(ConfigError):
        cli.load_config("verify", iterations=5)


def test_gauss2d_is_reproducible(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"iterations": 5, "batch_size": 50, "n_test": 40, "n_pairs": 100})
    for name in ("a", "b"):
        code, out, _ = run(capsys, "gauss2d", "--config", cfg, "--seed", "3", "--out-dir", str(tmp_path / name))
        assert code == 0
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["config"]["iterations"] == 5
    assert all((tmp_path / "a").joinpath(p).exists() for p in manifest["outputs"])
    assert set(manifest["metrics"]) == {"baseline", "C", "M"}
    assert same_csvs(tmp_path / "a", tmp_path / "b")


def test_whitening_csv_rederived_from_manifest(tmp_path):
    cfg = commands.Gauss2DConfig(iterations=2, batch_size=20, n_test=30, n_pairs=10, architectures=["C"])
    manifest = commands.cmd_gauss2d(cfg, tmp_path)
    from gradnetot import densities as dn, discrete_ot as dot

    p = dn.GaussianDensity(manifest["config"]["mean"], manifest["config"]["cov"])
    data = np.loadtxt(tmp_path / "whitening.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(dot.whitening_map(p)(data[:, :2]), data[:, 2:])


def test_gauss_highdim_small(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"dims": [2, 3], "iterations": 3, "batch_size": 20, "n_test": 10})
    for name in ("a", "b"):
        code, _, _ = run(capsys, "gauss-highdim", "--config", cfg, "--out-dir", str(tmp_path / name))
        assert code == 0
    rows = (tmp_path / "a" / "mse.csv").read_text().splitlines()
    assert rows[0] == "dim,model,mse" and len(rows) == 5
    assert same_csvs(tmp_path / "a", tmp_path / "b")


def test_morph_small(tmp_path, capsys, mnist_path):
    cfg = write_json(tmp_path / "c.json", {"source": str(mnist_path), "target": str(mnist_path), "source_index": 0,
                                           "target_index": 2, "iterations": 3, "batch_size": 50, "n_samples": 60,
                                           "modules": 2, "width": 4, "epsilon": 0.05})
    for name in ("a", "b"):
        code, out, _ = run(capsys, "morph", "--config", cfg, "--out-dir", str(tmp_path / name))
        assert code == 0
    manifest = json.loads(out)
    assert manifest["metrics"]["sinkhorn_converged"]
    for t in ("0.00", "0.25", "0.50", "0.75", "1.00"):
        assert (tmp_path / "a" / f"frame_map_t{t}.pgm").exists()
        assert (tmp_path / "a" / f"frame_bary_t{t}.csv").exists()
    assert same_csvs(tmp_path / "a", tmp_path / "b")


def test_verify_checkpoints(tmp_path, capsys):
    rng = np.random.default_rng(0)
    for arch in ("M", "baseline"):
        net = gn.init(arch, 3, rng)
        for k, v in net.params.items():
            net.params[k] = v + rng.standard_normal(v.shape)
        ck = gn.save_checkpoint(net, tmp_path / f"{arch}.json")
        cfg = write_json(tmp_path / f"{arch}_cfg.json", {"checkpoint": str(ck), "n_points": 200})
        code, out, _ = run(capsys, "verify", "--config", cfg, "--out-dir", str(tmp_path / arch))
        assert code == 0
        m = json.loads(out)["metrics"]
        if arch == "M":
            assert m["max_asymmetry"] == 0.0 and m["min_eigenvalue"] > 0 and m["monotonicity_violations"] == 0
        else:
            assert m["max_asymmetry"] > 0


def test_verify_residuals_with_densities(tmp_path, capsys):
    ck = gn.save_checkpoint(gn.identity_gradnet_c(1, 0.5), tmp_path / "ck.json")
    dens = write_json(tmp_path / "d.json", {"source": {"type": "gaussian", "mean": [0.0], "cov": [[4.0]]},
                                            "target": {"type": "gaussian", "mean": [0.0], "cov": [[1.0]]}})
    cfg = write_json(tmp_path / "c.json", {"checkpoint": str(ck), "densities": dens})
    code, out, _ = run(capsys, "verify", "--config", cfg, "--out-dir", str(tmp_path / "o"))
    assert code == 0
    assert json.loads(out)["metrics"]["residual_mean"] < 1e-12


def test_verify_trained_one_dimensional_map(tmp_path, capsys):
    from gradnetot import densities as dn, training as tr

    p = dn.GaussianDensity([0.0], [[4.0]])
    q = dn.GaussianDensity([0.0], [[1.0]])
    net = gn.init("C", 1, np.random.default_rng(0), groups=2, width=8)
    tr.train(net, p, q, tr.TrainConfig(iterations=2000, batch_size=500), checkpoint_path=tmp_path / "ck.json")
    dens = write_json(tmp_path / "d.json", {"source": p.to_dict(), "target": q.to_dict()})
    cfg = write_json(tmp_path / "c.json", {"checkpoint": str(tmp_path / "ck.json"), "densities": dens})
    code, out, _ = run(capsys, "verify", "--config", cfg, "--out-dir", str(tmp_path / "o"))
    assert code == 0
    assert json.loads(out)["metrics"]["residual_mean"] <= 0.05
