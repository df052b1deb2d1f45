import json

import numpy as np
import pytest
import yaml

from hklab_lib.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, main
from hklab_lib.formats import write_kernel, write_measure
from hklab_lib.markov import MarkovKernel
from hklab_lib.space import DiscreteMeasure


@pytest.fixture
def two_point(tmp_path, capsys):
    assert main(["gen", "two-point", "--d", "1.0", "--out", str(tmp_path / "gen")]) == EXIT_OK
    capsys.readouterr()
    return tmp_path / "gen" / "space.json"


def _measure(tmp_path, name, weights):
    return str(write_measure(DiscreteMeasure(weights), tmp_path / name))


def _json_output(capsys):
    return json.loads(capsys.readouterr().out)


def test_gen_writes_space_and_manifest(tmp_path, capsys):
    out = tmp_path / "heat"
    assert main(["gen", "heat", "--spacing", "0.1", "--radius", "1.0", "--t", "0.1", "--out", str(out), "--json"]) == EXIT_OK
    report = _json_output(capsys)
    assert report["points"] == 21
    assert (out / "space.json").exists()
    assert (out / "kernel.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "gen"
    assert len(manifest["outputs"]) == 2


def test_dist_t0b_closed_form(tmp_path, two_point, capsys):
    mu0 = _measure(tmp_path, "mu0.txt", [0.5, 0.5])
    mu1 = _measure(tmp_path, "mu1.txt", [0.75, 0.25])
    out = tmp_path / "dist"
    code = main(["dist", str(two_point), mu0, mu1, "--metric", "t0b", "--b", "0.693147", "--out", str(out), "--json"])
    assert code == EXIT_OK
    report = _json_output(capsys)
    assert report["value"] == pytest.approx(0.3125, abs=1e-5)
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["inputs"]) == {str(two_point), mu0, mu1}
    assert json.loads((out / "dist.json").read_text())["manifest"] == "manifest.json"


def test_dist_w_ab_between_diracs(tmp_path, two_point, capsys):
    mu0 = _measure(tmp_path, "mu0.txt", [1.0, 0.0])
    mu1 = _measure(tmp_path, "mu1.txt", [0.0, 1.0])
    code = main(["dist", str(two_point), mu0, mu1, "--metric", "wab", "--a", "0.5", "--b", "2", "--out", str(tmp_path / "o"), "--json"])
    assert code == EXIT_OK
    assert _json_output(capsys)["value"] == pytest.approx(1.0 - np.cos(1.0), rel=1e-5)


def test_dist_hellinger_of_identical_measures(tmp_path, two_point, capsys):
    mu = _measure(tmp_path, "mu.txt", [0.3, 0.7])
    assert main(["dist", str(two_point), mu, mu, "--metric", "he2", "--out", str(tmp_path / "o"), "--json"]) == EXIT_OK
    assert _json_output(capsys)["value"] == 0.0


def test_dist_rejects_wrong_length_measure(tmp_path, two_point):
    mu0 = _measure(tmp_path, "mu0.txt", [1.0, 0.0])
    mu1 = _measure(tmp_path, "mu1.txt", [0.2, 0.3, 0.5])
    assert main(["dist", str(two_point), mu0, mu1, "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_dist_rejects_nonpositive_alpha(tmp_path, two_point):
    mu = _measure(tmp_path, "mu.txt", [0.5, 0.5])
    assert main(["dist", str(two_point), mu, mu, "--metric", "hk", "--alpha", "0", "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_constants_writes_witness(tmp_path, capsys):
    gen = tmp_path / "gen"
    main(["gen", "heat", "--spacing", "0.1", "--radius", "2.0", "--out", str(gen)])
    capsys.readouterr()
    out = tmp_path / "constants"
    code = main(["constants", str(gen / "space.json"), str(gen / "kernel.csv"), "--which", "rpi", "--no-curve", "--out", str(out), "--json"])
    assert code == EXIT_OK
    report = _json_output(capsys)
    assert not report["absent"]
    assert report["estimate"]["value"] > 0
    assert report["estimate"]["curve"] == []
    witness = np.loadtxt(out / "witness.csv")
    assert witness.size == 41


def test_verify_fails_without_rpi_constant(tmp_path, capsys):
    gen = tmp_path / "gen"
    main(["gen", "grid", "--spacing", "0.1", "--radius", "1.0", "--out", str(gen)])
    kernel = write_kernel(MarkovKernel.identity(21), tmp_path / "identity.csv")
    out = tmp_path / "verify"
    code = main(["verify", str(gen / "space.json"), str(kernel), "--estimate", "--suite", "hpi", "--out", str(out)])
    assert code == EXIT_FAILED
    bundle = json.loads((out / "verify.json").read_text())
    assert bundle["pass"] is False
    assert bundle["suites"][0]["id"] == "hpi"
    assert bundle["estimates"]["rpi"]["value"] is None


def test_verify_needs_a_constant_source(tmp_path):
    with pytest.raises(SystemExit):
        main(["verify", "space.json", "kernel.csv", "--suite", "hpi"])


@pytest.fixture
def quasi_file(tmp_path):
    path = tmp_path / "quasi.yaml"
    path.write_text(yaml.dump({
        "title": "small quasi",
        "experiment": "quasi",
        "t": 0.05,
        "shift": 1.0,
        "dynamics": {"grid_spacing": 0.01, "grid_radius": 4.0},
    }))
    return path


def test_simulate_quasi_experiment(tmp_path, quasi_file):
    out = tmp_path / "sim"
    assert main(["simulate", str(quasi_file), "--out", str(out), "--seed", "9"]) == EXIT_OK
    report = json.loads((out / "simulate.json").read_text())
    assert report["pass"] is True
    assert report["quasi"]["vacuous"] is True
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 9
    assert str(quasi_file) in manifest["inputs"]


def test_simulate_rejects_experiment_mismatch(tmp_path, quasi_file):
    assert main(["simulate", str(quasi_file), "--experiment", "w2decay", "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_simulate_needs_an_experiment(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert main(["simulate", "--preset", "no_such_preset", "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_bad_config_file_is_invalid_input(tmp_path, two_point):
    config = tmp_path / "lab.yaml"
    config.write_text("harness:\n  trails: 3\n")
    mu = _measure(tmp_path, "mu.txt", [0.5, 0.5])
    assert main(["dist", str(two_point), mu, mu, "--config", str(config), "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_ragged_space_file_is_invalid_input(tmp_path):
    space = tmp_path / "space.json"
    space.write_text(json.dumps({"dist": [[0, 1], [1]]}))
    mu = _measure(tmp_path, "mu.txt", [0.5, 0.5])
    assert main(["dist", str(space), mu, mu, "--metric", "he2", "--out", str(tmp_path / "o")]) == EXIT_INVALID
