import pytest

from hklab_lib.config import (
    THREADS_ENV_VAR,
    HarnessConfig,
    LabConfig,
    SolverConfig,
    config_from_dict,
    load_lab_config,
    resolve_threads,
)
from hklab_lib.exceptions import LabValidationError


def test_packaged_defaults_match_dataclasses():
    assert load_lab_config() == LabConfig()


def test_user_file_is_merged_over_defaults(tmp_path):
    path = tmp_path / "lab.yaml"
    path.write_text("harness:\n  trials: 50\nsolver:\n  gap_tolerance: 1.0e-6\n")
    config = load_lab_config(path)
    assert config.harness.trials == 50
    assert config.harness.tol == HarnessConfig().tol
    assert config.solver.gap_tolerance == 1e-6


def test_unknown_key_is_named():
    with pytest.raises(LabValidationError) as excinfo:
        config_from_dict({"harness": {"trails": 10}})
    assert excinfo.value.field == "harness.trails"
    with pytest.raises(LabValidationError) as excinfo:
        config_from_dict({"plotting": {}})
    assert excinfo.value.field == "plotting"


@pytest.mark.parametrize(
    "section, key, value",
    [
        ("harness", "trials", "many"),
        ("harness", "tol", True),
        ("solver", "polish", "yes"),
        ("dynamics", "times", 0.5),
    ],
)
def test_wrong_types_are_rejected(section, key, value):
    with pytest.raises(LabValidationError) as excinfo:
        config_from_dict({section: {key: value}})
    assert excinfo.value.field == f"{section}.{key}"


def test_integers_are_accepted_for_floats():
    assert config_from_dict({"harness": {"tol": 0}}).harness.tol == 0.0


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(LabValidationError):
        load_lab_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("harness: [unclosed\n")
    with pytest.raises(LabValidationError):
        load_lab_config(bad)
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    with pytest.raises(LabValidationError):
        load_lab_config(listing)


def test_annealing_schedule_is_geometric():
    epsilons = SolverConfig(epsilon_start=0.1, epsilon_end=1e-3, epsilon_stages=3).epsilons()
    assert epsilons == pytest.approx([0.1, 0.01, 0.001])
    assert SolverConfig(epsilon_stages=1).epsilons() == [1e-4]


def test_thread_resolution(monkeypatch):
    monkeypatch.delenv(THREADS_ENV_VAR, raising=False)
    assert resolve_threads() == 1
    assert resolve_threads(3) == 3
    monkeypatch.setenv(THREADS_ENV_VAR, "4")
    assert resolve_threads() == 4
    assert resolve_threads(2) == 2
    monkeypatch.setenv(THREADS_ENV_VAR, "four")
    with pytest.raises(LabValidationError) as excinfo:
        resolve_threads()
    assert excinfo.value.field == THREADS_ENV_VAR
    with pytest.raises(LabValidationError):
        resolve_threads(0)
