import pytest
import yaml

from hklab_lib.exceptions import LabValidationError
from hklab_lib.preset_manager import PresetManager


@pytest.fixture
def manager() -> PresetManager:
    return PresetManager()


def test_packaged_presets_are_discovered(manager):
    ids = [preset.id for preset in manager.discover_presets()]
    assert ids == ["gaussian_quasi", "quadratic_hedecay", "quadratic_w2decay", "quartic_box"]
    assert "defaults" not in ids


@pytest.mark.parametrize("preset_id", ["gaussian_quasi", "quadratic_hedecay", "quadratic_w2decay", "quartic_box"])
def test_packaged_presets_validate(manager, preset_id):
    result = manager.validate_preset(preset_id)
    assert result.is_valid, result.errors


def test_quartic_preset_warns_about_its_box(manager):
    result = manager.validate_preset("quartic_box")
    assert any("reflecting box" in w for w in result.warnings)


def test_loading_a_preset_gives_an_experiment(manager):
    spec = manager.load_preset("quadratic_w2decay")
    assert spec.experiment == "w2decay"
    assert spec.potential == {"kind": "quadratic", "a": 1.0}
    assert spec.times == [0.25, 0.5, 1.0]


def test_unknown_preset(manager):
    with pytest.raises(LabValidationError) as excinfo:
        manager.load_preset("no_such_preset")
    assert "quadratic_w2decay" in str(excinfo.value)
    assert manager.get_preset_info("no_such_preset") is None
    assert not manager.validate_preset("no_such_preset").is_valid


@pytest.mark.parametrize("experiment", ["w2decay", "hedecay", "quasi"])
def test_templates_validate(tmp_path, experiment):
    manager = PresetManager(tmp_path)
    path = manager.create_preset_template("fresh", "Fresh run", experiment=experiment)
    assert path == tmp_path / "fresh.yaml"
    result = manager.validate_preset("fresh")
    assert result.is_valid, result.errors
    assert manager.get_preset_info("fresh").experiment == experiment


def test_template_refuses_to_overwrite(tmp_path):
    manager = PresetManager(tmp_path)
    manager.create_preset_template("fresh", "Fresh run")
    with pytest.raises(LabValidationError):
        manager.create_preset_template("fresh", "Again")
    with pytest.raises(LabValidationError):
        manager.create_preset_template("other", "Other", experiment="mixing")


def test_validation_reports_errors_and_unknown_keys(tmp_path):
    (tmp_path / "broken.yaml").write_text(yaml.dump({"title": "Broken", "experiment": "w2decay", "colour": "red"}))
    result = PresetManager(tmp_path).validate_preset("broken")
    assert not result.is_valid
    assert any("potential" in e for e in result.errors)
    assert "Unknown key ignored: colour" in result.warnings
    assert "Missing 'description' field" in result.warnings


def test_discovery_skips_unreadable_files(tmp_path):
    (tmp_path / "bad.yaml").write_text("title: [unclosed\n")
    (tmp_path / "list.yaml").write_text("- 1\n")
    assert PresetManager(tmp_path).discover_presets() == []
