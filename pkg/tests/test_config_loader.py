import pytest

from batteryttt.exceptions import ConfigError
from batteryttt.utils import config_loader
from batteryttt.utils.config_loader import (
    Config,
    get_config,
    get_grid_config,
    get_log_path,
    get_loss_config,
    get_model_config,
    get_optim_config,
    get_tta_config,
    load_config,
    reload_config,
)


class TestConfig:
    def test_dot_path(self):
        config = Config({"optim": {"tta": {"steps": 10}}})
        assert config.get("optim.tta.steps") == 10
        assert config.get("optim.tta.lr", 0.5) == 0.5
        assert config.get("optim.tta.steps.deeper") is None

    def test_section_must_be_mapping(self):
        config = Config({"grid": 3})
        assert Config({}).section("grid") == {}
        with pytest.raises(ConfigError):
            config.section("grid")


class TestLoading:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("model: [unclosed\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_env_override_and_reload(self, tmp_path, monkeypatch):
        path = tmp_path / "custom.yaml"
        path.write_text("optim:\n  tta:\n    steps: 3\n")
        monkeypatch.setenv(config_loader.CONFIG_ENV_VAR, str(path))
        assert get_config().get("optim.tta.steps") == 3
        assert get_optim_config().tta_steps == 3
        monkeypatch.delenv(config_loader.CONFIG_ENV_VAR)
        assert reload_config().get("optim.tta.steps") == 10

    def test_invalid_section_values(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("grid:\n  v_lower: 4.0\n  v_upper: 3.0\n")
        load_config(path)
        with pytest.raises(ConfigError):
            get_grid_config()


class TestShippedDefaults:
    def test_typed_sections(self, monkeypatch):
        monkeypatch.delenv(config_loader.CONFIG_ENV_VAR, raising=False)
        assert get_model_config().t_full == 128
        assert get_grid_config().n_points == 128
        optim = get_optim_config()
        assert optim.tta_steps == 10
        assert optim.momentum == 0.9
        assert optim.ridge == 1e-6
        assert get_loss_config().lam == 0.1
        tta = get_tta_config()
        assert (tta.mode, tta.ssl, tta.mask_ratio) == ("tta_full", "pg_ssl", 0.8)
        assert get_log_path().name == "runs.csv"
