"""Tests for configuration loading and logging setup."""

import logging

import orjson
import pytest

from ccikit.config import DetectorConfig, FineTunePreset, LlmEndpoint, PipelineConfig, config_hash, load_config
from ccikit.errors import ConfigError
from ccikit.logging_setup import setup_logging


@pytest.fixture
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield root
    root.handlers[:] = handlers
    root.setLevel(level)


class TestLoadConfig:
    def test_defaults(self):
        config = load_config()
        assert config.seed == 42
        assert [v.name for v in config.voters] == ["voter1", "voter2", "voter3"]
        assert config.detector.embed_dim == 64
        assert config.enhance.sampling_rate == 0.1
        assert config.gateway.fix_max_tokens == 256
        assert config.paths.reports_dir == "runs"

    def test_toml_file(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text('seed = 7\n[detector]\nembed_dim = 16\nattention_heads = 4\nlambda = 0.5\n[fixer]\nname = "fix"\nprovider = "replay"\n')
        config = load_config(str(path))
        assert config.seed == 7
        assert config.detector.embed_dim == 16
        assert config.detector.lambda_ == 0.5
        assert config.fixer.provider == "replay"

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text("[detector]\nepochs = 3\n")
        config = load_config(str(path), {"detector": {"epochs": 9}, "log_level": None})
        assert config.detector.epochs == 9
        assert config.log_level == "INFO"

    def test_environment(self, monkeypatch):
        monkeypatch.setenv("CCI_SEED", "11")
        monkeypatch.setenv("CCI_DETECTOR__BATCH_SIZE", "8")
        config = load_config()
        assert config.seed == 11
        assert config.detector.batch_size == 8

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(str(tmp_path / "nope.toml"))

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[detector\n")
        with pytest.raises(ConfigError, match="not valid TOML"):
            load_config(str(path))

    @pytest.mark.parametrize(
        "overrides",
        [
            {"detector": {"embed_dim": 10, "attention_heads": 4}},
            {"enhance": {"sampling_rate": 0.0}},
            {"voters": [{"name": "only"}]},
            {"log_format": "xml"},
        ],
    )
    def test_invalid_values(self, overrides):
        with pytest.raises(ConfigError):
            load_config(None, overrides)


class TestConfigPieces:
    def test_lambda_alias(self):
        assert DetectorConfig(**{"lambda": 0.3}).lambda_ == 0.3
        assert DetectorConfig(lambda_=0.4).lambda_ == 0.4

    def test_hash_is_stable(self):
        assert config_hash(PipelineConfig()) == config_hash(PipelineConfig())
        assert config_hash(PipelineConfig()) != config_hash(PipelineConfig(seed=1))

    def test_api_key_from_env(self, monkeypatch):
        endpoint = LlmEndpoint(name="v", api_key_env="CCI_TEST_KEY")
        monkeypatch.setenv("CCI_TEST_KEY", "secret")
        assert endpoint.api_key() == "secret"
        monkeypatch.delenv("CCI_TEST_KEY")
        with pytest.raises(ConfigError):
            endpoint.api_key()

    def test_no_key_needed(self):
        assert LlmEndpoint(name="local").api_key() is None

    def test_lora_scaling(self):
        assert FineTunePreset(epochs=1, batch_size=1, lora_r=16, lora_alpha=32).lora_scaling == 2.0


class TestSetupLogging:
    def test_json_format(self, restore_root_logger, capsys):
        setup_logging("DEBUG", "json")
        logging.getLogger("ccikit.test").info("stage-done n=%d", 3)
        line = capsys.readouterr().err.strip().splitlines()[-1]
        payload = orjson.loads(line)
        assert payload["level"] == "INFO"
        assert payload["logger"] == "ccikit.test"
        assert payload["message"] == "stage-done n=3"

    def test_replaces_handlers(self, restore_root_logger):
        setup_logging("WARNING", "text")
        setup_logging("WARNING", "text")
        assert len(restore_root_logger.handlers) == 1
        assert restore_root_logger.level == logging.WARNING

    def test_environment_defaults(self, restore_root_logger, monkeypatch):
        monkeypatch.setenv("LOG_LEVEL", "error")
        monkeypatch.delenv("LOG_FILE", raising=False)
        setup_logging()
        assert restore_root_logger.level == logging.ERROR

    def test_log_file(self, restore_root_logger, tmp_path):
        path = tmp_path / "logs" / "run.log"
        setup_logging("INFO", "text", log_file=str(path))
        logging.getLogger("ccikit.test").info("dedup-done groups=1")
        for h in restore_root_logger.handlers:
            h.flush()
        assert "dedup-done groups=1" in path.read_text()
        restore_root_logger.handlers[-1].close()

    def test_http_client_logs_are_quieted(self, restore_root_logger):
        setup_logging("INFO", "text")
        assert logging.getLogger("httpx").level == logging.WARNING
        setup_logging("DEBUG", "text")
        assert logging.getLogger("httpx").level == logging.DEBUG
