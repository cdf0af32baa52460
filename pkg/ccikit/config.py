import hashlib
import logging
import os

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import orjson
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ccikit.errors import ConfigError


logger = logging.getLogger(__name__)

# Load secrets from a chosen env file (default .env). Example: ENV_FILE=.env.prod
load_dotenv(os.getenv("ENV_FILE", ".env"))


class LlmEndpoint(BaseModel):
    """One chat endpoint: a voter, the synthesis teacher, or the fixer backend.

    The API key is never stored here; ``api_key_env`` names the environment
    variable that holds it.
    """
    name: str
    provider: Literal["openai", "bedrock", "replay"] = Field(
        default="openai",
        description="'openai' = chat-completions over HTTP, 'bedrock' = AWS Bedrock Anthropic, 'replay' = transcript file only",
    )
    base_url: str = Field(default="http://localhost:8000/v1", description="Chat-completions base URL")
    model_id: str = Field(default="stub", description="Model identifier sent with every request")
    api_key_env: Optional[str] = Field(default=None, description="Env var holding the API key, e.g. CCI_VOTER1_API_KEY")
    timeout: float = Field(default=60.0, gt=0, description="Request timeout in seconds")
    max_retries: int = Field(default=3, ge=0, description="Retries after the first attempt")
    region_name: Optional[str] = Field(default=None, description="AWS region for provider=bedrock")
    replay_path: Optional[str] = Field(default=None, description="Replay file consulted before (or instead of) the network")

    def api_key(self) -> Optional[str]:
        if not self.api_key_env:
            return None
        key = os.getenv(self.api_key_env)
        if not key and self.provider == "openai":
            raise ConfigError(f"endpoint {self.name}: env var {self.api_key_env} is not set")
        return key


class DetectorConfig(BaseModel):
    embed_dim: int = Field(default=64, gt=0, description="d, also the combined Bi-GRU output width")
    gru_hidden: int = Field(default=64, gt=0)
    attention_heads: int = Field(default=4, gt=0)
    lambda_: float = Field(default=1.0, ge=0.0, alias="lambda")
    epochs: int = Field(default=10, ge=0)
    learning_rate: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=32, gt=0)
    vocab_size: int = Field(default=20_000, gt=0, description="Vocabulary cap, reserved tokens included")
    max_seq_len: int = Field(default=512, gt=0, description="Rendered edit scripts and comments are cut to this many tokens")
    seed: int = 42
    prob_clamp: float = Field(default=1e-7, gt=0.0, lt=0.5)
    similarity_mode: Literal["unsigned", "label"] = "unsigned"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    model_config = {"populate_by_name": True}

    @model_validator(mode="after")
    def heads_divide_dim(self) -> "DetectorConfig":
        if self.embed_dim % self.attention_heads:
            raise ValueError(f"embed_dim={self.embed_dim} not divisible by attention_heads={self.attention_heads}")
        return self


class EnhanceConfig(BaseModel):
    max_iterations: int = Field(default=10, ge=0)
    sampling_rate: float = Field(default=0.1, gt=0.0, le=1.0)
    convergence_delta: Optional[float] = Field(default=1e-3, description="Stop when D0 F1 gains less than this; None disables")
    generations_per_case: int = Field(default=2, gt=0)
    seed: int = 42


class KtoParams(BaseModel):
    beta: float = Field(default=0.1, gt=0.0)
    lambda_d: float = Field(default=1.0, gt=0.0)
    lambda_u: float = Field(default=1.0, gt=0.0)


class FineTunePreset(BaseModel):
    """Recorded LoRA fine-tuning hyperparameters; nothing in ccikit trains an LLM."""
    epochs: int
    batch_size: int
    learning_rate: float = 1e-5
    max_len: int = 2048
    lora_r: int = 8
    lora_alpha: int = 32
    lora_dropout: float = 0.05

    @property
    def lora_scaling(self) -> float:
        return self.lora_alpha / self.lora_r


class GatewayConfig(BaseModel):
    transcript_path: str = "runs/transcript.jsonl"
    max_in_flight: int = Field(default=4, ge=1)
    record_replay_to: Optional[str] = None
    vote_max_tokens: int = 16
    fix_max_tokens: int = 256
    synth_max_tokens: int = 2048


class PathsConfig(BaseModel):
    corpus_in: Optional[str] = None
    corpus_out: Optional[str] = None
    model: str = "runs/detector.json"
    reports_dir: str = "runs"
    shots: Optional[str] = None


def _default_voters() -> List[LlmEndpoint]:
    return [
        LlmEndpoint(name=f"voter{i}", api_key_env=f"CCI_VOTER{i}_API_KEY")
        for i in (1, 2, 3)
    ]


class PipelineConfig(BaseSettings):
    """Whole-pipeline configuration.

    Values come from the TOML config file, then ``CCI_*`` environment
    variables, then defaults; CLI flags are merged in by :func:`load_config`
    and win over everything.
    """
    model_config = SettingsConfigDict(env_prefix="CCI_", env_nested_delimiter="__", extra="ignore")

    paths: PathsConfig = Field(default_factory=PathsConfig)
    voters: List[LlmEndpoint] = Field(default_factory=_default_voters)
    teacher: LlmEndpoint = Field(default_factory=lambda: LlmEndpoint(name="teacher", api_key_env="CCI_TEACHER_API_KEY"))
    fixer: LlmEndpoint = Field(default_factory=lambda: LlmEndpoint(name="fixer", api_key_env="CCI_FIXER_API_KEY"))
    gateway: GatewayConfig = Field(default_factory=GatewayConfig)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)
    enhance: EnhanceConfig = Field(default_factory=EnhanceConfig)
    kto: KtoParams = Field(default_factory=KtoParams)
    finetune: FineTunePreset = Field(default_factory=lambda: FineTunePreset(epochs=10, batch_size=16))
    alignment: FineTunePreset = Field(default_factory=lambda: FineTunePreset(epochs=5, batch_size=32))
    seed: int = 42
    log_level: str = Field(default="INFO", description="DEBUG, INFO, WARNING, ERROR, CRITICAL")
    log_format: Literal["text", "json"] = "text"
    log_file: Optional[str] = Field(default=None, description="Also write log records to this file")

    @field_validator("voters")
    @classmethod
    def three_voters(cls, v: List[LlmEndpoint]) -> List[LlmEndpoint]:
        if len(v) != 3:
            raise ValueError(f"exactly 3 voters are required, got {len(v)}")
        return v


def _deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        elif value is not None:
            merged[key] = value
    return merged


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    data: Dict[str, Any] = {}
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    data = _deep_merge(data, overrides or {})
    try:
        config = PipelineConfig(**data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    logger.debug("config-loaded path=%s hash=%s", path, config_hash(config)[:12])
    return config


def config_hash(config: BaseModel) -> str:
    canonical = orjson.dumps(config.model_dump(mode="json", by_alias=True), option=orjson.OPT_SORT_KEYS)
    return hashlib.sha256(canonical).hexdigest()


def ensure_parent(path: str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    return target
