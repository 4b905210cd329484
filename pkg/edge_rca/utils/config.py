"""
Pipeline configuration: one YAML file, flag overrides, `--set dotted.key=value` pairs.
Every default lives here and is mirrored in configs/default.yaml.
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from edge_rca.utils.errors import ConfigError
from edge_rca.utils.specs import NOISE_LEVELS, NoiseProfile


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PathsConfig(_Strict):
    kb_dir: Optional[str] = "kb"
    input: Optional[str] = None
    output: Optional[str] = None
    transcripts: Optional[str] = None


class TimestampFormatConfig(_Strict):
    pattern: str
    fmt: str


class PerceptionConfig(_Strict):
    delta_sim: float = Field(default=0.85, ge=0.0, le=1.0)
    cache_capacity: int = Field(default=10_000, ge=1)
    promote_l2: bool = True
    embedding_dim: int = Field(default=256, ge=8)
    # None -> built-in formats (ISO with/without millis, HDFS yymmdd HHMMSS)
    timestamp_formats: Optional[List[TimestampFormatConfig]] = None
    # lines matching this are appended to the previous entry (stack traces)
    continuation_pattern: Optional[str] = r"^(\s+\S|at |Caused by:|\.\.\. \d+ more)"


class PenaltyConfig(_Strict):
    prior: float = Field(default=0.1, ge=0.0)
    rev: float = Field(default=10.0, ge=0.0)
    bg: float = Field(default=1.0, ge=0.0)


class SolveConfig(_Strict):
    lambda_w: float = Field(default=0.1, ge=0.0)
    lambda_a: float = Field(default=0.1, ge=0.0)
    theta_prune: float = Field(default=0.05, ge=0.0)
    max_outer: int = Field(default=100, ge=1)
    max_inner: int = Field(default=500, ge=1)
    h_tol: float = Field(default=1e-8, gt=0.0)
    inner_tol: float = Field(default=1e-7, gt=0.0)
    rho_init: float = Field(default=1.0, gt=0.0)
    rho_mult: float = Field(default=10.0, gt=1.0)
    rho_max: float = Field(default=1e16, gt=0.0)
    # rho grows when h does not shrink below this fraction of its previous value
    h_progress: float = Field(default=0.75, gt=0.0, le=1.0)
    variance_floor: float = Field(default=1e-8, gt=0.0)
    damp_factor: float = Field(default=0.9, gt=0.0, le=1.0)
    damp_band: float = Field(default=1.1, ge=1.0)
    direction_ratio: float = Field(default=1.25, ge=1.0)


class ReasoningConfig(_Strict):
    window_len_ms: int = Field(default=60_000, gt=0)
    # None -> tumbling windows (stride = window length)
    stride_ms: Optional[int] = Field(default=None, gt=0)
    use_priors: bool = True
    penalties_w: PenaltyConfig = Field(default_factory=PenaltyConfig)
    penalties_a: PenaltyConfig = Field(default_factory=PenaltyConfig)
    solve: SolveConfig = Field(default_factory=SolveConfig)
    pearson_threshold: float = Field(default=0.5, ge=0.0, le=1.0)


class ActionConfig(_Strict):
    top_k: int = Field(default=3, ge=1)
    top_n_cases: int = Field(default=3, ge=1)
    max_depth: int = Field(default=4, ge=1)
    max_paths: int = Field(default=5, ge=1)
    min_similarity: float = Field(default=0.90, ge=0.0, le=1.0)
    margin_ratio: float = Field(default=0.8, ge=0.0, le=1.0)
    synthesis_retries: int = Field(default=1, ge=0)


class ClientConfig(_Strict):
    backend: Literal["mock", "replay", "http"] = "mock"
    endpoint: str = "http://127.0.0.1:8000/v1/chat/completions"
    model: str = "local-fallback"
    api_key_env: str = "EDGE_RCA_API_KEY"
    timeout_s: float = Field(default=30.0, gt=0.0)
    retries: int = Field(default=2, ge=0)
    backoff_s: float = Field(default=1.0, ge=0.0)
    min_interval_s: float = Field(default=0.0, ge=0.0)
    max_tokens: int = Field(default=256, ge=1)
    record_path: Optional[str] = None
    replay_path: Optional[str] = None
    fixtures_path: Optional[str] = None


class EvalConfig(_Strict):
    levels: List[float] = Field(default_factory=lambda: list(NOISE_LEVELS))
    methods: List[str] = Field(default_factory=lambda: ["edge_pipeline", "drain_baseline"])
    datasets: List[str] = Field(default_factory=lambda: ["storage"])
    profile: NoiseProfile = "storage"
    seed: int = 42
    n_cases: int = Field(default=10, ge=0)
    memory_budget_mb: float = Field(default=2048.0, gt=0.0)
    sample_interval_ms: int = Field(default=100, gt=0)
    parallel: bool = False
    workers: int = Field(default=2, ge=1)
    manifest: Optional[str] = None
    # synthetic suites: windows per incident (window length from reasoning)
    windows_per_case: int = Field(default=24, ge=2)
    checkpoint_dir: Optional[str] = None
    dashboard: bool = False

    @field_validator("levels")
    @classmethod
    def _levels(cls, v: List[float]) -> List[float]:
        out = [round(x, 6) for x in v]
        bad = [x for x in out if x not in NOISE_LEVELS]
        if bad:
            raise ValueError(f"unknown noise levels {bad}; allowed {NOISE_LEVELS}")
        return out


class PipelineConfig(_Strict):
    log_level: str = "INFO"
    paths: PathsConfig = Field(default_factory=PathsConfig)
    perception: PerceptionConfig = Field(default_factory=PerceptionConfig)
    reasoning: ReasoningConfig = Field(default_factory=ReasoningConfig)
    action: ActionConfig = Field(default_factory=ActionConfig)
    client: ClientConfig = Field(default_factory=ClientConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    @field_validator("log_level", mode="before")
    @classmethod
    def _level(cls, v):
        level = str(v).upper()
        if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level {v!r}")
        return level

    @model_validator(mode="after")
    def _stride(self):
        stride = self.reasoning.stride_ms
        if stride is not None and stride > self.reasoning.window_len_ms:
            raise ValueError("stride_ms cannot exceed window_len_ms")
        return self

    def config_hash(self) -> str:
        """Provenance hash; paths and log level do not change results and are left out."""
        payload = self.model_dump(mode="json", exclude={"paths", "log_level"})
        raw = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]


def _set_dotted(tree: Dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        child = node.setdefault(k, {})
        if not isinstance(child, dict):
            raise ConfigError(f"cannot set {dotted}: {k} is not a section")
        node = child
    node[keys[-1]] = value


def parse_override(item: str) -> tuple:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    key, raw = item.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def load_config(path: Optional[str] = None, overrides: Iterable[str] = (),
                extra: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """
    Build the resolved config: YAML file (optional), then `extra` dotted
    values from explicit flags, then `--set` overrides. Unknown keys and
    out-of-range values raise ConfigError.
    """
    tree: Dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            loaded = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"config file {path} is not valid YAML: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        tree = loaded
    for key, value in (extra or {}).items():
        if value is not None:
            _set_dotted(tree, key, value)
    for item in overrides:
        key, value = parse_override(item)
        _set_dotted(tree, key, value)
    try:
        return PipelineConfig.model_validate(tree)
    except ValidationError as e:
        raise ConfigError(str(e)) from e
