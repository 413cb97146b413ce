# core/config_schema.py

from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SUPPORTED_RELATIONS = ["P19", "P20", "P27", "P101", "P495", "P740", "P1376"]
SCENARIOS = ["generic", "guesswork", "heuristics", "exact_fact"]
COMPONENTS = ["hidden", "mlp", "attn"]

CONFIG_VERSION = 1


class PopularityConfig(BaseModel):
    source: Literal["tsv", "http"] = "tsv"
    tsv_path: Optional[Path] = None
    year: int = Field(2019, ge=2015)
    timeout_seconds: float = Field(10.0, gt=0)
    project: str = "en.wikipedia"


class EntityCheckConfig(BaseModel):
    source: Literal["labels", "http"] = "labels"
    labels_path: Optional[Path] = None
    timeout_seconds: float = Field(10.0, gt=0)


class SyntheticConfig(BaseModel):
    subjects_per_relation: int = Field(20, gt=0)
    max_attempts: int = Field(50, gt=0)
    styles: Dict[str, List[str]] = {
        "P19": ["dnd_human", "russian", "french", "german", "korean", "japanese"],
        "P20": ["dnd_human", "russian", "french", "german", "korean", "japanese"],
        "P27": ["dnd_human", "russian", "french", "german", "korean", "japanese"],
        "P101": ["dnd_human", "russian", "french", "german", "korean", "japanese"],
        "P495": ["work"],
        "P740": ["organisation"],
        "P1376": ["city"],
    }


class StratifyConfig(BaseModel):
    mode: Literal["top", "bottom"]
    k: int = Field(..., gt=0)


class OutputConfig(BaseModel):
    output_dir: Path = Path("out")
    dataset_name: str = "dataset.jsonl"
    build_log_name: str = "build_log.json"
    trace_dir_name: str = "trace"
    aggregate_dir_name: str = "aggregate"
    audit_name: str = "audit_report.json"

    @property
    def dataset_path(self) -> Path:
        return self.output_dir / self.dataset_name

    @property
    def build_log_path(self) -> Path:
        return self.output_dir / self.build_log_name

    @property
    def trace_dir(self) -> Path:
        return self.output_dir / self.trace_dir_name

    @property
    def aggregate_dir(self) -> Path:
        return self.output_dir / self.aggregate_dir_name

    @property
    def audit_path(self) -> Path:
        return self.output_dir / self.audit_name


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config_version: int = CONFIG_VERSION
    weights_path: Optional[Path] = None
    vocab_path: Optional[Path] = None
    tokenizer: Literal["whitespace", "bytes"] = "whitespace"
    seed: int = 0

    # tracing
    n_noise_runs: int = Field(10, gt=0)
    noise_multiplier: float = Field(3.0, gt=0)
    component: Literal["hidden", "mlp", "attn"] = "mlp"
    window_radius: Optional[int] = Field(None, ge=0)
    zero_te_epsilon: float = Field(1e-12, gt=0)
    max_workers: int = Field(1, gt=0)

    # diagnostics thresholds
    confidence_threshold: int = Field(5, gt=0)
    topk_confidence: int = Field(3, gt=0)
    topk_bias: int = Field(10, gt=0)
    popularity_threshold: int = Field(1000, gt=0)
    lexical_min_fragment: int = Field(3, gt=0)
    gold_prefix_min_length: int = Field(3, gt=0)

    # aggregation
    normalized: bool = True
    ci_method: Literal["normal", "bootstrap"] = "normal"
    bootstrap_resamples: int = Field(1000, gt=0)
    stratify: Optional[StratifyConfig] = None

    # audit
    low_te_threshold: float = Field(0.4, gt=0)

    # dataset construction
    relations: List[str] = list(SUPPORTED_RELATIONS)
    mixture: Dict[str, int] = {}
    generic_samples: int = Field(1000, gt=0)
    popularity: PopularityConfig = PopularityConfig()
    entity_check: EntityCheckConfig = EntityCheckConfig()
    synthetic: SyntheticConfig = SyntheticConfig()
    outputs: OutputConfig = OutputConfig()

    @field_validator("relations")
    def relations_supported(cls, v):
        unknown = [r for r in v if r not in SUPPORTED_RELATIONS]
        if unknown:
            raise ValueError(f"unsupported relations: {unknown}")
        if not v:
            raise ValueError("at least one relation must be selected")
        return v

    @field_validator("mixture")
    def mixture_known_scenarios(cls, v):
        for scenario, count in v.items():
            if scenario not in SCENARIOS:
                raise ValueError(f"unknown scenario in mixture: {scenario}")
            if count < 0:
                raise ValueError(f"mixture count for {scenario} must be >= 0")
        return v

    @model_validator(mode="after")
    def version_supported(self):
        if self.config_version != CONFIG_VERSION:
            raise ValueError(f"config_version {self.config_version} is not supported (expected {CONFIG_VERSION})")
        return self

    def effective_window(self, component: Optional[str] = None) -> int:
        component = component or self.component
        if self.window_radius is not None:
            return self.window_radius
        return 0 if component == "hidden" else 5

    def echo(self) -> dict:
        """JSON-ready copy of the effective config for output manifests."""
        return self.model_dump(mode="json")
