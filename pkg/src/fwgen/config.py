"""Run configuration: one flat dataclass validated before any work starts."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .gateway import CASSETTE_MODES, Cassette, GatewayConfig, LlmGateway, OpenAICompatTransport
from .generation import DEFAULT_TOKEN_BUDGET, PROMPT_MODES
from .offline import OfflineTransport
from .refine import RefinementPolicy

logger = logging.getLogger(__name__)

GROUND_TRUTH_CHOICES = ("fw", "or", "fw+or")
PROVIDERS = ("openai", "offline")


@dataclass
class RunConfig:
    """Every pipeline knob in one place.

    Model credentials are read from the environment by the transport; they
    have no field here on purpose.
    """

    papers_dir: str = "data/papers"
    reviews_path: str = "data/reviews.jsonl"
    output_dir: str = "runs/default"
    seed: int = 13
    index_size: int = 100
    chunk_size: int = 512
    retrieval_k: int = 3
    weight_lexical: float = 0.5
    weight_dense: float = 0.5
    token_budget: int = DEFAULT_TOKEN_BUDGET
    mode: str = "top3_sections"
    ground_truth: str = "fw+or"
    quality_threshold: int = 3
    novelty_threshold: int = 7
    max_refinements: int = 1
    provider: str = "offline"
    base_url: str = "https://api.openai.com/v1"
    models: dict = field(default_factory=lambda: {"default": "gpt-4o-mini"})
    embed_model: str = "text-embedding-3-small"
    temperature: float = 1.0
    max_tokens: int = 512
    cassette_mode: str = "passthrough"
    cassette_path: str | None = None
    max_in_flight: int = 4
    workers: int = 1

    def validate(self) -> None:
        if self.mode not in PROMPT_MODES:
            raise ValueError(f"mode must be one of {PROMPT_MODES}, got {self.mode!r}")
        if self.ground_truth not in GROUND_TRUTH_CHOICES:
            raise ValueError(
                f"ground_truth must be one of {GROUND_TRUTH_CHOICES}, got {self.ground_truth!r}"
            )
        if self.provider not in PROVIDERS:
            raise ValueError(f"provider must be one of {PROVIDERS}, got {self.provider!r}")
        if self.cassette_mode not in CASSETTE_MODES:
            raise ValueError(
                f"cassette_mode must be one of {CASSETTE_MODES}, got {self.cassette_mode!r}"
            )
        if self.cassette_mode in ("record", "replay") and not self.cassette_path:
            raise ValueError(f"cassette_mode {self.cassette_mode!r} needs cassette_path")
        if abs(self.weight_lexical + self.weight_dense - 1.0) > 1e-9:
            raise ValueError("weight_lexical + weight_dense must equal 1")
        if min(self.weight_lexical, self.weight_dense) < 0:
            raise ValueError("retrieval weights must be non-negative")
        for name, minimum in (
            ("chunk_size", 1),
            ("retrieval_k", 1),
            ("token_budget", 1),
            ("max_tokens", 1),
            ("max_in_flight", 1),
            ("workers", 1),
            ("index_size", 0),
        ):
            if getattr(self, name) < minimum:
                raise ValueError(f"{name} must be at least {minimum}")
        if "default" not in self.models:
            raise ValueError("models must define a 'default' entry")
        # Threshold/iteration ranges share the refinement policy's rules.
        self.policy()

    def policy(self) -> RefinementPolicy:
        return RefinementPolicy(
            quality_threshold=self.quality_threshold,
            novelty_threshold=self.novelty_threshold,
            max_refinements=self.max_refinements,
        )

    def gateway_config(self) -> GatewayConfig:
        return GatewayConfig(
            models=dict(self.models),
            embed_model=self.embed_model,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            max_in_flight=self.max_in_flight,
        )


def load_config(path: str | Path) -> RunConfig:
    """Load a YAML config; unknown keys are errors, missing keys default."""
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"config root must be a mapping: {path}")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    return RunConfig(**raw)


def build_gateway(config: RunConfig) -> LlmGateway:
    """Wire transport and cassette per the config.

    Replay mode never constructs a transport, so replay runs need neither
    network access nor credentials.
    """
    cassette = None
    if config.cassette_mode in ("record", "replay"):
        cassette = Cassette(config.cassette_path, config.cassette_mode)
    transport = None
    if config.cassette_mode != "replay":
        if config.provider == "offline":
            transport = OfflineTransport()
        else:
            transport = OpenAICompatTransport(base_url=config.base_url)
    return LlmGateway(config.gateway_config(), transport=transport, cassette=cassette)
