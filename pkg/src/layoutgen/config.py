"""Pipeline configuration: TOML file plus command-line overrides.

A config file is optional; every field has a default mirroring the standard
hyper-parameters (10 exemplars, 10 samples, temperature 0.7, rank weights
0.2/0.2/0.6). CLI flags override file values via dotted keys, e.g.
"generation.num_samples".
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import DataError, InvalidInputError, UsageError
from .gateway import GenerationParams, ProviderConfig
from .geometry import CanvasSpec, DOMAIN_PRESETS, DomainConfig, get_domain
from .metrics import SIZE_RELATION_TOLERANCE
from .ranker import RankWeights
from .saliency import DEFAULT_THRESHOLD
from .serde import TaskKind

#: Completion provider choices. "echo" and "noisy" need no network or files.
COMPLETION_KINDS = ("openai", "replay", "echo", "noisy")
EMBEDDING_KINDS = ("openai", "hash")


@dataclass(frozen=True)
class ProviderSettings:
    """Which completion/embedding backends to use and how to reach them."""

    kind: str = "echo"
    embedding_kind: str = "hash"
    replay_file: str = ""
    embedding_cache: str = ""
    http: ProviderConfig = field(default_factory=ProviderConfig)

    def __post_init__(self) -> None:
        if self.kind not in COMPLETION_KINDS:
            raise UsageError(
                f"provider.kind must be one of {COMPLETION_KINDS}, got {self.kind!r}"
            )
        if self.embedding_kind not in EMBEDDING_KINDS:
            raise UsageError(
                f"provider.embedding_kind must be one of {EMBEDDING_KINDS}, "
                f"got {self.embedding_kind!r}"
            )
        if self.kind == "replay" and not self.replay_file:
            raise UsageError("provider.kind = 'replay' needs provider.replay_file")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the four CLI verbs need, resolved and validated."""

    task: TaskKind = TaskKind.GEN_T
    domain: DomainConfig = field(default_factory=lambda: DOMAIN_PRESETS["rico"])
    index_path: str = "index.json"
    output_dir: str = "out"
    generation: GenerationParams = field(default_factory=GenerationParams)
    rank_weights: RankWeights = field(default_factory=RankWeights)
    include_headers: bool = True
    generation_cue: str = ""
    saliency_threshold: float = DEFAULT_THRESHOLD
    size_relation_tolerance: float = SIZE_RELATION_TOLERANCE
    image_root: str = ""
    provider: ProviderSettings = field(default_factory=ProviderSettings)


def _parse_domain(raw: object) -> DomainConfig:
    if isinstance(raw, str):
        try:
            return get_domain(raw)
        except InvalidInputError as exc:
            # a typo'd preset name is a usage mistake, not bad data
            raise UsageError(str(exc)) from None
    if isinstance(raw, dict):
        try:
            width, height = raw["canvas"]
            return DomainConfig(
                name=str(raw["name"]),
                canvas=CanvasSpec(int(width), int(height)),
                type_vocabulary=tuple(str(t) for t in raw["types"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"custom domain table is malformed: {exc}") from exc
    raise DataError("domain must be a preset name or a table with name/canvas/types")


def _section(data: dict, name: str) -> dict:
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise DataError(f"config section [{name}] must be a table")
    return dict(raw)


def _build(data: dict) -> PipelineConfig:
    known = {
        "task",
        "domain",
        "index",
        "output_dir",
        "image_root",
        "generation",
        "ranker",
        "prompt",
        "saliency",
        "metrics",
        "provider",
    }
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")

    base = PipelineConfig()
    try:
        task = TaskKind(data["task"]) if "task" in data else base.task
    except ValueError:
        raise UsageError(
            f"unknown task {data['task']!r}; expected one of "
            f"{[t.value for t in TaskKind]}"
        ) from None
    domain = _parse_domain(data["domain"]) if "domain" in data else base.domain

    gen_kwargs = _section(data, "generation")
    rank_kwargs = _section(data, "ranker")
    prompt_kwargs = _section(data, "prompt")
    saliency_kwargs = _section(data, "saliency")
    metric_kwargs = _section(data, "metrics")
    provider_kwargs = _section(data, "provider")

    http_fields = {
        "base_url",
        "model",
        "embedding_model",
        "api_key_env",
        "completion_path",
        "embedding_path",
    }
    http_kwargs = {k: provider_kwargs.pop(k) for k in list(provider_kwargs) if k in http_fields}

    try:
        generation = GenerationParams(**gen_kwargs)
        rank_weights = RankWeights(**rank_kwargs)
        provider = ProviderSettings(http=ProviderConfig(**http_kwargs), **provider_kwargs)
    except TypeError as exc:
        raise UsageError(f"bad config value: {exc}") from exc

    for key in prompt_kwargs:
        if key not in {"include_headers", "generation_cue"}:
            raise UsageError(f"unknown [prompt] key {key!r}")
    for key in saliency_kwargs:
        if key not in {"threshold"}:
            raise UsageError(f"unknown [saliency] key {key!r}")
    for key in metric_kwargs:
        if key not in {"size_relation_tolerance"}:
            raise UsageError(f"unknown [metrics] key {key!r}")

    return PipelineConfig(
        task=task,
        domain=domain,
        index_path=str(data.get("index", base.index_path)),
        output_dir=str(data.get("output_dir", base.output_dir)),
        generation=generation,
        rank_weights=rank_weights,
        include_headers=bool(prompt_kwargs.get("include_headers", base.include_headers)),
        generation_cue=str(prompt_kwargs.get("generation_cue", base.generation_cue)),
        saliency_threshold=float(saliency_kwargs.get("threshold", base.saliency_threshold)),
        size_relation_tolerance=float(
            metric_kwargs.get("size_relation_tolerance", base.size_relation_tolerance)
        ),
        image_root=str(data.get("image_root", base.image_root)),
        provider=provider,
    )


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Read a TOML config file and apply dotted-key overrides on top.

    Overrides use the same keys as the file with dots for nesting
    ("generation.seed", "provider.kind"); values must already have the
    right type. Passing path=None starts from an empty config.
    """
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config file {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"{path}: invalid TOML: {exc}") from exc
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        target = data
        *parents, leaf = dotted.split(".")
        for part in parents:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise UsageError(f"config key {dotted!r} clashes with a non-table value")
        target[leaf] = value
    return _build(data)


def with_seed(config: PipelineConfig, seed: int) -> PipelineConfig:
    """A copy of the config with a different base generation seed."""
    return replace(config, generation=replace(config.generation, seed=seed))
