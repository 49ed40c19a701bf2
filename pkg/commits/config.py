"""Pipeline configuration: dataclasses, presets, overrides and seed streams."""
import json
import zlib
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np
from django.conf import settings

from .exceptions import ConfigError

SPLIT_STRATEGIES = ('by_commit', 'by_project', 'by_timestamp')


@dataclass
class SplitSpec:
    strategy: str = 'by_commit'
    fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 13
    # by_timestamp: latest share per project held out for test
    holdout: float = 0.1
    # by_timestamp: latest share of the remaining train carved as validation
    valid_share: float = 0.1

    def __post_init__(self):
        self.fractions = tuple(float(f) for f in self.fractions)
        if self.strategy not in SPLIT_STRATEGIES:
            raise ConfigError(f"Unknown split strategy {self.strategy!r}")
        if len(self.fractions) != 3 or abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"Split fractions must be three values summing to 1, got {self.fractions}")
        if any(f < 0 for f in self.fractions):
            raise ConfigError("Split fractions must be non-negative")


@dataclass
class ModelConfig:
    embedding_size: int = 128
    hidden_size: int = 256
    dropout: float = 0.4
    max_paths: int = 80
    max_path_nodes: int = 12
    polarity_embeddings: str = 'separate'
    lr: float = 1e-4
    batch_size: int = 16
    epochs: int = 500
    patience: int = 20
    beam_width: int = 5
    max_len: int = 20
    min_freq: int = 2

    def __post_init__(self):
        if self.polarity_embeddings not in ('separate', 'shared'):
            raise ConfigError(f"polarity_embeddings must be separate or shared, got {self.polarity_embeddings!r}")
        if self.hidden_size % 2:
            raise ConfigError("hidden_size must be even (two encoder directions)")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    @classmethod
    def full_scale(cls, **overrides) -> 'ModelConfig':
        values = dict(batch_size=256, epochs=3000)
        values.update(overrides)
        return cls(**values)


@dataclass
class RankerConfig:
    embedding_size: int = 128
    kernels: int = 16
    kernel_size: int = 3
    pool: int = 2
    stride: int = 2
    max_diff_len: int = 128
    max_msg_len: int = 20
    lr: float = 1e-4
    batch_size: int = 16
    epochs: int = 200
    patience: int = 20
    valid_fraction: float = 0.1
    min_freq: int = 1


@dataclass
class PipelineConfig:
    dataset: str = ''
    output_dir: str = ''
    seed: int = 13
    workers: int = 1
    bleu_mode: str = 'sentence_avg'
    split: SplitSpec = field(default_factory=SplitSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    ranker: RankerConfig = field(default_factory=RankerConfig)

    def __post_init__(self):
        if self.bleu_mode not in ('sentence_avg', 'corpus'):
            raise ConfigError(f"bleu_mode must be sentence_avg or corpus, got {self.bleu_mode!r}")

    @classmethod
    def from_settings(cls) -> 'PipelineConfig':
        options = getattr(settings, 'COMMITS', {})
        seed = int(options.get('SEED', 13))
        model = ModelConfig.full_scale() if options.get('PRESET') == 'full' else ModelConfig()
        return cls(
            output_dir=str(options.get('OUTPUT_DIR', 'artifacts')),
            seed=seed,
            workers=int(options.get('WORKERS', 1)),
            split=SplitSpec(seed=seed),
            model=model,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)


def _merge(target: Any, values: Dict[str, Any], prefix: str = '') -> None:
    known = {f.name for f in fields(target)}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"Unknown config key {prefix + key!r}")
        current = getattr(target, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"Config key {prefix + key!r} expects an object")
            _merge(current, value, prefix=f"{prefix}{key}.")
        else:
            setattr(target, key, value)


def _revalidate(config: PipelineConfig) -> PipelineConfig:
    # rebuild so __post_init__ validation runs on the merged values
    try:
        return PipelineConfig(
            dataset=config.dataset,
            output_dir=config.output_dir,
            seed=int(config.seed),
            workers=int(config.workers),
            bleu_mode=config.bleu_mode,
            split=SplitSpec(**asdict(config.split)),
            model=ModelConfig(**asdict(config.model)),
            ranker=RankerConfig(**asdict(config.ranker)),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parse_override(item: str) -> Tuple[str, Any]:
    if '=' not in item:
        raise ConfigError(f"Override {item!r} is not of the form key=value")
    key, raw = item.split('=', 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(config_file: Optional[str] = None, overrides: Iterable[str] = ()) -> PipelineConfig:
    """Defaults from settings, then the JSON config file, then ``key=value`` overrides."""
    config = PipelineConfig.from_settings()
    if config_file:
        try:
            with open(config_file, encoding='utf-8') as handle:
                values = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"Cannot read config {config_file}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError("Config file must contain a JSON object")
        _merge(config, values)
    for item in overrides:
        key, value = parse_override(item)
        nested: Dict[str, Any] = {}
        cursor = nested
        parts = key.split('.')
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
        cursor[parts[-1]] = value
        _merge(config, nested)
    return _revalidate(config)


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent, reproducible random stream derived from the master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode('utf-8'))]))
