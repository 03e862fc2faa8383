"""Run configuration: JSON file plus dotted-key command-line overrides.

Sections: model (architecture, losses, optimizer, seed), train, eval,
synth. Unknown keys are rejected everywhere; overrides like
`model.hidden_dim=64` win over the file.
"""

import json
from dataclasses import dataclass, field, fields

from .data import SyntheticTaskConfig
from .errors import ArgumentError, FormatError
from .model import ModelConfig


@dataclass
class TrainConfig:
    manifest: str = ""
    epochs: int = 10
    batch_size: int = 8
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ArgumentError("epochs and batch_size must be >= 1")


@dataclass
class EvalConfig:
    manifest: str = ""
    min_run: int = 1
    compute_eder: bool = True
    frame_seconds: float = 0.02  # metadata only; scoring is frame-wise

    def __post_init__(self):
        if self.min_run < 1:
            raise ArgumentError("min_run must be >= 1")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth: SyntheticTaskConfig = field(default_factory=SyntheticTaskConfig)
    synth_utterances: int = 100


_SECTION_TYPES = {
    "model": ModelConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
    "synth": SyntheticTaskConfig,
}


def _section_from_dict(section_cls, d: dict):
    if hasattr(section_cls, "from_dict"):
        return section_cls.from_dict(d)
    known = {f.name for f in fields(section_cls)}
    unknown = set(d) - known
    if unknown:
        raise ArgumentError(
            f"unknown {section_cls.__name__} keys: {sorted(unknown)}"
        )
    return section_cls(**d)


def run_config_from_dict(d: dict) -> RunConfig:
    unknown = set(d) - set(_SECTION_TYPES) - {"synth_utterances"}
    if unknown:
        raise ArgumentError(f"unknown config sections: {sorted(unknown)}")
    cfg = RunConfig()
    for name, cls in _SECTION_TYPES.items():
        if name in d:
            if not isinstance(d[name], dict):
                raise ArgumentError(f"config section {name!r} must be an object")
            setattr(cfg, name, _section_from_dict(cls, d[name]))
    if "synth_utterances" in d:
        cfg.synth_utterances = int(d["synth_utterances"])
        if cfg.synth_utterances < 1:
            raise ArgumentError("synth_utterances must be >= 1")
    return cfg


def _parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply KEY=VALUE overrides with dotted keys into the raw config dict."""
    for item in overrides:
        if "=" not in item:
            raise ArgumentError(f"override {item!r} is not KEY=VALUE")
        key, _, value = item.partition("=")
        parts = key.split(".")
        node = raw
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ArgumentError(f"override {key!r} descends into a scalar")
        node[parts[-1]] = _parse_override_value(value)
    return raw


def load_run_config(path=None, overrides=(), seed=None) -> RunConfig:
    """Build the validated RunConfig from file + overrides (+ --seed)."""
    raw = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: bad JSON config: {e}") from e
        if not isinstance(raw, dict):
            raise FormatError(f"{path}: config root must be an object")
    apply_overrides(raw, overrides)
    if seed is not None:
        raw.setdefault("model", {})["seed"] = seed
        raw.setdefault("synth", {})["seed"] = seed
    return run_config_from_dict(raw)
