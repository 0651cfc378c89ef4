"""Run configuration and the flat ``key = value`` config file format.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Every key has a default; unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class DistillConfig:
    """Scalars of the data-free distillation loop."""

    tau: float = 1.0
    lam: float = 1.0
    delta: float = 0.01
    gamma: float = 0.1
    batch_size: int = 128
    noise_dim: int = 64
    epochs: int = 30
    steps_per_epoch: int = 25
    generator_steps: int = 0
    student_steps: int = 0
    lr_student: float = 0.1
    lr_generator: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_milestones: tuple[float, ...] = (0.6, 0.85)
    lr_decay: float = 0.1
    early_stop_patience: int = 0
    student_kl_weight: float = 0.0
    seed: int = 1

    def __post_init__(self):
        self.lr_milestones = tuple(float(m) for m in self.lr_milestones)

    @property
    def k_g(self) -> int:
        return self.generator_steps or self.steps_per_epoch

    @property
    def k_s(self) -> int:
        return self.student_steps or self.steps_per_epoch

    def validate(self, require_objective: bool = True) -> "DistillConfig":
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        for name in ("lam", "delta", "gamma", "student_kl_weight", "weight_decay"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if require_objective and self.delta == 0 and self.gamma == 0:
            raise ConfigError("delta and gamma are both zero: the generator has no objective")
        for name in ("batch_size", "noise_dim", "steps_per_epoch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 for batch statistics")
        if self.epochs < 0 or self.generator_steps < 0 or self.student_steps < 0:
            raise ConfigError("epoch and step counts must be nonnegative")
        if not (self.lr_student > 0 and self.lr_generator > 0):
            raise ConfigError("learning rates must be positive")
        return self

    def student_lr_at(self, epoch: int) -> float:
        """Step schedule: multiply by ``lr_decay`` at each milestone fraction of the budget."""
        lr = self.lr_student
        for m in self.lr_milestones:
            if epoch >= int(round(m * self.epochs)):
                lr *= self.lr_decay
        return lr


@dataclass
class ExperimentConfig:
    task: str = "blobs"
    num_classes: int = 4
    samples_per_class: int = 500
    test_samples_per_class: int = 250
    input_dim: int = 64
    image_size: int = 16
    image_channels: int = 1
    noise: float = 0.12
    data_seed: int = 0
    teacher_seed: int = 0
    teacher_epochs: int = 30
    teacher_lr: float = 0.05
    teacher_batch_size: int = 64
    teacher_width: float = 1.0
    student_width: float = 0.5
    generator_hidden: int = 64
    generator_upsample: str = "nearest"
    output_dir: str = "runs"
    seeds: tuple[int, ...] = (1, 2, 3)
    ablate_deltas: tuple[float, ...] = (0.0, 0.01)
    ablate_gammas: tuple[float, ...] = (0.0, 0.1)
    distill: DistillConfig = field(default_factory=DistillConfig)

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        self.ablate_deltas = tuple(float(s) for s in self.ablate_deltas)
        self.ablate_gammas = tuple(float(s) for s in self.ablate_gammas)

    @property
    def input_shape(self) -> tuple[int, ...]:
        if self.task == "tiny-images":
            return (self.image_channels, self.image_size, self.image_size)
        if self.task == "rings":
            return (2,)
        return (self.input_dim,)

    def validate(self) -> "ExperimentConfig":
        if self.task not in ("blobs", "rings", "tiny-images"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        self.distill.validate(require_objective=False)
        return self

    def with_distill(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, distill=dataclasses.replace(self.distill, **changes))


# -- flat text format ----------------------------------------------------------

_ALIASES = {"lambda": "lam"}


def _field_table() -> dict[str, tuple[object, dataclasses.Field]]:
    table = {}
    for f in fields(ExperimentConfig):
        if f.name != "distill":
            table[f.name] = (ExperimentConfig, f)
    for f in fields(DistillConfig):
        table[f.name] = (DistillConfig, f)
    return table


def _coerce(raw, f: dataclasses.Field, owner):
    hint = typing.get_type_hints(owner)[f.name]
    text = str(raw).strip()
    try:
        if hint is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is str:
            return text
        if typing.get_origin(hint) is tuple:
            elem = typing.get_args(hint)[0]
            return tuple(elem(p.strip()) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"{f.name}: cannot parse {text!r} as {hint}") from None
    raise ConfigError(f"{f.name}: unsupported type {hint}")


def parse_config_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[_ALIASES.get(key, key)] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            values[_ALIASES.get(key, key)] = value
    table = _field_table()
    unknown = sorted(set(values) - set(table))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    top, inner = {}, {}
    for key, raw in values.items():
        owner, f = table[key]
        target = top if owner is ExperimentConfig else inner
        target[key] = _coerce(raw, f, owner)
    return ExperimentConfig(distill=DistillConfig(**inner), **top).validate()


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(), overrides)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    """Fully resolved config in the same text format."""
    lines = []
    for f in fields(ExperimentConfig):
        if f.name != "distill":
            lines.append(f"{f.name} = {_format(getattr(cfg, f.name))}")
    for f in fields(DistillConfig):
        key = "lambda" if f.name == "lam" else f.name
        lines.append(f"{key} = {_format(getattr(cfg.distill, f.name))}")
    return "\n".join(lines) + "\n"
