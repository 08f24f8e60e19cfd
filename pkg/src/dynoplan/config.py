"""Experiment configuration files.

A config is a YAML mapping whose sections mirror the dataclasses used by the
pipeline. Every key has a default, unknown keys are rejected with the line
and dotted key path of the offender, and ``dump_config`` writes a file that
loads back to an equal config.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from dynoplan.assembly import AssemblyTask, InterferenceConfig
from dynoplan.chain import DEFAULT_BETAS, FIRST, GOAL, NoisyModelConfig, make_chain_options
from dynoplan.errors import ConfigError
from dynoplan.goal import GoalFitConfig
from dynoplan.planner import PlannerConfig
from dynoplan.regions import EmConfig

TASKS = ("chain", "assembly")


@dataclass(frozen=True)
class PlannerSettings:
    """PlannerConfig fields minus the seed, which is derived per episode."""

    horizon: int = 10
    rollouts: int = 64
    goal_success_threshold: float = 0.95
    max_planning_steps: int = 50
    max_option_steps: int = 1000
    tie_break: str = "lowest-id"
    tie_tolerance: float = 1e-9

    def __post_init__(self):
        PlannerConfig(**dataclasses.asdict(self))


@dataclass(frozen=True)
class ChainSettings:
    betas: tuple = DEFAULT_BETAS
    epsilon: float = 0.2
    start: int = 1
    goal: str = "noisy"  # noisy: true progress with misprediction; fitted: k-NN on walks
    demos: int = 1

    def __post_init__(self):
        if self.goal not in ("noisy", "fitted"):
            raise ValueError(f"goal must be 'noisy' or 'fitted', got {self.goal!r}")
        if self.demos < 1:
            raise ValueError("demos must be >= 1")
        if not FIRST <= self.start <= GOAL:
            raise ValueError(f"start must lie in [{FIRST}, {GOAL}]")
        make_chain_options(self.betas)
        NoisyModelConfig(self.epsilon)


@dataclass(frozen=True)
class AssemblySettings:
    task: AssemblyTask = AssemblyTask()
    interference: InterferenceConfig = InterferenceConfig()
    demos: int = 30
    heldout_demos: int = 10
    demo_arrival_prob: float = 0.1
    demos_path: str = ""  # read demonstrations from here instead of generating them
    min_transitions: int = 50
    dynamics_ridge: float = 1e-2

    def __post_init__(self):
        if self.demos < 1 or self.heldout_demos < 1:
            raise ValueError("demo counts must be >= 1")
        if not 0.0 <= self.demo_arrival_prob <= 1.0:
            raise ValueError("demo_arrival_prob must lie in [0, 1]")
        if not self.dynamics_ridge > 0:
            raise ValueError("dynamics_ridge must be positive")


@dataclass(frozen=True)
class RegionSettings:
    components: int | None = None  # None: three per option
    max_iter: int = 200
    tol: float = 1e-6
    reg_covar: float = 1e-4
    init: str = "kmeans++"
    seed: int = 0
    floor_quantile: float = 0.0  # 0: each region encloses all of its own demo states

    def __post_init__(self):
        if self.components is not None and self.components < 1:
            raise ValueError("components must be >= 1")
        if not 0.0 <= self.floor_quantile <= 1.0:
            raise ValueError("floor_quantile must lie in [0, 1]")
        self.em(1)  # validates the EM fields

    def em(self, n_options: int) -> EmConfig:
        m = 3 * n_options if self.components is None else self.components
        return EmConfig(m, self.max_iter, self.tol, self.reg_covar, self.init, self.seed)


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "chain"
    seed: int = 0
    episodes: int = 100
    output_dir: str = "runs/latest"
    planner: PlannerSettings = PlannerSettings()
    chain: ChainSettings = ChainSettings()
    assembly: AssemblySettings = AssemblySettings()
    goal_fit: GoalFitConfig = GoalFitConfig()
    regions: RegionSettings = RegionSettings()

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")


def planner_config(cfg: ExperimentConfig, seed: int) -> PlannerConfig:
    return PlannerConfig(**dataclasses.asdict(cfg.planner), seed=seed)


# --- loading ---------------------------------------------------------------

def _line(node) -> int:
    return node.start_mark.line + 1


def _scalar(node, key: str):
    try:
        return yaml.safe_load(yaml.serialize(node))
    except yaml.YAMLError as exc:  # pragma: no cover - composed nodes re-serialize
        raise ConfigError(str(exc), _line(node), key) from None


def _coerce(value, default, node, key: str):
    """Check ``value`` against the type of the field's default."""
    if default is None:
        if value is None or (isinstance(value, (int, float)) and not isinstance(value, bool)):
            return value
        raise ConfigError(f"expected a number or null, got {value!r}", _line(node), key)
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"expected true or false, got {value!r}", _line(node), key)
    if isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"expected an integer, got {value!r}", _line(node), key)
    if isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"expected a number, got {value!r}", _line(node), key)
    if isinstance(default, str):
        if isinstance(value, str):
            return value
        raise ConfigError(f"expected a string, got {value!r}", _line(node), key)
    if isinstance(default, tuple):
        if isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                           for v in value):
            return tuple(float(v) for v in value)
        raise ConfigError(f"expected a list of numbers, got {value!r}", _line(node), key)
    raise ConfigError(f"unsupported field type for {value!r}", _line(node), key)  # pragma: no cover


def _build(cls, node, path: str):
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("expected a mapping", _line(node), path or None)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    kwargs: dict[str, Any] = {}
    for key_node, value_node in node.value:
        name = key_node.value
        key = f"{path}.{name}" if path else name
        if name not in fields:
            raise ConfigError("unknown key", _line(key_node), key)
        if name in kwargs:
            raise ConfigError("duplicate key", _line(key_node), key)
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value_node, key)
        else:
            kwargs[name] = _coerce(_scalar(value_node, key), default, value_node, key)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), _line(node), path or None) from None


def loads_config(text: str) -> ExperimentConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                          None if mark is None else mark.line + 1) from None
    if node is None:
        return ExperimentConfig()
    return _build(ExperimentConfig, node, "")


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    return loads_config(text)


# --- dumping ---------------------------------------------------------------

def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    return obj


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return _plain(cfg)


def dumps_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None, width=100)


def dump_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(dumps_config(cfg), encoding="utf-8")


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy of ``cfg`` with the non-None top-level ``changes`` applied."""
    changes = {k: v for k, v in changes.items() if v is not None}
    try:
        return dataclasses.replace(cfg, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


__all__ = [
    "AssemblySettings", "ChainSettings", "ExperimentConfig", "PlannerSettings", "RegionSettings",
    "config_to_dict", "dump_config", "dumps_config", "load_config", "loads_config", "planner_config",
    "with_overrides",
]
