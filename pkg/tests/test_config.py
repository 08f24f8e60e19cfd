from pathlib import Path

import pytest

from dynoplan.config import (ExperimentConfig, PlannerSettings, dump_config, dumps_config, load_config,
                             loads_config, planner_config, with_overrides)
from dynoplan.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_empty_document_gives_defaults():
    assert loads_config("") == ExperimentConfig()
    cfg = ExperimentConfig()
    assert cfg.planner.horizon == 10 and cfg.planner.rollouts == 64 and cfg.chain.epsilon == 0.2


@pytest.mark.parametrize("name", ["chain.yaml", "assembly.yaml", "assembly-calm.yaml"])
def test_shipped_configs_load_and_round_trip(name, tmp_path):
    cfg = load_config(CONFIGS / name)
    dump_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg
    assert dumps_config(load_config(tmp_path / "c.yaml")) == dumps_config(cfg)


def test_nested_values_are_read():
    cfg = loads_config("task: assembly\nassembly:\n  interference:\n    arrival_prob: 0.5\n"
                       "  task:\n    via_offset: [0, 1, 0, 1]\nregions:\n  components: 7\n")
    assert cfg.assembly.interference.arrival_prob == 0.5
    assert cfg.assembly.task.via_offset == (0.0, 1.0, 0.0, 1.0)
    assert cfg.regions.em(4).components == 7 and ExperimentConfig().regions.em(4).components == 12


@pytest.mark.parametrize("text, line, key", [
    ("seed: 1\nplaner:\n  horizon: 3\n", 2, "planer"),
    ("planner:\n  horizon: 3\n  depth: 2\n", 3, "planner.depth"),
    ("planner:\n  horizon: ten\n", 2, "planner.horizon"),
    ("episodes: 1.5\n", 1, "episodes"),
    ("chain:\n  betas: [0.2, x]\n", 2, "chain.betas"),
    ("chain:\n  start: true\n", 2, "chain.start"),
    ("seed: 1\nseed: 2\n", 2, "seed"),
    ("planner: 3\n", 1, "planner"),
    ("assembly:\n  task:\n    insert_needs_alignment: 1\n", 3, "assembly.task.insert_needs_alignment"),
])
def test_errors_name_line_and_key(text, line, key):
    with pytest.raises(ConfigError) as info:
        loads_config(text)
    assert info.value.line == line and info.value.key == key
    assert str(info.value).startswith(f"line {line}, key '{key}'")


def test_semantic_validation_is_reported():
    for text in ("planner:\n  horizon: 0\n", "task: maze\n", "regions:\n  floor_quantile: 2\n",
                 "chain:\n  betas: [0.2, 0.5]\n", "chain:\n  start: 21\n", "chain:\n  epsilon: 1.5\n",
                 "assembly:\n  demo_arrival_prob: -1\n"):
        with pytest.raises(ConfigError):
            loads_config(text)


def test_malformed_yaml_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="line 2"):
        loads_config("a: 1\n b: [\n")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.yaml")


def test_overrides_and_planner_config():
    cfg = with_overrides(ExperimentConfig(), seed=7, episodes=None)
    assert cfg.seed == 7 and cfg.episodes == ExperimentConfig().episodes
    with pytest.raises(ConfigError):
        with_overrides(cfg, episodes=0)
    pc = planner_config(cfg, seed=99)
    assert pc.seed == 99 and pc.horizon == cfg.planner.horizon
    with pytest.raises(ValueError):
        PlannerSettings(rollouts=0)
