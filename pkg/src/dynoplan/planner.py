"""Policy over options by model-predictive lookahead.

Every option is scored by the expected goal value of the state its dynamics
model reaches after ``n`` steps, gated by the option's initiation set; the
best option runs on the real environment and the cycle repeats.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from dynoplan.errors import InitiationError
from dynoplan.goal import GoalModel
from dynoplan.options import (Environment, OptionSpec, derive_seed, execute_option,
                              indicator_initiation, rollout_batch)
from dynoplan.state import StateVector
from dynoplan.trajectory import TrajectoryStep

# seed-stream tags
_SCORE_STREAM = 1
_EXEC_STREAM = 2

GOAL_REACHED = "goal-reached"
TERMINAL = "terminal"
MAX_STEPS = "max-planning-steps"
NO_OPTION = "no-applicable-option"


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 10
    rollouts: int = 64
    goal_success_threshold: float = 0.95
    max_planning_steps: int = 50
    max_option_steps: int = 1000
    tie_break: str = "lowest-id"
    seed: int = 0
    tie_tolerance: float = 1e-9  # relative; absorbs Monte Carlo summation rounding

    def __post_init__(self):
        for name in ("horizon", "rollouts", "max_planning_steps", "max_option_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 < self.goal_success_threshold <= 1.0:
            raise ValueError("goal_success_threshold must lie in (0, 1]")
        if self.tie_break != "lowest-id":
            raise ValueError(f"unsupported tie_break {self.tie_break!r}")
        if not 0.0 <= self.tie_tolerance < 1.0:
            raise ValueError("tie_tolerance must lie in [0, 1)")


@dataclass(frozen=True)
class OptionScore:
    option_id: int
    expected_value: float
    predicted_end_state: tuple[float, ...]
    applicable: bool
    value_variance: float = 0.0  # spread of the per-rollout goal values


@dataclass(frozen=True)
class Selection:
    chosen: int | None
    scores: tuple[OptionScore, ...]
    no_progress: bool


@dataclass
class PlanStep:
    index: int
    state: StateVector
    scores: tuple[OptionScore, ...]
    chosen: int | None
    no_progress: bool
    failures: list[int] = field(default_factory=list)
    segment: list[TrajectoryStep] = field(default_factory=list)
    realized_state: StateVector | None = None
    goal_mean: float = 0.0
    goal_variance: float = 0.0
    info: dict = field(default_factory=dict)


@dataclass
class PlanTrace:
    initial_state: StateVector
    initial_goal: tuple[float, float]
    steps: list[PlanStep] = field(default_factory=list)
    status: str = ""

    @property
    def executed(self) -> list[PlanStep]:
        return [s for s in self.steps if s.chosen is not None]

    @property
    def final_state(self) -> StateVector:
        for s in reversed(self.steps):
            if s.realized_state is not None:
                return s.realized_state
        return self.initial_state

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "initial_state": self.initial_state.to_json(),
            "initial_goal": list(self.initial_goal),
            "steps": [
                {
                    "index": s.index,
                    "state": s.state.to_json(),
                    "scores": [asdict(sc) | {"predicted_end_state": list(sc.predicted_end_state)}
                               for sc in s.scores],
                    "chosen": s.chosen,
                    "no_progress": s.no_progress,
                    "failures": list(s.failures),
                    "segment": [
                        {"t": st.t, "state": st.state.to_json(), "option_id": st.option_id, "done": st.done}
                        for st in s.segment
                    ],
                    "realized_state": None if s.realized_state is None else s.realized_state.to_json(),
                    "goal_mean": s.goal_mean,
                    "goal_variance": s.goal_variance,
                    "info": s.info,
                }
                for s in self.steps
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> PlanTrace:
        read = StateVector.from_json
        steps = []
        for s in d["steps"]:
            scores = tuple(OptionScore(sc["option_id"], sc["expected_value"], tuple(sc["predicted_end_state"]),
                                       sc["applicable"], sc["value_variance"]) for sc in s["scores"])
            segment = [TrajectoryStep(st["t"], read(st["state"]), st["option_id"], st["done"])
                       for st in s["segment"]]
            realized = None if s["realized_state"] is None else read(s["realized_state"])
            steps.append(PlanStep(s["index"], read(s["state"]), scores, s["chosen"], s["no_progress"],
                                  list(s["failures"]), segment, realized, s["goal_mean"],
                                  s["goal_variance"], dict(s["info"])))
        return cls(read(d["initial_state"]), tuple(d["initial_goal"]), steps, d["status"])

    @classmethod
    def loads(cls, text: str) -> PlanTrace:
        return cls.from_dict(json.loads(text))


def score_option(option: OptionSpec, state: StateVector, goal: GoalModel, n: int, R: int,
                 seed) -> OptionScore:
    """Monte Carlo estimate of ``1[state in I] * E[goal(D^n(state))]``."""
    if R < 1:
        raise ValueError("rollout count must be >= 1")
    applicable = bool(indicator_initiation(option, state))
    rng = np.random.default_rng(seed)
    batch = rollout_batch(option, state, n, R, rng)
    values = np.asarray(goal.mean_batch(batch.final, rng), dtype=float)
    predicted = tuple(float(v) for v in batch.final.mean(axis=0))
    if not applicable:
        return OptionScore(option.id, 0.0, predicted, False, 0.0)
    return OptionScore(option.id, float(values.mean()), predicted, True, float(values.var()))


def select_option(state: StateVector, options: Sequence[OptionSpec], goal: GoalModel,
                  cfg: PlannerConfig, step: int = 0) -> Selection:
    """Argmax over option scores, lowest id winning ties.

    Scores within ``cfg.tie_tolerance`` (relative) of the best count as tied.

    When every score is zero the lowest-id applicable option is returned with
    ``no_progress`` set; ``chosen`` is None if nothing is applicable.
    """
    if not options:
        raise ValueError("select_option needs at least one option")
    scores = tuple(
        score_option(opt, state, goal, cfg.horizon, cfg.rollouts, derive_seed(cfg.seed, _SCORE_STREAM, step, opt.id))
        for opt in options
    )
    applicable = sorted((sc for sc in scores if sc.applicable), key=lambda sc: sc.option_id)
    if not applicable:
        return Selection(None, scores, True)
    best = max(sc.expected_value for sc in applicable)
    # scores equal up to rounding are ties, so scaling the goal cannot flip them
    cutoff = best - cfg.tie_tolerance * abs(best)
    chosen = next(sc.option_id for sc in applicable if sc.expected_value >= cutoff)
    return Selection(chosen, scores, best <= 0.0)


def plan_execute(env: Environment, options: Sequence[OptionSpec], goal: GoalModel,
                 cfg: PlannerConfig, observe: Callable[[Environment], dict] | None = None) -> PlanTrace:
    """Select, execute on the real environment, repeat until done.

    ``observe(env)``, if given, is called before each selection and its result
    stored on the step.
    """
    by_id = {opt.id: opt for opt in options}
    state = env.state
    g_mean, g_var = goal.evaluate(state)
    trace = PlanTrace(state, (g_mean, g_var))
    while True:
        if g_mean >= cfg.goal_success_threshold:
            trace.status = GOAL_REACHED
            break
        if env.terminal:
            trace.status = TERMINAL
            break
        if len(trace.steps) >= cfg.max_planning_steps:
            trace.status = MAX_STEPS
            break

        index = len(trace.steps)
        info = observe(env) if observe is not None else {}
        candidates = list(options)
        failures: list[int] = []
        while True:
            sel = select_option(state, candidates, goal, cfg, index)
            if sel.chosen is None:
                break
            try:
                segment, final = execute_option(by_id[sel.chosen], env,
                                                derive_seed(cfg.seed, _EXEC_STREAM, index),
                                                cfg.max_option_steps)
            except InitiationError:
                # the world disagreed with the model; drop the option and retry
                failures.append(sel.chosen)
                candidates = [o for o in candidates if o.id != sel.chosen]
                if not candidates:
                    sel = Selection(None, sel.scores, True)
                    break
                continue
            break

        if sel.chosen is None:
            trace.steps.append(PlanStep(index, state, sel.scores, None, True, failures, info=info))
            trace.status = NO_OPTION
            break
        g_mean, g_var = goal.evaluate(final)
        trace.steps.append(PlanStep(index, state, sel.scores, sel.chosen, sel.no_progress, failures,
                                    segment, final, g_mean, g_var, info))
        state = final
    return trace
