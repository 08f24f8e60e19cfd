"""Trajectories and their one-record-per-line persistence format.

Each line is a JSON object with exactly the fields ``task_id``,
``trajectory_id``, ``t``, ``state``, ``option_id`` and ``done``. Discrete
states are written as a single integer, continuous ones as an array.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import numpy as np

from dynoplan.errors import FormatError, StateError
from dynoplan.state import StateVector

FIELDS = ("task_id", "trajectory_id", "t", "state", "option_id", "done")


@dataclass(frozen=True)
class TrajectoryStep:
    t: int
    state: StateVector
    option_id: int
    done: bool = False


@dataclass
class Trajectory:
    task_id: str
    trajectory_id: str
    steps: list[TrajectoryStep] = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    def validate(self) -> Trajectory:
        """Check time indices run 0, 1, 2, ... and only the last step is done."""
        for i, step in enumerate(self.steps):
            if i == 0 and step.t != 0:
                raise FormatError(f"trajectory {self.trajectory_id!r} must start at t=0, got {step.t}")
            if i > 0 and step.t <= self.steps[i - 1].t:
                raise FormatError(f"trajectory {self.trajectory_id!r}: time indices must strictly increase")
            if step.done and i != len(self.steps) - 1:
                raise FormatError(f"trajectory {self.trajectory_id!r}: only the final step may be done")
        return self

    def states(self) -> np.ndarray:
        return np.stack([s.state.array() for s in self.steps])

    def option_ids(self) -> np.ndarray:
        return np.asarray([s.option_id for s in self.steps], dtype=np.int64)

    def transitions(self, option_id: int) -> tuple[np.ndarray, np.ndarray]:
        """``(s_t, s_{t+1})`` pairs whose successor was produced by ``option_id``."""
        xs = self.states()
        ids = self.option_ids()
        mask = ids[1:] == option_id
        return xs[:-1][mask], xs[1:][mask]


# A demonstration set is just an ordered list of trajectories.
DemonstrationSet = list


def demo_states(demos: Iterable[Trajectory]) -> tuple[np.ndarray, np.ndarray]:
    """All states of all demos as a ``(N, d)`` array plus their option labels."""
    demos = list(demos)
    if not demos:
        raise StateError("empty demonstration set")
    return (np.concatenate([d.states() for d in demos]),
            np.concatenate([d.option_ids() for d in demos]))


def step_to_record(task_id: str, trajectory_id: str, step: TrajectoryStep) -> dict:
    return {
        "task_id": task_id,
        "trajectory_id": trajectory_id,
        "t": step.t,
        "state": step.state.to_json(),
        "option_id": step.option_id,
        "done": step.done,
    }


def dumps(trajectories: Iterable[Trajectory]) -> str:
    lines = []
    for traj in trajectories:
        for step in traj.steps:
            lines.append(json.dumps(step_to_record(traj.task_id, traj.trajectory_id, step)))
    return "".join(line + "\n" for line in lines)


def _parse_state(value, line: int) -> StateVector:
    if isinstance(value, bool):
        raise FormatError("state must be an integer or an array of numbers", line)
    if isinstance(value, int):
        try:
            return StateVector.index(value)
        except StateError as exc:
            raise FormatError(str(exc), line) from exc
    if isinstance(value, list) and value:
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise FormatError("state array must contain only numbers", line)
        if not all(math.isfinite(v) for v in value):
            raise FormatError("state array entries must be finite", line)
        return StateVector.continuous(value)
    raise FormatError("state must be an integer or a non-empty array of numbers", line)


def parse_record(text: str, line: int) -> dict:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON ({exc.msg})", line) from exc
    if not isinstance(rec, dict):
        raise FormatError("record must be a JSON object", line)
    unknown = sorted(set(rec) - set(FIELDS))
    if unknown:
        raise FormatError(f"unknown field(s) {unknown}", line)
    missing = [f for f in FIELDS if f not in rec]
    if missing:
        raise FormatError(f"missing field(s) {missing}", line)
    if not isinstance(rec["task_id"], str) or not isinstance(rec["trajectory_id"], str):
        raise FormatError("task_id and trajectory_id must be strings", line)
    for key in ("t", "option_id"):
        if isinstance(rec[key], bool) or not isinstance(rec[key], int):
            raise FormatError(f"{key} must be an integer", line)
    if not isinstance(rec["done"], bool):
        raise FormatError("done must be a boolean", line)
    rec["state"] = _parse_state(rec["state"], line)
    return rec


def iter_lines(stream: TextIO) -> Iterator[tuple[int, dict]]:
    for lineno, raw in enumerate(stream, start=1):
        if not raw.strip():
            continue
        yield lineno, parse_record(raw, lineno)


def loads(text: str) -> list[Trajectory]:
    return _collect(iter_lines(text.splitlines(keepends=True)))


def _collect(records) -> list[Trajectory]:
    trajs: dict[tuple[str, str], Trajectory] = {}
    first_line: dict[tuple[str, str], int] = {}
    dim = None
    for lineno, rec in records:
        key = (rec["task_id"], rec["trajectory_id"])
        state = rec["state"]
        if dim is None:
            dim = (state.dim, state.discrete)
        elif (state.dim, state.discrete) != dim:
            raise FormatError("state dimension differs from earlier records", lineno)
        traj = trajs.get(key)
        if traj is None:
            traj = trajs[key] = Trajectory(*key)
            first_line[key] = lineno
        if traj.steps and rec["t"] <= traj.steps[-1].t:
            raise FormatError("time index must strictly increase within a trajectory", lineno)
        if not traj.steps and rec["t"] != 0:
            raise FormatError("trajectory must start at t=0", lineno)
        if traj.steps and traj.steps[-1].done:
            raise FormatError("record follows a done step", lineno)
        traj.steps.append(TrajectoryStep(rec["t"], state, rec["option_id"], rec["done"]))
    for key, traj in trajs.items():
        try:
            traj.validate()
        except FormatError as exc:
            raise FormatError(str(exc), first_line[key]) from exc
    return list(trajs.values())


def read_trajectories(path: str | Path) -> list[Trajectory]:
    with open(path, encoding="utf-8") as fh:
        return _collect(iter_lines(fh))


def write_trajectories(path: str | Path, trajectories: Iterable[Trajectory]) -> None:
    Path(path).write_text(dumps(trajectories), encoding="utf-8")
