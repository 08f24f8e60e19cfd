"""Desk-scale surrogate of a two-arm gear assembly task.

The state is 12 joint angles, six per arm. The left arm (joints 0-5: pan,
lift, upper-arm roll, elbow, wrist flex, gripper) picks a gear from the table
and brings it to a peg module held still by the right arm (joints 6-11).
Four options share the joint space:

1. grasp: interpolate every joint to the table grasp pose.
2. quick transport: large steps of the arm joints (0-3) to the pre-assembly pose.
3. cautious transport: small steps along a detour that bows away from the
   human and converges on the pre-assembly pose.
4. insert: fine, jittered steps of the arm joints to the insertion pose;
   it can only start once the gear is aligned, i.e. near the segment from
   the pre-assembly pose to the insertion pose.

A human may walk into the workspace while the gear is in transit; options 1
and 2 terminate at a rate inversely related to the human's distance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from dynoplan.errors import FitError, StateError
from dynoplan.options import OptionSpec, derive_seed, execute_option
from dynoplan.state import StateSpace, StateVector
from dynoplan.trajectory import Trajectory, TrajectoryStep

N_JOINTS = 12
JOINT_LIMIT = np.pi
ARM = np.array([0, 1, 2, 3])  # joints moved by transport and insertion

SPACE = StateSpace(dim=N_JOINTS, discrete=False)

GRASP, QUICK, CAUTIOUS, INSERT = 1, 2, 3, 4

_RIGHT_HOLD = (-0.3, 0.4, 0.0, -1.4, 0.2, 0.05)


@dataclass(frozen=True)
class AssemblyTask:
    """Waypoints and option parameters of one task instance (radians)."""

    grasp_pose: tuple = (1.3, 0.9, 0.4, -0.4, -1.1, 0.05) + _RIGHT_HOLD
    pre_assembly_pose: tuple = (0.2, 0.3, -0.2, -1.5, -1.1, 0.05) + _RIGHT_HOLD
    insertion_pose: tuple = (0.23, 0.215, -0.035, -1.57, -1.1, 0.05) + _RIGHT_HOLD
    start_center: tuple = (0.25, 0.2, -0.1, -1.6, 0.0, 0.8) + _RIGHT_HOLD
    start_halfwidth: tuple = (0.2, 0.2, 0.2, 0.2, 0.2, 0.05) + (0.0,) * 6
    via_offset: tuple = (0.0, 0.35, 0.0, 0.3)  # detour of the cautious path, arm joints
    via_decay: float = 1.0
    grasp_step: float = 0.15
    quick_step: float = 0.25
    cautious_step: float = 0.1
    insert_step: float = 0.02
    insert_jitter: float = 0.002
    grasp_tol: float = 0.075
    offset_tol: float = 0.125
    insert_tol: float = 0.02
    human_scale: float = 0.02
    insert_needs_alignment: bool = True  # False: insertion may start anywhere

    def __post_init__(self):
        for name in ("grasp_pose", "pre_assembly_pose", "insertion_pose", "start_center", "start_halfwidth"):
            v = getattr(self, name)
            if len(v) != N_JOINTS or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must hold {N_JOINTS} finite joint angles")
            if name != "start_halfwidth" and np.any(np.abs(v) > JOINT_LIMIT):
                raise ValueError(f"{name} violates the joint limits")
        if len(self.via_offset) != len(ARM):
            raise ValueError(f"via_offset must hold {len(ARM)} values")
        for name in ("grasp_step", "quick_step", "cautious_step", "insert_step", "grasp_tol",
                     "offset_tol", "insert_tol", "human_scale", "via_decay"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.insert_jitter >= 0:
            raise ValueError("insert_jitter must be non-negative")

    def pose(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)


@dataclass(frozen=True)
class InterferenceConfig:
    arrival_prob: float = 0.02
    dwell_mean: float = 15.0  # geometric dwell, in steps
    proximity_depth: float = 0.0  # human distance while present
    absent_proximity: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.arrival_prob <= 1.0:
            raise ValueError("arrival_prob must lie in [0, 1]")
        if not self.dwell_mean >= 1.0:
            raise ValueError("dwell_mean must be >= 1")
        if not 0.0 <= self.proximity_depth < self.absent_proximity:
            raise ValueError("need 0 <= proximity_depth < absent_proximity")


NO_INTERFERENCE = InterferenceConfig(arrival_prob=0.0)


class AssemblyEnv:
    def __init__(self, task: AssemblyTask = AssemblyTask(),
                 interference: InterferenceConfig = InterferenceConfig(), seed=0):
        self.task = task
        self.interference = interference
        self.rng = np.random.default_rng(seed)
        lo = task.pose("start_center") - task.pose("start_halfwidth")
        hi = task.pose("start_center") + task.pose("start_halfwidth")
        self.joints = np.clip(self.rng.uniform(lo, hi), -JOINT_LIMIT, JOINT_LIMIT)
        self.human_proximity = interference.absent_proximity
        self.gear_grasped = False
        self.gear_inserted = False
        self.t = 0

    @property
    def state(self) -> StateVector:
        return StateVector.continuous(self.joints)

    @property
    def terminal(self) -> bool:
        return self.gear_inserted

    @property
    def human_present(self) -> bool:
        return self.human_proximity < self.interference.absent_proximity

    def distance_to_pre_assembly(self) -> float:
        return float(np.linalg.norm(self.joints[ARM] - self.task.pose("pre_assembly_pose")[ARM]))

    @property
    def in_transport(self) -> bool:
        """Gear held but not yet at the pre-assembly offset."""
        return (self.gear_grasped and not self.gear_inserted
                and self.distance_to_pre_assembly() > self.task.offset_tol)

    def step(self, action) -> float:
        if self.terminal:
            raise StateError("cannot step a finished assembly")
        action = np.asarray(action, dtype=float).reshape(-1)
        if action.shape != (N_JOINTS,) or not np.all(np.isfinite(action)):
            raise StateError("assembly action must be 12 finite joint deltas")
        self.joints = np.clip(self.joints + action, -JOINT_LIMIT, JOINT_LIMIT)
        self.t += 1
        task = self.task
        if not self.gear_grasped and np.linalg.norm(self.joints - task.pose("grasp_pose")) <= task.grasp_tol:
            self.gear_grasped = True
        reward = 0.0
        if self.gear_grasped and np.linalg.norm(
                self.joints[ARM] - task.pose("insertion_pose")[ARM]) <= task.insert_tol:
            self.gear_inserted = True
            reward = 1.0
        cfg = self.interference
        if self.human_present:
            if self.rng.random() < 1.0 / cfg.dwell_mean:
                self.human_proximity = cfg.absent_proximity
        elif self.in_transport and self.rng.random() < cfg.arrival_prob:
            self.human_proximity = cfg.proximity_depth
        return reward


def make_assembly_env(task: AssemblyTask = AssemblyTask(),
                      interference: InterferenceConfig = InterferenceConfig(), seed=0) -> AssemblyEnv:
    return AssemblyEnv(task, interference, seed)


def _toward(x: np.ndarray, target: np.ndarray, step: float) -> np.ndarray:
    """Straight-line step of at most ``step`` toward ``target`` (row-wise)."""
    diff = target - x
    dist = np.linalg.norm(diff, axis=1, keepdims=True)
    scale = np.minimum(1.0, step / np.maximum(dist, 1e-300))
    return diff * scale


def _arm_delta(x: np.ndarray, arm_delta: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    out[:, ARM] = arm_delta
    return out


def _within(x, target, tol, joints=None):
    diff = x - target if joints is None else x[:, joints] - target[joints]
    return np.linalg.norm(diff, axis=1) <= tol


def _segment_distance(x, a, b):
    """Row-wise distance from ``x`` to the segment ``[a, b]``."""
    ab = b - a
    t = np.clip((x - a) @ ab / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(x - (a + t[:, None] * ab), axis=1)


def human_termination(proximity: float, scale: float) -> float:
    """Termination rate growing toward 1 as the human gets closer."""
    return float(np.clip(scale / (proximity + scale), 0.0, 1.0))


def make_assembly_options(task: AssemblyTask = AssemblyTask(),
                          proximity: Callable[[], float] | None = None) -> list[OptionSpec]:
    """The four assembly options.

    ``proximity`` reads the current human distance (a perception module on the
    robot); model rollouts treat it as constant over the horizon.
    """
    if proximity is None:
        absent = InterferenceConfig().absent_proximity
        proximity = lambda: absent  # noqa: E731
    G = task.pose("grasp_pose")
    P = task.pose("pre_assembly_pose")
    I = task.pose("insertion_pose")
    via = np.asarray(task.via_offset, dtype=float)

    def everywhere(x):
        return np.ones(len(x), dtype=bool)

    def aligned(x):
        return _segment_distance(x[:, ARM], P[ARM], I[ARM]) <= task.offset_tol

    def human_beta(x):
        return np.full(len(x), human_termination(proximity(), task.human_scale))

    def grasp_policy(x, rng):
        return _toward(x, G, task.grasp_step)

    def quick_policy(x, rng):
        return _arm_delta(x, _toward(x[:, ARM], P[ARM], task.quick_step))

    def cautious_policy(x, rng):
        d = np.linalg.norm(x[:, ARM] - P[ARM], axis=1, keepdims=True)
        aim = P[ARM] + via * np.minimum(1.0, d / task.via_decay)
        return _arm_delta(x, _toward(x[:, ARM], aim, task.cautious_step))

    def insert_policy(x, rng):
        delta = _toward(x[:, ARM], I[ARM], task.insert_step)
        if task.insert_jitter > 0:
            delta = delta + rng.normal(0.0, task.insert_jitter, size=delta.shape)
        return _arm_delta(x, delta)

    def grasp_beta(x):
        return np.maximum(human_beta(x), _within(x, G, task.grasp_tol).astype(float))

    def quick_beta(x):
        return np.maximum(human_beta(x), _within(x, P, task.offset_tol, ARM).astype(float))

    def cautious_beta(x):
        return _within(x, P, task.offset_tol, ARM).astype(float)

    def insert_beta(x):
        return _within(x, I, task.insert_tol, ARM).astype(float)

    insert_init = aligned if task.insert_needs_alignment else everywhere
    specs = [
        (GRASP, grasp_policy, everywhere, grasp_beta, "mixed", "grasp gear"),
        (QUICK, quick_policy, everywhere, quick_beta, "planner-surrogate", "quick transport"),
        (CAUTIOUS, cautious_policy, everywhere, cautious_beta, "mixed", "cautious transport"),
        (INSERT, insert_policy, insert_init, insert_beta, "learned-surrogate", "insert gear"),
    ]
    options = []
    for oid, policy, init, beta, kind, name in specs:
        def dynamics(x, rng, policy=policy):
            return np.clip(x + policy(x, rng), -JOINT_LIMIT, JOINT_LIMIT)
        options.append(OptionSpec(oid, SPACE, policy, init, beta, dynamics, kind=kind, name=name))
    return options


def options_for(env: AssemblyEnv) -> list[OptionSpec]:
    """Options whose human sensing reads ``env``."""
    return make_assembly_options(env.task, lambda: env.human_proximity)


class AffineGaussianDynamics:
    """``next = A @ state + b + noise`` with Gaussian noise, clipped to joint limits."""

    def __init__(self, A, b, noise_cov, limit: float | None = JOINT_LIMIT):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.noise_cov = np.asarray(noise_cov, dtype=float)
        self.limit = limit
        w, v = np.linalg.eigh(0.5 * (self.noise_cov + self.noise_cov.T))
        self._noise_sqrt = v * np.sqrt(np.clip(w, 0.0, None))
        self._noisy = bool(np.any(w > 0))

    def mean(self, states: np.ndarray) -> np.ndarray:
        return states @ self.A.T + self.b

    def to_dict(self) -> dict:
        return {"A": self.A.tolist(), "b": self.b.tolist(), "noise_cov": self.noise_cov.tolist(),
                "limit": self.limit}

    @classmethod
    def from_dict(cls, d: dict) -> AffineGaussianDynamics:
        return cls(d["A"], d["b"], d["noise_cov"], d["limit"])

    def __call__(self, states, rng):
        out = self.mean(np.asarray(states, dtype=float))
        if self._noisy:
            out = out + rng.standard_normal(out.shape) @ self._noise_sqrt.T
        if self.limit is not None:
            out = np.clip(out, -self.limit, self.limit)
        return out


def save_dynamics(path, models: dict[int, AffineGaussianDynamics]) -> None:
    doc = {str(k): m.to_dict() for k, m in sorted(models.items())}
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_dynamics(path) -> dict[int, AffineGaussianDynamics]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return {int(k): AffineGaussianDynamics.from_dict(v) for k, v in doc.items()}


def fit_affine_dynamics(x: np.ndarray, y: np.ndarray, ridge: float = 1e-2) -> AffineGaussianDynamics:
    """Least squares for ``y ~ A x + b`` with ``A`` shrunk toward the identity.

    ``ridge`` is a per-sample variance: directions along which the states
    spread less than about ``sqrt(ridge)`` keep ``A = I``, so the model
    extrapolates there as a pure translation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[1]
    delta = y - x
    xm, dm = x.mean(axis=0), delta.mean(axis=0)
    xc, dc = x - xm, delta - dm
    gram = xc.T @ xc + ridge * len(x) * np.eye(d)
    M = np.linalg.solve(gram, xc.T @ dc).T  # A - I
    A = np.eye(d) + M
    b = dm - M @ xm
    resid = y - (x @ A.T + b)
    cov = resid.T @ resid / max(len(x) - 1, 1)
    return AffineGaussianDynamics(A, b, cov)


def learn_option_dynamics(demos: Sequence[Trajectory], option_id: int, min_transitions: int = 50,
                          ridge: float = 1e-2) -> AffineGaussianDynamics:
    xs, ys = [], []
    for d in demos:
        x, y = d.transitions(option_id)
        xs.append(x)
        ys.append(y)
    x = np.concatenate(xs) if xs else np.empty((0, N_JOINTS))
    y = np.concatenate(ys) if ys else np.empty((0, N_JOINTS))
    if len(x) < min_transitions:
        raise FitError(f"option {option_id}: {len(x)} demo transitions, need >= {min_transitions}")
    return fit_affine_dynamics(x, y, ridge)


def expert_option(env: AssemblyEnv) -> int:
    """The scripted expert's next option."""
    if not env.gear_grasped:
        return GRASP
    if env.distance_to_pre_assembly() > env.task.offset_tol:
        return CAUTIOUS if env.human_present else QUICK
    return INSERT


def expert_demo(task: AssemblyTask, interference: InterferenceConfig, seed, trajectory_id: str,
                max_steps: int = 400, task_id: str = "assembly") -> Trajectory | None:
    """One scripted demonstration, or None if the expert did not finish."""
    env = AssemblyEnv(task, interference, seed)
    options = {o.id: o for o in options_for(env)}
    steps = [TrajectoryStep(0, env.state, GRASP, False)]
    k = 0
    while not env.terminal and env.t < max_steps:
        oid = expert_option(env)
        if k == 0:
            steps[0] = TrajectoryStep(0, env.state, oid, False)
        segment, _ = execute_option(options[oid], env, derive_seed(seed, k), max_steps - env.t)
        steps.extend(TrajectoryStep(s.t, s.state, s.option_id, False) for s in segment)
        k += 1
    if not env.terminal:
        return None
    last = steps[-1]
    steps[-1] = TrajectoryStep(last.t, last.state, last.option_id, True)
    return Trajectory(task_id, trajectory_id, steps)


class DemoBatch(NamedTuple):
    demos: list[Trajectory]
    discarded: int


def generate_demonstrations(task: AssemblyTask = AssemblyTask(), count: int = 10,
                            interference: InterferenceConfig | None = None, seed: int = 0,
                            max_steps: int = 400, max_attempts: int | None = None) -> DemoBatch:
    """Scripted expert runs: grasp, quick transport (cautious while a human is
    near), insert. Failed runs are regenerated from a fresh seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    interference = NO_INTERFERENCE if interference is None else interference
    max_attempts = 10 * count if max_attempts is None else max_attempts
    demos, discarded, attempt = [], 0, 0
    while len(demos) < count:
        if attempt >= max_attempts:
            raise FitError(f"expert failed {discarded} times; gave up after {attempt} attempts")
        demo = expert_demo(task, interference, derive_seed(seed, attempt), f"demo-{seed}-{attempt}", max_steps)
        attempt += 1
        if demo is None:
            discarded += 1
        else:
            demos.append(demo)
    return DemoBatch(demos, discarded)


def assembly_observer(env: AssemblyEnv) -> dict:
    return {
        "human_present": env.human_present,
        "in_transport": env.in_transport,
        "gear_grasped": env.gear_grasped,
    }
