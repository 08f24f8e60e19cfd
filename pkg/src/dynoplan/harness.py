"""Experiment pipelines behind the command line.

``run_experiment`` drives one configured experiment end to end: build or load
demonstrations, fit the goal heuristic (and, for the assembly task, dynamics
models and safety regions), run seeded planner episodes, and write every
artifact into an output directory. Nothing time- or host-dependent is
written, so a repeated run with the same config reproduces every byte.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from dynoplan import assembly, chain
from dynoplan.config import ExperimentConfig, dump_config, planner_config
from dynoplan.goal import GoalHeuristic, fit_goal_heuristic, monotonicity_score, progress_labels
from dynoplan.options import derive_seed, with_dynamics
from dynoplan.planner import PlanTrace, plan_execute
from dynoplan.regions import (GaussianMixtureRegions, GmmFit, fit_gmm, overlap_matrix,
                              region_log_floors)
from dynoplan.trajectory import Trajectory, demo_states, read_trajectories, write_trajectories

# seed-stream tags, distinct from the planner's own
_PLAN, _ENV, _DEMOS, _HELDOUT = 3, 4, 10, 11


def _f(x) -> str:
    return format(float(x), ".12g")


def write_tsv(path: Path, header: Sequence[str], rows) -> None:
    lines = ["\t".join(header)] + ["\t".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_tsv(path: Path) -> list[dict[str, str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split("\t")
    return [dict(zip(header, line.split("\t"))) for line in lines[1:] if line]


# --- reports ---------------------------------------------------------------

def goal_report_rows(gh: GoalHeuristic, demos: Sequence[Trajectory], split: str):
    rows = []
    for d in demos:
        means = gh.evaluate_batch(d.states())[0]
        mad = float(np.abs(means - progress_labels(d)).mean())
        mono = monotonicity_score(gh, d) if len(d) >= 3 else None
        rows.append([split, d.trajectory_id, len(d),
                     "" if mono is None else _f(mono.score),
                     "" if mono is None else int(mono.degenerate), _f(mad)])
    return rows


GOAL_REPORT_HEADER = ("split", "trajectory_id", "steps", "monotonicity", "degenerate", "mean_abs_deviation")


def write_gmm_report(path: Path, fit: GmmFit, regions: GaussianMixtureRegions) -> None:
    lines = [
        "key\tvalue",
        f"components\t{len(fit.weights)}",
        f"iterations\t{fit.n_iter}",
        f"converged\t{int(fit.converged)}",
        f"final_log_likelihood\t{_f(fit.log_likelihood[-1])}",
        f"repaired\t{' '.join(map(str, fit.repaired))}",
        f"duplicated\t{' '.join(f'{o}:{c}' for o, c in regions.duplicated)}",
        "assignment\t" + " ".join(f"{o}:{','.join(map(str, c))}" for o, c in regions.J.items()),
        "",
        "iteration\tlog_likelihood",
    ]
    lines += [f"{i}\t{_f(ll)}" for i, ll in enumerate(fit.log_likelihood)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def region_report(regions: GaussianMixtureRegions, states: np.ndarray, labels: np.ndarray,
                  log_floors) -> tuple[str, dict]:
    """Per-option likelihood summary, classification accuracy and the overlap
    matrix on labelled (typically held-out) states."""
    labels = np.asarray(labels)
    table = regions.log_likelihood_table(states)
    ids = regions.option_ids
    pred = np.asarray(ids)[table.argmax(axis=1)]
    known = np.isin(labels, ids)
    accuracy = float(np.mean(pred[known] == labels[known])) if known.any() else float("nan")
    lines = ["option\tstates\tlog_floor\tmin_log_likelihood\tmedian_log_likelihood\tmax_log_likelihood\taccuracy"]
    per_option = {}
    for col, o in enumerate(ids):
        own = table[labels == o, col]
        acc = float(np.mean(pred[labels == o] == o)) if len(own) else float("nan")
        per_option[o] = acc
        stats = [_f(own.min()), _f(np.median(own)), _f(own.max())] if len(own) else ["", "", ""]
        lines.append("\t".join([str(o), str(len(own)), _f(log_floors[o])] + stats + [_f(acc)]))
    overlap = overlap_matrix(regions, states, log_floors)
    lines += ["", f"accuracy\t{_f(accuracy)}", "", "overlap\t" + "\t".join(map(str, ids))]
    lines += [f"{a}\t" + "\t".join(_f(v) for v in overlap[i]) for i, a in enumerate(ids)]
    return "\n".join(lines) + "\n", {"accuracy": accuracy, "per_option": per_option,
                                     "overlap": overlap, "option_ids": ids}


def fit_regions(cfg: ExperimentConfig, demos: Sequence[Trajectory]) -> tuple[GmmFit, GaussianMixtureRegions]:
    x, labels = demo_states(demos)
    n_options = len(np.unique(labels))
    fit = fit_gmm(x.astype(float), cfg.regions.em(n_options))
    regions = GaussianMixtureRegions.from_fit(fit, labels)
    floors = region_log_floors(regions, x, labels, cfg.regions.floor_quantile)
    return fit, regions.with_log_floors(floors)


# --- demonstrations --------------------------------------------------------

def make_demos(cfg: ExperimentConfig, heldout: bool = False, count: int | None = None) -> list[Trajectory]:
    if cfg.task == "chain":
        return chain.chain_demonstrations(count or cfg.chain.demos)
    a = cfg.assembly
    n = count or (a.heldout_demos if heldout else a.demos)
    seed = derive_seed(cfg.seed, _HELDOUT if heldout else _DEMOS)
    interference = dataclasses.replace(a.interference, arrival_prob=a.demo_arrival_prob)
    return assembly.generate_demonstrations(a.task, n, interference, seed=seed).demos


# --- episodes --------------------------------------------------------------

@dataclass
class EpisodeResult:
    episode: int
    trace: PlanTrace
    success: bool
    human_steps: int = 0
    cautious_on_human: int = 0


@dataclass
class RunSummary:
    task: str
    episodes: list[EpisodeResult] = field(default_factory=list)
    fit: dict = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return float(np.mean([e.success for e in self.episodes]))

    @property
    def median_planning_steps(self) -> float:
        return float(np.median([len(e.trace.executed) for e in self.episodes]))

    def rows(self) -> list[tuple[str, str]]:
        statuses: dict[str, int] = {}
        for e in self.episodes:
            statuses[e.trace.status] = statuses.get(e.trace.status, 0) + 1
        rows = [
            ("task", self.task),
            ("episodes", str(len(self.episodes))),
            ("successes", str(sum(e.success for e in self.episodes))),
            ("success_rate", _f(self.success_rate)),
            ("median_planning_steps", _f(self.median_planning_steps)),
            ("mean_planning_steps", _f(np.mean([len(e.trace.executed) for e in self.episodes]))),
        ]
        rows += [(f"status:{k}", str(v)) for k, v in sorted(statuses.items())]
        if self.task == "assembly":
            human = sum(e.human_steps for e in self.episodes)
            cautious = sum(e.cautious_on_human for e in self.episodes)
            rows += [("human_transport_steps", str(human)),
                     ("cautious_on_human_steps", str(cautious)),
                     ("cautious_fraction", _f(cautious / human) if human else "")]
        rows += [(k, v if isinstance(v, str) else _f(v)) for k, v in sorted(self.fit.items())]
        return rows


def chain_setup(cfg: ExperimentConfig):
    c = cfg.chain
    options = chain.make_chain_options(c.betas)
    models, noisy_goal = chain.make_noisy_models(options, chain.NoisyModelConfig(c.epsilon))
    goal = noisy_goal
    demos = chain.chain_demonstrations(c.demos)
    if c.goal == "fitted":
        goal = fit_goal_heuristic(demos, cfg.goal_fit)
    return with_dynamics(options, models), goal, demos


def run_chain_episode(cfg: ExperimentConfig, options, goal, episode: int) -> EpisodeResult:
    env = chain.make_chain_env(cfg.chain.start)
    trace = plan_execute(env, options, goal, planner_config(cfg, derive_seed(cfg.seed, _PLAN, episode)))
    return EpisodeResult(episode, trace, env.terminal)


def run_assembly_episode(cfg: ExperimentConfig, models, goal, episode: int) -> EpisodeResult:
    a = cfg.assembly
    env = assembly.make_assembly_env(a.task, a.interference, seed=derive_seed(cfg.seed, _ENV, episode))
    options = with_dynamics(assembly.options_for(env), models)
    trace = plan_execute(env, options, goal, planner_config(cfg, derive_seed(cfg.seed, _PLAN, episode)),
                         observe=assembly.assembly_observer)
    human = [s for s in trace.steps if s.info.get("human_present") and s.info.get("in_transport")]
    cautious = sum(s.chosen == assembly.CAUTIOUS for s in human)
    return EpisodeResult(episode, trace, env.gear_inserted, len(human), cautious)


# --- artifacts -------------------------------------------------------------

def predicted_rows(result: EpisodeResult):
    for step in result.trace.steps:
        for sc in step.scores:
            yield [result.episode, step.index, sc.option_id, int(sc.applicable), _f(sc.expected_value),
                   _f(sc.value_variance), int(sc.option_id == step.chosen),
                   " ".join(_f(v) for v in sc.predicted_end_state)]


PREDICTED_HEADER = ("episode", "step", "option_id", "applicable", "expected_value", "value_variance",
                    "chosen", "predicted_end_state")


def state_log_rows(source: str, ident, steps):
    for st in steps:
        yield [source, ident, st.t, st.option_id, " ".join(_f(v) for v in st.state.values)]


def _episode_row(e: EpisodeResult):
    chosen = " ".join(str(s.chosen) for s in e.trace.executed)
    return [e.episode, e.trace.status, int(e.success), len(e.trace.executed), chosen,
            e.human_steps, e.cautious_on_human]


def run_experiment(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> RunSummary:
    """Run the configured pipeline, writing artifacts into ``out`` as stages finish."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    summary = RunSummary(cfg.task)

    if cfg.task == "chain":
        options, goal, demos = chain_setup(cfg)
        write_trajectories(out / "demos.jsonl", demos)
        if isinstance(goal, GoalHeuristic):
            goal.save(out / "goal.json")
            write_tsv(out / "goal_report.tsv", GOAL_REPORT_HEADER, goal_report_rows(goal, demos, "train"))

        def episode(i):
            return run_chain_episode(cfg, options, goal, i)
    else:
        a = cfg.assembly
        demos = read_trajectories(a.demos_path) if a.demos_path else make_demos(cfg)
        heldout = make_demos(cfg, heldout=True)
        write_trajectories(out / "demos.jsonl", demos)
        write_trajectories(out / "heldout_demos.jsonl", heldout)
        goal = fit_goal_heuristic(demos, cfg.goal_fit)
        goal.save(out / "goal.json")
        rows = goal_report_rows(goal, demos, "train") + goal_report_rows(goal, heldout, "heldout")
        write_tsv(out / "goal_report.tsv", GOAL_REPORT_HEADER, rows)
        held = [r for r in rows if r[0] == "heldout"]
        summary.fit["goal_heldout_min_monotonicity"] = min(float(r[3]) for r in held)
        summary.fit["goal_heldout_max_mean_abs_deviation"] = max(float(r[5]) for r in held)

        option_ids = sorted({int(o) for d in demos for o in d.option_ids()})
        models = {o: assembly.learn_option_dynamics(demos, o, a.min_transitions, a.dynamics_ridge)
                  for o in option_ids}
        assembly.save_dynamics(out / "dynamics.json", models)

        fit, regions = fit_regions(cfg, demos)
        regions.save(out / "regions.json")
        write_gmm_report(out / "gmm_report.tsv", fit, regions)
        x_held, l_held = demo_states(heldout)
        text, stats = region_report(regions, x_held.astype(float), l_held, regions.log_floors)
        (out / "regions_report.tsv").write_text(text, encoding="utf-8")
        summary.fit["region_heldout_accuracy"] = stats["accuracy"]

        def episode(i):
            return run_assembly_episode(cfg, models, goal, i)

    state_rows = [r for d in demos for r in state_log_rows("demo", d.trajectory_id, d.steps)]
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        # map yields in episode order, so artifact order never depends on scheduling
        for result in pool.map(episode, range(cfg.episodes)):
            summary.episodes.append(result)
            (traces / f"episode-{result.episode:04d}.json").write_text(result.trace.dumps(), encoding="utf-8")

    for e in summary.episodes:
        for step in e.trace.executed:
            state_rows.extend(state_log_rows("episode", e.episode, step.segment))
    write_tsv(out / "state_log.tsv", ("source", "id", "t", "option_id", "state"), state_rows)
    write_tsv(out / "predicted_states.tsv", PREDICTED_HEADER,
              (r for e in summary.episodes for r in predicted_rows(e)))
    write_tsv(out / "episodes.tsv", ("episode", "status", "success", "planning_steps", "chosen",
                                     "human_transport_steps", "cautious_on_human"),
              (_episode_row(e) for e in summary.episodes))
    write_tsv(out / "summary.tsv", ("metric", "value"), summary.rows())
    return summary


def fit_goal_command(demos: list[Trajectory], cfg: ExperimentConfig, out: Path) -> GoalHeuristic:
    out.mkdir(parents=True, exist_ok=True)
    gh = fit_goal_heuristic(demos, cfg.goal_fit)
    gh.save(out / "goal.json")
    write_tsv(out / "goal_report.tsv", GOAL_REPORT_HEADER, goal_report_rows(gh, demos, "train"))
    return gh


def fit_gmm_command(demos: list[Trajectory], cfg: ExperimentConfig, out: Path) -> GaussianMixtureRegions:
    out.mkdir(parents=True, exist_ok=True)
    fit, regions = fit_regions(cfg, demos)
    regions.save(out / "regions.json")
    write_gmm_report(out / "gmm_report.tsv", fit, regions)
    return regions


def regions_command(regions: GaussianMixtureRegions, demos: list[Trajectory], out: Path,
                    quantile: float = 0.0) -> dict:
    x, labels = demo_states(demos)
    x = x.astype(float)
    floors = regions.log_floors
    if floors is None:
        floors = region_log_floors(regions, x, labels, quantile)
    text, stats = region_report(regions, x, labels, floors)
    out.mkdir(parents=True, exist_ok=True)
    (out / "regions_report.tsv").write_text(text, encoding="utf-8")
    return stats
