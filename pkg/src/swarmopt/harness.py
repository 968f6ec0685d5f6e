"""Experiment orchestration: methods x seeds, normalization, artifact files.

One experiment fixes a channel instance, computes the knowledge-based
baseline once (WMMSE for SE, Dinkelbach for EE, best of 5 starts), then
runs every requested method from every run seed.  All randomness is
derived from (run_seed, agent_id) streams, so a finished experiment is
reproducible byte-for-byte; wall-clock timestamps appear only in the
summary file.  (method, seed) runs are independent and could be fanned
out to workers; artifact files are written by this process alone.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .agent import (
    AgentStepError,
    DEFAULT_BUFFER_CAPACITY,
    init_agent,
    step_agent,
)
from .config import ExperimentConfig, config_to_dict
from .coordinator import (
    DEFAULT_GLOBAL_CAPACITY,
    Policy,
    best_so_far,
    make_coordinator,
    sync,
)
from .env import Objective, sample_channel
from .llm import make_proposer
from .solvers import (
    SolverResult,
    brute_force_trajectory,
    dinkelbach_max_ee,
    multi_start_best,
    wmmse_max_se,
)

THRESHOLDS = (0.9, 0.95, 0.99)
CSV_HEADER = ["method", "seed", "iteration", "best_so_far", "normalized"]
_BRUTE_FORCE_STREAM = 191  # fixed tag separating the brute-force rng stream


@dataclass(frozen=True)
class RunTrajectory:
    """Best-so-far series for one (method, seed); index 0 is the post-init state."""

    method: str
    seed: int
    best_so_far: np.ndarray
    cumulative_evals: np.ndarray


@dataclass(eq=False)
class RunArtifacts:
    config: ExperimentConfig
    baseline: SolverResult
    baseline_value: float
    trajectories: Dict[str, List[RunTrajectory]]
    normalized: Dict[str, List[np.ndarray]]
    csv_path: Path
    transcript_path: Path
    summary_path: Path
    failures: List[dict]


class TranscriptWriter:
    """Appends one JSON object per line; each record carries method and seed."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self.method = ""
        self.seed = 0

    def set_run(self, method: str, seed: int):
        self.method = method
        self.seed = seed

    def write(self, record: dict):
        tagged = {"method": self.method, "seed": self.seed, **record}
        self._fh.write(json.dumps(tagged) + "\n")

    def close(self):
        self._fh.close()


def agent_init_seed(run_seed: int, agent_id: int):
    return [run_seed, agent_id, 0]


def proposer_stream_seed(mock_seed: int, run_seed: int, agent_id: int):
    return [mock_seed, run_seed, agent_id, 1]


def baseline_solver(objective: Objective):
    """The knowledge-based reference solver for an objective."""
    if Objective(objective) is Objective.SE:
        return wmmse_max_se
    return dinkelbach_max_ee


def compute_baseline(config: ExperimentConfig, chan) -> SolverResult:
    solver = baseline_solver(Objective(config.objective))
    return multi_start_best(solver, chan, n_starts=5, seed=config.channel_seed)


def run_policy_trajectory(
    config: ExperimentConfig,
    chan,
    method: str,
    run_seed: int,
    transcript: Optional[TranscriptWriter] = None,
) -> RunTrajectory:
    """Run one (method, seed) pair and return its trajectory.

    ``method`` is one of the coordinator policies or ``brute_force``; the
    brute-force budget mirrors the agents' exactly (init draw included).
    """
    objective = Objective(config.objective)
    per_iter = config.n_agents * config.actions_per_step
    init_evals = config.n_agents * config.n_init

    if method == "brute_force":
        traj = brute_force_trajectory(
            objective,
            chan,
            actions_per_iter=per_iter,
            n_iter=config.n_iterations + 1,
            seed=[run_seed, _BRUTE_FORCE_STREAM],
            first_iter_actions=init_evals,
        )
        cumulative = init_evals + per_iter * np.arange(config.n_iterations + 1)
        if transcript is not None:
            for t in range(config.n_iterations + 1):
                transcript.write(
                    {
                        "record": "iteration_summary",
                        "iteration": t,
                        "cumulative_evals": int(cumulative[t]),
                        "best_so_far": float(traj.best_so_far[t]),
                    }
                )
        return RunTrajectory(
            method=method,
            seed=run_seed,
            best_so_far=traj.best_so_far.copy(),
            cumulative_evals=cumulative,
        )

    policy = Policy(method)
    capacity = max(DEFAULT_BUFFER_CAPACITY, config.n_init, config.icl_k)
    agents = []
    proposers = []
    for i in range(config.n_agents):
        state = init_agent(
            i, chan, objective,
            n_init=config.n_init,
            buffer_capacity=capacity,
            seed=agent_init_seed(run_seed, i),
        )
        agents.append(state)
        proposers.append(
            make_proposer(
                config.proposer,
                proposer_stream_seed(config.proposer.mock.seed, run_seed, i),
            )
        )
        if transcript is not None:
            transcript.write(
                {
                    "record": "agent_init",
                    "iteration": 0,
                    "agent_id": i,
                    "actions": [pair.action.tolist() for pair in state.buffer],
                    "rewards": [pair.reward for pair in state.buffer],
                }
            )
    coord = make_coordinator(policy, DEFAULT_GLOBAL_CAPACITY)
    collaborative = policy is not Policy.NONE

    best = [best_so_far(agents, coord)]
    cumulative = [init_evals]
    if transcript is not None:
        transcript.write(
            {
                "record": "iteration_summary",
                "iteration": 0,
                "cumulative_evals": cumulative[0],
                "best_so_far": best[0],
            }
        )
    for t in range(1, config.n_iterations + 1):
        reports = []
        for state, proposer in zip(agents, proposers):
            report = step_agent(
                state, chan, objective, proposer,
                n_actions=config.actions_per_step,
                collaborative=collaborative,
                iteration=t,
                icl_k=config.icl_k,
            )
            reports.append(report)
            if transcript is not None:
                transcript.write(
                    {
                        "record": "llm_call",
                        "iteration": t,
                        "agent_id": report.agent_id,
                        "prompt": report.prompt,
                        "response": report.raw_text,
                        "parse_failures": report.parse_failures,
                        "clamped_count": report.clamped_count,
                    }
                )
                transcript.write(
                    {
                        "record": "agent_step",
                        "iteration": t,
                        "agent_id": report.agent_id,
                        "actions": [p.action.tolist() for p in report.new_pairs],
                        "rewards": [p.reward for p in report.new_pairs],
                        "improved": report.improved,
                        "parse_failures": report.parse_failures,
                        "clamped_count": report.clamped_count,
                    }
                )
        sync_report = sync(coord, agents, reports)
        if transcript is not None:
            transcript.write(
                {
                    "record": "coordinator",
                    "iteration": t,
                    "pushes": list(sync_report.pushes),
                    "pops": list(sync_report.pops),
                    "global_top_reward": sync_report.global_top_reward,
                    "global_buffer_size": sync_report.global_buffer_size,
                }
            )
        best.append(best_so_far(agents, coord))
        cumulative.append(cumulative[-1] + sum(len(r.new_pairs) for r in reports))
        if transcript is not None:
            transcript.write(
                {
                    "record": "iteration_summary",
                    "iteration": t,
                    "cumulative_evals": cumulative[-1],
                    "best_so_far": best[-1],
                }
            )
    return RunTrajectory(
        method=method,
        seed=run_seed,
        best_so_far=np.array(best),
        cumulative_evals=np.array(cumulative),
    )


def normalize_trajectories(
    trajectories: Dict[str, List[RunTrajectory]], baseline_value: float
) -> Dict[str, List[np.ndarray]]:
    """Element-wise division of every best-so-far series by the baseline."""
    if not baseline_value > 0:
        raise ValueError(f"baseline_value must be positive, got {baseline_value}")
    return {
        method: [traj.best_so_far / baseline_value for traj in runs]
        for method, runs in trajectories.items()
    }


def first_crossing(normalized: np.ndarray, theta: float) -> Optional[int]:
    """First iteration index with normalized reward >= theta, or None."""
    hits = np.nonzero(normalized >= theta)[0]
    return int(hits[0]) if hits.size else None


def threshold_crossings(normalized: Dict[str, List[np.ndarray]]) -> dict:
    """Per-method first-crossing iterations and their across-seed median."""
    out: dict = {}
    for method, series_list in normalized.items():
        per_theta = {}
        for theta in THRESHOLDS:
            crossings = [first_crossing(series, theta) for series in series_list]
            as_floats = [np.inf if c is None else float(c) for c in crossings]
            median = float(np.median(as_floats)) if as_floats else np.inf
            per_theta[str(theta)] = {
                "per_seed": crossings,
                "median": None if np.isinf(median) else median,
            }
        out[method] = per_theta
    return out


def write_csv(
    trajectories: Dict[str, List[RunTrajectory]],
    normalized: Dict[str, List[np.ndarray]],
    path,
) -> Path:
    """One row per (method, seed, iteration), full shortest-round-trip precision."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for method, runs in trajectories.items():
            for traj, norm in zip(runs, normalized[method]):
                for t in range(len(traj.best_so_far)):
                    writer.writerow(
                        [
                            method,
                            traj.seed,
                            t,
                            repr(float(traj.best_so_far[t])),
                            repr(float(norm[t])),
                        ]
                    )
    return path


def run_experiment(config: ExperimentConfig) -> RunArtifacts:
    """Run every (policy, seed) pair in the config and write all artifacts.

    Proposer failures abort only the affected run and are recorded in the
    summary; at least one run must complete.
    """
    started_at = datetime.now(timezone.utc).isoformat()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    chan = sample_channel(
        config.n_cells,
        config.channel_seed,
        noise_power=config.noise_power,
        p_max=config.p_max,
        p_circuit=config.p_circuit,
    )
    baseline = compute_baseline(config, chan)
    baseline_value = baseline.value.value

    transcript = TranscriptWriter(out_dir / "transcript.jsonl")
    trajectories: Dict[str, List[RunTrajectory]] = {}
    failures: List[dict] = []
    try:
        for method in config.policies:
            runs: List[RunTrajectory] = []
            for run_seed in config.run_seeds:
                transcript.set_run(method, run_seed)
                try:
                    runs.append(
                        run_policy_trajectory(config, chan, method, run_seed, transcript)
                    )
                except AgentStepError as exc:
                    failures.append(
                        {
                            "method": method,
                            "seed": run_seed,
                            "agent_id": exc.agent_id,
                            "iteration": exc.iteration,
                            "error": str(exc),
                        }
                    )
            if runs:
                trajectories[method] = runs
    finally:
        transcript.close()
    if not trajectories:
        raise RuntimeError("every (policy, seed) run failed; see recorded failures")

    normalized = normalize_trajectories(trajectories, baseline_value)
    csv_path = write_csv(trajectories, normalized, out_dir / "trajectories.csv")

    summary = {
        "config": config_to_dict(config),
        "channel": json.loads(chan.to_json()),
        "baseline_value": baseline_value,
        "baseline": baseline.to_json_dict(),
        "threshold_crossings": threshold_crossings(normalized),
        "failures": failures,
        "started_at": started_at,
        "finished_at": datetime.now(timezone.utc).isoformat(),
    }
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=False) + "\n", encoding="utf-8")

    return RunArtifacts(
        config=config,
        baseline=baseline,
        baseline_value=baseline_value,
        trajectories=trajectories,
        normalized=normalized,
        csv_path=csv_path,
        transcript_path=transcript.path,
        summary_path=summary_path,
        failures=failures,
    )
