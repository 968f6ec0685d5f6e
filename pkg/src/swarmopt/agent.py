"""One optimizer agent: a reward-sorted elite buffer plus the propose-evaluate step.

Buffers dedup actions by their canonical 3-decimal text form, so two
actions that print identically count as one elite.  Each agent owns its
state for the duration of a step; agents only meet at the coordinator's
sync barrier.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from .env import ChannelRealization, Objective, evaluate
from .llm import IclExample, Origin, format_powers, parse_actions, render_prompt

DEFAULT_BUFFER_CAPACITY = 20
DEFAULT_ICL_K = 10
DEFAULT_N_INIT = 5
DEFAULT_ACTIONS_PER_STEP = 5


class AgentStepError(RuntimeError):
    """Proposer failure during a step, tagged with agent id and iteration."""

    def __init__(self, agent_id: int, iteration: int, cause: Exception):
        super().__init__(f"agent {agent_id}, iteration {iteration}: {cause}")
        self.agent_id = agent_id
        self.iteration = iteration


@dataclass(frozen=True, eq=False)
class ActionRewardPair:
    action: np.ndarray
    reward: float
    iteration_found: int
    agent_id: int
    origin: Origin = Origin.LOCAL

    def __post_init__(self):
        action = np.asarray(self.action, dtype=float).copy()
        action.setflags(write=False)
        object.__setattr__(self, "action", action)
        if not np.isfinite(self.reward):
            raise ValueError("reward must be finite")

    @property
    def key(self) -> str:
        """Canonical textual identity used for dedup."""
        return format_powers(self.action)


def _sort_key(pair: ActionRewardPair):
    # total order: reward desc, then discovery order, then agent, then text
    return (-pair.reward, pair.iteration_found, pair.agent_id, pair.key)


class EliteBuffer:
    """Capacity-bounded collection of pairs kept sorted by descending reward."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.pairs: List[ActionRewardPair] = []

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def best(self) -> ActionRewardPair:
        if not self.pairs:
            raise ValueError("buffer is empty")
        return self.pairs[0]

    @property
    def min_reward(self) -> float:
        if not self.pairs:
            raise ValueError("buffer is empty")
        return self.pairs[-1].reward

    def top(self, k: int) -> List[ActionRewardPair]:
        return self.pairs[: max(k, 0)]

    def insert(self, new_pairs: Iterable[ActionRewardPair]) -> List[ActionRewardPair]:
        """Merge, dedup by canonical action text, re-sort, truncate.

        On a key collision the higher reward wins; ties go to the earlier
        ``iteration_found``, then the lower ``agent_id``.  Returns the pairs
        that fell out (dedup losers and capacity overflow).
        """
        merged = {}
        displaced: List[ActionRewardPair] = []
        for pair in list(self.pairs) + list(new_pairs):
            key = pair.key
            held = merged.get(key)
            if held is None:
                merged[key] = pair
            elif _sort_key(pair) < _sort_key(held):
                merged[key] = pair
                displaced.append(held)
            else:
                displaced.append(pair)
        ranked = sorted(merged.values(), key=_sort_key)
        self.pairs = ranked[: self.capacity]
        displaced.extend(ranked[self.capacity :])
        return displaced


@dataclass(eq=False)
class AgentState:
    agent_id: int
    buffer: EliteBuffer
    improved_last_step: bool
    best_reward: float
    rng: np.random.Generator


@dataclass(eq=False)
class StepReport:
    agent_id: int
    iteration: int
    new_pairs: List[ActionRewardPair]
    improved: bool
    parse_failures: int
    clamped_count: int
    prompt: str
    raw_text: str


def init_agent(
    agent_id: int,
    chan: ChannelRealization,
    objective: Objective,
    n_init: int = DEFAULT_N_INIT,
    buffer_capacity: int = DEFAULT_BUFFER_CAPACITY,
    seed=0,
) -> AgentState:
    """Seed an agent with ``n_init`` uniform-random evaluated actions."""
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    if buffer_capacity < n_init:
        raise ValueError("buffer_capacity must be >= n_init")
    rng = np.random.default_rng(seed)
    buffer = EliteBuffer(buffer_capacity)
    pairs = []
    for _ in range(n_init):
        action = rng.uniform(0.0, chan.p_max, size=chan.n_cells)
        reward = evaluate(objective, chan, action).value
        pairs.append(
            ActionRewardPair(
                action=action, reward=reward, iteration_found=0, agent_id=agent_id
            )
        )
    buffer.insert(pairs)
    return AgentState(
        agent_id=agent_id,
        buffer=buffer,
        improved_last_step=True,
        best_reward=buffer.best.reward,
        rng=rng,
    )


def select_icl(buffer: EliteBuffer, k: int = DEFAULT_ICL_K) -> List[IclExample]:
    """Top-k pairs as ICL examples, tagged with where each was discovered."""
    if len(buffer) == 0:
        raise ValueError("cannot select ICL examples from an empty buffer")
    return [
        IclExample(action=pair.action, reward=pair.reward, origin=pair.origin)
        for pair in buffer.top(k)
    ]


def step_agent(
    state: AgentState,
    chan: ChannelRealization,
    objective: Objective,
    proposer,
    n_actions: int = DEFAULT_ACTIONS_PER_STEP,
    collaborative: bool = False,
    iteration: int = 1,
    icl_k: int = DEFAULT_ICL_K,
) -> StepReport:
    """One propose-evaluate-absorb cycle for a single agent.

    Every parsed action is evaluated; ``improved`` is a strict comparison
    against the agent's best before the step.  A step that parses zero
    actions is valid and simply does not improve.
    """
    examples = select_icl(state.buffer, icl_k)
    prompt = render_prompt(chan.n_cells, chan.p_max, examples, n_actions, collaborative)
    try:
        raw_text = proposer(prompt, examples, n_actions, chan.n_cells, chan.p_max)
    except Exception as exc:
        raise AgentStepError(state.agent_id, iteration, exc) from exc
    batch = parse_actions(raw_text, chan.n_cells, chan.p_max, max_actions=n_actions)

    prior_best = state.best_reward
    new_pairs = [
        ActionRewardPair(
            action=action,
            reward=evaluate(objective, chan, action).value,
            iteration_found=iteration,
            agent_id=state.agent_id,
        )
        for action in batch.actions
    ]
    improved = any(pair.reward > prior_best for pair in new_pairs)
    state.buffer.insert(new_pairs)
    state.best_reward = state.buffer.best.reward
    state.improved_last_step = improved
    return StepReport(
        agent_id=state.agent_id,
        iteration=iteration,
        new_pairs=new_pairs,
        improved=improved,
        parse_failures=batch.parse_failures,
        clamped_count=batch.clamped_count,
        prompt=prompt,
        raw_text=raw_text,
    )
