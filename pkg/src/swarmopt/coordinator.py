"""Multi-agent coordinator: a global elite buffer and three sharing policies.

``sync`` is a serial barrier run after every agent has finished its step.
Under the dynamic policy, improving agents push their new elites into the
global buffer and stalled agents receive the whole global buffer back into
their local one; the passive baseline pushes and dispatches unconditionally
every iteration; the no-collaboration baseline leaves the global buffer
untouched forever.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Sequence

from .agent import AgentState, EliteBuffer, StepReport
from .llm import Origin

DEFAULT_GLOBAL_CAPACITY = 10


class Policy(str, Enum):
    DYNAMIC = "dynamic"
    PASSIVE = "passive"
    NONE = "none"


@dataclass(eq=False)
class CoordinatorState:
    policy: Policy
    global_buffer: EliteBuffer
    push_count: Dict[int, int]
    pop_count: Dict[int, int]


@dataclass(frozen=True)
class SyncReport:
    iteration: int
    pushes: tuple
    pops: tuple
    global_top_reward: float | None
    global_buffer_size: int


def make_coordinator(
    policy: Policy, global_capacity: int = DEFAULT_GLOBAL_CAPACITY
) -> CoordinatorState:
    return CoordinatorState(
        policy=Policy(policy),
        global_buffer=EliteBuffer(global_capacity),
        push_count={},
        pop_count={},
    )


def _dispatch_global(coord: CoordinatorState, agent: AgentState) -> int:
    """Merge the whole global buffer into one agent's local buffer."""
    popped = [replace(pair, origin=Origin.GLOBAL) for pair in coord.global_buffer]
    if not popped:
        return 0
    agent.buffer.insert(popped)
    agent.best_reward = agent.buffer.best.reward
    return len(popped)


def sync(
    coord: CoordinatorState,
    agents: Sequence[AgentState],
    reports: Sequence[StepReport],
) -> SyncReport:
    """Exchange elites between local buffers and the global buffer.

    Dynamic: improving agents push pairs beating the global minimum (any
    pair while the buffer is not full); non-improving agents get the full
    global contents merged into their local buffer and nothing else moves.
    Passive: everyone pushes everything, then everyone receives the global
    contents, every iteration.  None: no-op.
    """
    if len(agents) != len(reports):
        raise ValueError("one report per agent required")
    for agent, report in zip(agents, reports):
        if agent.agent_id != report.agent_id:
            raise ValueError(
                f"report for agent {report.agent_id} paired with agent {agent.agent_id}"
            )
    iterations = {report.iteration for report in reports}
    if len(iterations) > 1:
        raise ValueError(f"reports span multiple iterations: {sorted(iterations)}")
    iteration = reports[0].iteration if reports else 0

    pushes: List[int] = []
    pops: List[int] = []
    if coord.policy is Policy.DYNAMIC:
        for agent, report in zip(agents, reports):
            if not report.improved:
                continue
            admitted = 0
            for pair in report.new_pairs:
                buf = coord.global_buffer
                if len(buf) < buf.capacity or pair.reward > buf.min_reward:
                    buf.insert([pair])
                    admitted += 1
            if admitted:
                coord.push_count[agent.agent_id] = (
                    coord.push_count.get(agent.agent_id, 0) + admitted
                )
                pushes.append(agent.agent_id)
        for agent, report in zip(agents, reports):
            if report.improved:
                continue
            n = _dispatch_global(coord, agent)
            if n:
                coord.pop_count[agent.agent_id] = coord.pop_count.get(agent.agent_id, 0) + n
                pops.append(agent.agent_id)
    elif coord.policy is Policy.PASSIVE:
        for agent, report in zip(agents, reports):
            if report.new_pairs:
                coord.global_buffer.insert(report.new_pairs)
                coord.push_count[agent.agent_id] = (
                    coord.push_count.get(agent.agent_id, 0) + len(report.new_pairs)
                )
                pushes.append(agent.agent_id)
        for agent in agents:
            n = _dispatch_global(coord, agent)
            if n:
                coord.pop_count[agent.agent_id] = coord.pop_count.get(agent.agent_id, 0) + n
                pops.append(agent.agent_id)
    # Policy.NONE: the global buffer stays empty and nothing moves.

    size = len(coord.global_buffer)
    top = coord.global_buffer.best.reward if size else None
    return SyncReport(
        iteration=iteration,
        pushes=tuple(pushes),
        pops=tuple(pops),
        global_top_reward=top,
        global_buffer_size=size,
    )


def best_so_far(agents: Sequence[AgentState], coord: CoordinatorState) -> float:
    """Maximum reward over every local buffer and the global buffer."""
    if not agents:
        raise ValueError("at least one agent required")
    best = max(agent.buffer.best.reward for agent in agents)
    if len(coord.global_buffer):
        best = max(best, coord.global_buffer.best.reward)
    return best
