"""Proposer layer: prompt rendering, free-text action parsing, and proposers.

The prompt deliberately describes nothing but the action box and the reward
feedback: the text never names the system being tuned or any formula, so the
proposer stays a pure black-box optimizer.  Proposals come back as plain
text and are re-admitted through ``parse_actions``, which never raises; bad
lines and out-of-range values only bump counters.

Two proposers share that contract: a remote OpenAI-compatible endpoint and
a seeded mock that emulates exploit / explore / hallucination behavior for
offline runs.  Distinct agents may call the remote endpoint concurrently;
a mock proposer owns its generator state and must not be shared.
"""

from __future__ import annotations

import math
import os
import random
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence

import numpy as np
import requests

API_KEY_ENV = "SWARM_OPT_API_KEY"

_COLLAB_SENTENCE = (
    "Some of these examples were discovered by other optimizers collaborating with you."
)


class Origin(str, Enum):
    LOCAL = "local"
    GLOBAL = "global"


def format_powers(powers) -> str:
    """Canonical 3-decimal rendering of a power vector, e.g. ``[0.000, 2.500]``.

    This string doubles as the identity of an action for buffer dedup.
    """
    return "[" + ", ".join(f"{float(v):.3f}" for v in powers) + "]"


@dataclass(frozen=True, eq=False)
class IclExample:
    """An action-reward pair as shown to the proposer; reward is the recorded one."""

    action: np.ndarray
    reward: float
    origin: Origin = Origin.LOCAL


@dataclass(frozen=True)
class MockParams:
    exploit_sigma: float = 0.1  # stddev of exploit noise, as a fraction of p_max
    explore_prob: float = 0.15
    halluc_prob: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.exploit_sigma) and self.exploit_sigma > 0):
            raise ValueError("exploit_sigma must be positive and finite")
        for name in ("explore_prob", "halluc_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(frozen=True)
class ProposerConfig:
    kind: str = "mock"  # "mock" or "remote"
    model_name: str = "gpt-3.5-turbo"
    endpoint_url: str = ""
    temperature: float = 1.0
    request_timeout: float = 30.0
    max_retries: int = 3
    mock: MockParams = field(default_factory=MockParams)

    def __post_init__(self):
        if self.kind not in ("mock", "remote"):
            raise ValueError(f"unknown proposer kind {self.kind!r}")
        if self.kind == "remote" and (not self.endpoint_url or not self.model_name):
            raise ValueError("remote proposer requires endpoint_url and model_name")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True, eq=False)
class ProposalBatch:
    raw_text: str
    actions: List[np.ndarray]
    parse_failures: int
    clamped_count: int


def render_prompt(
    n_cells: int,
    p_max: float,
    examples: Sequence[IclExample],
    n_actions: int,
    collaborative: bool,
) -> str:
    """Render the fixed optimization prompt with ICL examples.

    Examples appear in ascending reward order (best last, nearest the
    instruction); every numeric value is printed to 3 decimal places.
    """
    if not examples:
        raise ValueError("examples must be non-empty")
    if n_actions < 1:
        raise ValueError("n_actions must be >= 1")
    ordered = sorted(examples, key=lambda e: e.reward)
    example_lines = [
        f"power: {format_powers(e.action)}, reward: {e.reward:.3f}" for e in ordered
    ]
    placeholder = ", ".join(f"v{i + 1}" for i in range(n_cells))
    parts = [
        f"Your task: choose a transmit power value for each of {n_cells} transmitters.",
        f"Each power is a real number between 0 and {p_max:g}.",
        "Each choice of powers receives a scalar reward; your goal is to maximize the reward.",
        "",
        "Here are previously tried powers and their rewards, from worst to best:",
        *example_lines,
        "",
    ]
    if collaborative:
        parts += [_COLLAB_SENTENCE, ""]
    parts += [
        f"Propose {n_actions} new power settings with rewards higher than all of the above.",
        f"Output exactly {n_actions} lines and nothing else, each formatted exactly as:",
        f"power: [{placeholder}]",
    ]
    return "\n".join(parts)


_POWER_LINE = re.compile(r"power\s*:\s*\[([^\[\]]*)\]", re.IGNORECASE)
_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def parse_actions(text: str, n_cells: int, p_max: float, max_actions: int) -> ProposalBatch:
    """Extract ``power: [...]`` lines from free text.  Never raises.

    Non-blank lines that do not yield a well-formed action of the right
    arity count as parse failures; out-of-range values are clamped to
    [0, p_max] and counted per coordinate.  Scanning stops once
    ``max_actions`` actions have been accepted.
    """
    actions: List[np.ndarray] = []
    failures = 0
    clamped = 0
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        if len(actions) >= max_actions:
            break
        match = _POWER_LINE.search(line)
        if match is None:
            failures += 1
            continue
        tokens = [tok.strip() for tok in match.group(1).split(",")]
        if len(tokens) != n_cells or not all(_NUMBER.match(tok) for tok in tokens):
            failures += 1
            continue
        values = np.array([float(tok) for tok in tokens])
        clamped += int(np.sum((values < 0.0) | (values > p_max)))
        actions.append(np.clip(values, 0.0, p_max))
    return ProposalBatch(
        raw_text=text, actions=actions, parse_failures=failures, clamped_count=clamped
    )


class TransportError(RuntimeError):
    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class AuthError(RuntimeError):
    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class ProtocolError(RuntimeError):
    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


def chat_complete(config: ProposerConfig, prompt: str) -> str:
    """Single-turn chat completion against an OpenAI-compatible endpoint.

    Sends the prompt as one user message; returns the first choice's
    content.  Transport errors and 429/5xx responses are retried up to
    ``config.max_retries`` times with exponential backoff (base 1 s,
    factor 2, full jitter).  The bearer token is read from
    ``SWARM_OPT_API_KEY``.
    """
    if config.kind != "remote":
        raise ValueError("chat_complete requires a remote proposer config")
    api_key = os.environ.get(API_KEY_ENV, "")
    if not api_key:
        raise AuthError(f"environment variable {API_KEY_ENV} is not set", attempts=0)
    url = config.endpoint_url.rstrip("/") + "/chat/completions"
    body = {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
    }
    headers = {"Authorization": f"Bearer {api_key}"}

    last_error: Exception | None = None
    attempts = 0
    for attempt in range(config.max_retries + 1):
        if attempt > 0:
            time.sleep(random.uniform(0.0, 1.0 * 2 ** (attempt - 1)))
        attempts = attempt + 1
        try:
            response = requests.post(url, json=body, headers=headers, timeout=config.request_timeout)
        except requests.RequestException as exc:
            last_error = exc
            continue
        status = response.status_code
        if status in (401, 403):
            raise AuthError(f"endpoint rejected credentials (HTTP {status})", attempts)
        if status == 429 or status >= 500:
            last_error = TransportError(f"HTTP {status}", attempts)
            continue
        if status != 200:
            raise ProtocolError(f"unexpected HTTP status {status}", attempts)
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError("malformed response body", attempts) from exc
        if not isinstance(content, str):
            raise ProtocolError("response content is not text", attempts)
        return content
    raise TransportError("retries exhausted", attempts) from last_error


def mock_propose(
    params: MockParams,
    rng: np.random.Generator,
    examples: Sequence[IclExample],
    n_actions: int,
    n_cells: int,
    p_max: float,
) -> str:
    """Deterministic stand-in for an LLM; emits the ``power: [...]`` grammar.

    Per line: with ``halluc_prob`` emit a patterned all-equal vector, else
    with ``explore_prob`` a uniform random vector, else a Gaussian
    perturbation of one of the top-3 examples.  Fully determined by the
    generator state, which this call advances.
    """
    if not examples:
        raise ValueError("examples must be non-empty")
    top = sorted(examples, key=lambda e: e.reward, reverse=True)[:3]
    lines = []
    for _ in range(n_actions):
        if rng.random() < params.halluc_prob:
            vec = np.full(n_cells, rng.uniform(0.0, p_max))
        elif rng.random() < params.explore_prob:
            vec = rng.uniform(0.0, p_max, size=n_cells)
        else:
            anchor = top[int(rng.integers(len(top)))]
            noise = rng.normal(0.0, params.exploit_sigma * p_max, size=n_cells)
            vec = np.clip(np.asarray(anchor.action, dtype=float) + noise, 0.0, p_max)
        lines.append(f"power: {format_powers(vec)}")
    return "\n".join(lines)


class MockProposer:
    """Callable proposer wrapping ``mock_propose`` with an owned rng stream."""

    def __init__(self, params: MockParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng

    def __call__(self, prompt, examples, n_actions, n_cells, p_max) -> str:
        return mock_propose(self.params, self.rng, examples, n_actions, n_cells, p_max)


class RemoteProposer:
    """Callable proposer forwarding the rendered prompt to a chat endpoint."""

    def __init__(self, config: ProposerConfig):
        self.config = config

    def __call__(self, prompt, examples, n_actions, n_cells, p_max) -> str:
        return chat_complete(self.config, prompt)


def make_proposer(config: ProposerConfig, stream_seed):
    """Build the per-agent proposer; ``stream_seed`` feeds the mock rng only."""
    if config.kind == "mock":
        return MockProposer(config.mock, np.random.default_rng(stream_seed))
    return RemoteProposer(config)
