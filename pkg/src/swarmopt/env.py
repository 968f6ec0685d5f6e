"""Interference-channel environment: channel sampling and the SE/EE rewards.

A channel realization is an ``n_cells x n_cells`` matrix of Rayleigh power
gains, ``gains[i, j]`` being the gain from transmitter j into receiver i.
Everything here is a pure function of its inputs: the same channel and the
same power vector always produce bit-identical rewards, so evaluations are
safe to run from any number of workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

DEFAULT_NOISE_POWER = 1.0
DEFAULT_P_MAX = 10.0
DEFAULT_P_CIRCUIT = 1.0


class Objective(str, Enum):
    SE = "SE"
    EE = "EE"


_UNITS = {Objective.SE: "bits/s/Hz", Objective.EE: "bits/Joule/Hz"}


@dataclass(frozen=True)
class Reward:
    """Scalar reward tagged with the objective it was evaluated under."""

    value: float
    objective: Objective

    @property
    def units(self) -> str:
        return _UNITS[self.objective]


@dataclass(frozen=True)
class ChannelRealization:
    """One frozen network instance: gains, noise power, and power budgets."""

    n_cells: int
    gains: np.ndarray
    noise_power: float
    p_max: float
    p_circuit: float
    seed: int

    def __post_init__(self):
        gains = np.ascontiguousarray(self.gains, dtype=float)
        if gains.shape != (self.n_cells, self.n_cells):
            raise ValueError(
                f"gains must be {self.n_cells}x{self.n_cells}, got {gains.shape}"
            )
        if not np.all(np.isfinite(gains)) or np.any(gains < 0):
            raise ValueError("gains must be finite and non-negative")
        if np.any(np.diag(gains) <= 0):
            raise ValueError("diagonal gains must be positive")
        if self.noise_power <= 0 or self.p_max <= 0 or self.p_circuit < 0:
            raise ValueError("require noise_power > 0, p_max > 0, p_circuit >= 0")
        gains.setflags(write=False)
        object.__setattr__(self, "gains", gains)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_cells": self.n_cells,
                "gains": self.gains.ravel().tolist(),
                "noise_power": self.noise_power,
                "p_max": self.p_max,
                "p_circuit": self.p_circuit,
                "seed": self.seed,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ChannelRealization":
        doc = json.loads(text)
        n = int(doc["n_cells"])
        gains = np.asarray(doc["gains"], dtype=float).reshape(n, n)
        return cls(
            n_cells=n,
            gains=gains,
            noise_power=float(doc["noise_power"]),
            p_max=float(doc["p_max"]),
            p_circuit=float(doc["p_circuit"]),
            seed=int(doc["seed"]),
        )


def sample_channel(
    n_cells: int,
    seed: int,
    *,
    noise_power: float = DEFAULT_NOISE_POWER,
    p_max: float = DEFAULT_P_MAX,
    p_circuit: float = DEFAULT_P_CIRCUIT,
) -> ChannelRealization:
    """Draw unit-variance Rayleigh power gains, reproducibly from ``seed``.

    Each complex coefficient has real and imaginary parts ~ N(0, 1/2), so
    the power gain |h|^2 has mean one.
    """
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    rng = np.random.default_rng(seed)
    re = rng.normal(0.0, np.sqrt(0.5), size=(n_cells, n_cells))
    im = rng.normal(0.0, np.sqrt(0.5), size=(n_cells, n_cells))
    gains = re**2 + im**2
    return ChannelRealization(
        n_cells=n_cells,
        gains=gains,
        noise_power=noise_power,
        p_max=p_max,
        p_circuit=p_circuit,
        seed=seed,
    )


def _as_actions(chan: ChannelRealization, actions) -> np.ndarray:
    """Coerce to a (m, n_cells) float array, checking shape and finiteness."""
    arr = np.atleast_2d(np.asarray(actions, dtype=float))
    if arr.ndim != 2 or arr.shape[1] != chan.n_cells:
        raise ValueError(
            f"power vector length {arr.shape[-1]} does not match n_cells={chan.n_cells}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("power values must be finite")
    return arr


def batch_sinr(chan: ChannelRealization, actions) -> np.ndarray:
    """Per-cell SINR for each row of ``actions``; returns an (m, n) array."""
    arr = _as_actions(chan, actions)
    g = chan.gains
    total = arr @ g.T  # total[m, i] = sum_j g[i, j] p[m, j]
    signal = arr * np.diag(g)
    interference = total - signal
    return signal / (chan.noise_power + interference)


def sinr(chan: ChannelRealization, p) -> np.ndarray:
    """SINR vector for one power action."""
    return batch_sinr(chan, p)[0]


def batch_se(chan: ChannelRealization, actions) -> np.ndarray:
    """Sum spectral efficiency (bits/s/Hz) for each row of ``actions``."""
    return np.log2(1.0 + batch_sinr(chan, actions)).sum(axis=1)


def batch_ee(chan: ChannelRealization, actions) -> np.ndarray:
    """Energy efficiency (bits/Joule/Hz) for each row of ``actions``."""
    arr = _as_actions(chan, actions)
    consumed = arr.sum(axis=1) + chan.n_cells * chan.p_circuit
    return batch_se(chan, arr) / consumed


def batch_rewards(objective: Objective, chan: ChannelRealization, actions) -> np.ndarray:
    """Vectorized reward values for a whole (m, n) block of actions."""
    if Objective(objective) is Objective.SE:
        return batch_se(chan, actions)
    return batch_ee(chan, actions)


def spectral_efficiency(chan: ChannelRealization, p) -> Reward:
    """Sum of log2(1 + SINR_i) over cells."""
    return Reward(float(batch_se(chan, p)[0]), Objective.SE)


def energy_efficiency(chan: ChannelRealization, p) -> Reward:
    """SE divided by total consumed power (transmit plus per-cell circuit)."""
    return Reward(float(batch_ee(chan, p)[0]), Objective.EE)


def evaluate(objective: Objective, chan: ChannelRealization, p) -> Reward:
    """Dispatch to the SE or EE reward. Pure and deterministic."""
    if Objective(objective) is Objective.SE:
        return spectral_efficiency(chan, p)
    return energy_efficiency(chan, p)
