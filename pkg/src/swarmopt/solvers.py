"""Knowledge-based baselines for the power-control rewards.

``wmmse_max_se`` climbs the sum spectral efficiency with the scalar
weighted-MMSE updates; ``dinkelbach_max_ee`` maximizes the energy-efficiency
ratio by solving a sequence of subtracted-penalty subproblems, each handled
by projected gradient ascent.  ``grid_oracle`` is the desk-scale exhaustive
reference the other solvers are checked against.

All routines are pure given their inputs; multi-start and grid evaluation
reduce with a fixed, index-ordered max so parallel fan-out could never
change the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .env import ChannelRealization, Objective, Reward, batch_rewards, batch_se, energy_efficiency, spectral_efficiency

LN2 = math.log(2.0)


class NumericFailure(ArithmeticError):
    """A solver iterate became non-finite; carries the iteration index."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class UnsupportedSize(ValueError):
    """Instance too large for exhaustive grid evaluation."""


@dataclass(frozen=True)
class SolverResult:
    p_star: np.ndarray
    value: Reward
    iterations_used: int
    converged: bool
    # per-iteration objective: SE per round for WMMSE, lambda per outer step
    # for Dinkelbach; kept for monotonicity checks
    trace: tuple = ()
    final_gap: Optional[float] = None

    def to_json_dict(self) -> dict:
        return {
            "p_star": [float(x) for x in self.p_star],
            "value": self.value.value,
            "objective": self.value.objective.value,
            "converged": self.converged,
            "iterations_used": self.iterations_used,
        }


@dataclass(frozen=True)
class Trajectory:
    best_so_far: np.ndarray
    evals_per_iteration: int


def _admissible(chan: ChannelRealization, p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape != (chan.n_cells,):
        raise ValueError(f"p_init must have shape ({chan.n_cells},), got {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > chan.p_max):
        raise ValueError("p_init must lie in [0, p_max]")
    return arr


def wmmse_max_se(
    chan: ChannelRealization,
    p_init,
    max_iter: int = 1000,
    tol: float = 1e-8,
) -> SolverResult:
    """Scalar WMMSE ascent on the sum spectral efficiency.

    Each round updates the receive scalars u, the MMSE weights w, and the
    amplitudes v = sqrt(p), clamping v to [0, sqrt(p_max)].  Stops once the
    SE improvement over a round drops below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p0 = _admissible(chan, p_init)
    g = chan.gains
    h_diag = np.sqrt(np.diag(g))
    sigma2 = chan.noise_power

    v = np.sqrt(p0)
    se_old = float(batch_se(chan, v * v)[0])
    trace = [se_old]
    iterations = 0
    converged = False
    for it in range(1, max_iter + 1):
        total = g @ (v * v) + sigma2
        u = h_diag * v / total
        w = 1.0 / (1.0 - u * h_diag * v)
        num = w * u * h_diag
        denom = (w * u * u) @ g  # denom_i = sum_j w_j u_j^2 g[j, i]
        with np.errstate(divide="ignore", invalid="ignore"):
            v_new = np.where(denom > 0, num / denom, 0.0)
        if not np.all(np.isfinite(v_new)):
            raise NumericFailure("WMMSE update produced a non-finite amplitude", it)
        v = np.clip(v_new, 0.0, np.sqrt(chan.p_max))
        se_new = float(batch_se(chan, v * v)[0])
        trace.append(se_new)
        iterations = it
        if se_new - se_old < tol:
            converged = True
            break
        se_old = se_new

    p_star = v * v
    return SolverResult(
        p_star=p_star,
        value=spectral_efficiency(chan, p_star),
        iterations_used=iterations,
        converged=converged,
        trace=tuple(trace),
    )


def _subtracted_value_grad(chan: ChannelRealization, lam: float, p: np.ndarray):
    """Value and gradient of f(p) = SE(p) - lam * (sum p + n * P_c), in bits.

    Rates are computed in natural log and converted at the end so the value
    and gradient always come from the same arithmetic.
    """
    g = chan.gains
    total = g @ p + chan.noise_power
    interference = total - np.diag(g) * p
    se_nats = float(np.sum(np.log(total) - np.log(interference)))
    inv_t = 1.0 / total
    inv_i = 1.0 / interference
    grad_nats = g.T @ inv_t - g.T @ inv_i + np.diag(g) * inv_i
    cost = float(p.sum()) + chan.n_cells * chan.p_circuit
    value = se_nats / LN2 - lam * cost
    grad = grad_nats / LN2 - lam
    return value, grad


def subtracted_objective(chan: ChannelRealization, lam: float, p) -> float:
    """f(p) = SE(p) - lam * (sum p + n * P_c) in bits; the Dinkelbach inner objective."""
    value, _ = _subtracted_value_grad(chan, lam, np.asarray(p, dtype=float))
    return value


def subtracted_gradient(chan: ChannelRealization, lam: float, p) -> np.ndarray:
    """Analytic gradient of the Dinkelbach inner objective."""
    _, grad = _subtracted_value_grad(chan, lam, np.asarray(p, dtype=float))
    return grad


def inner_subtracted_max(
    chan: ChannelRealization,
    lam: float,
    p_init,
    max_steps: int = 10_000,
    grad_tol: float = 1e-8,
    armijo_c: float = 1e-4,
) -> np.ndarray:
    """Projected gradient ascent on SE(p) - lam * (sum p + n * P_c).

    Backtracking line search (initial step 1.0, shrink 0.5) with the Armijo
    acceptance test; the projection is a coordinate-wise clamp to
    [0, p_max].  Stops when the projected-gradient norm falls below
    ``grad_tol``.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    p = np.clip(_admissible(chan, np.clip(p_init, 0.0, chan.p_max)), 0.0, chan.p_max)
    value, grad = _subtracted_value_grad(chan, lam, p)
    for step in range(max_steps):
        if not np.all(np.isfinite(grad)):
            raise NumericFailure("non-finite gradient", step)
        projected = np.clip(p + grad, 0.0, chan.p_max) - p
        if float(np.linalg.norm(projected)) < grad_tol:
            break
        t = 1.0
        moved = False
        while t > 1e-20:
            cand = np.clip(p + t * grad, 0.0, chan.p_max)
            cand_value, cand_grad = _subtracted_value_grad(chan, lam, cand)
            if cand_value >= value + armijo_c * float(grad @ (cand - p)):
                p, value, grad = cand, cand_value, cand_grad
                moved = True
                break
            t *= 0.5
        if not moved:
            break  # line search stalled: numerically stationary
    return p


def dinkelbach_max_ee(
    chan: ChannelRealization,
    p_init,
    max_outer: int = 50,
    tol: float = 1e-8,
) -> SolverResult:
    """Dinkelbach ratio maximization for the energy efficiency.

    Each outer step maximizes SE(p) - lam * (sum p + n * P_c) warm-started
    at the previous iterate, then resets lam to the achieved EE.  The warm
    start keeps the lambda sequence non-decreasing even though the inner
    problem is solved only to a stationary point.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = _admissible(chan, p_init)
    lam = energy_efficiency(chan, p).value
    lambdas = [lam]
    converged = False
    gap = None
    iterations = 0
    for it in range(1, max_outer + 1):
        p = inner_subtracted_max(chan, lam, p)
        se = float(batch_se(chan, p)[0])
        cost = float(p.sum()) + chan.n_cells * chan.p_circuit
        gap = se - lam * cost
        lam = se / cost
        lambdas.append(lam)
        iterations = it
        if gap <= tol:
            converged = True
            break
    return SolverResult(
        p_star=p,
        value=energy_efficiency(chan, p),
        iterations_used=iterations,
        converged=converged,
        trace=tuple(lambdas),
        final_gap=gap,
    )


def multi_start_best(
    solver: Callable[[ChannelRealization, np.ndarray], SolverResult],
    chan: ChannelRealization,
    n_starts: int = 5,
    seed: int = 0,
) -> SolverResult:
    """Run ``solver`` from seeded uniform-random starts; keep the best result.

    The first start attaining the maximal value wins ties.  Individual start
    failures are tolerated; the last error is re-raised only if every start
    failed.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    rng = np.random.default_rng(seed)
    best: Optional[SolverResult] = None
    last_error: Optional[Exception] = None
    for _ in range(n_starts):
        p0 = rng.uniform(0.0, chan.p_max, size=chan.n_cells)
        try:
            result = solver(chan, p0)
        except Exception as exc:  # keep trying remaining starts
            last_error = exc
            continue
        if best is None or result.value.value > best.value.value:
            best = result
    if best is None:
        assert last_error is not None
        raise last_error
    return best


def grid_oracle(
    objective: Objective,
    chan: ChannelRealization,
    points_per_axis: int,
    chunk: int = 1 << 18,
) -> SolverResult:
    """Exhaustive argmax over the uniform grid {0, d, ..., p_max}^n.

    Verification oracle only; refuses instances with more than four cells.
    The first grid point attaining the maximum wins, in lexicographic
    axis order.
    """
    if chan.n_cells > 4:
        raise UnsupportedSize(f"grid oracle supports n_cells <= 4, got {chan.n_cells}")
    if points_per_axis < 2:
        raise ValueError("points_per_axis must be >= 2")
    axis = np.linspace(0.0, chan.p_max, points_per_axis)
    mesh = np.meshgrid(*([axis] * chan.n_cells), indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)

    best_value = -np.inf
    best_p = points[0]
    for start in range(0, len(points), chunk):
        block = points[start : start + chunk]
        values = batch_rewards(objective, chan, block)
        idx = int(np.argmax(values))
        if values[idx] > best_value:
            best_value = float(values[idx])
            best_p = block[idx].copy()
    return SolverResult(
        p_star=best_p,
        value=Reward(best_value, Objective(objective)),
        iterations_used=len(points),
        converged=True,
    )


def brute_force_trajectory(
    objective: Objective,
    chan: ChannelRealization,
    actions_per_iter: int,
    n_iter: int,
    seed: int = 0,
    first_iter_actions: Optional[int] = None,
) -> Trajectory:
    """Uniform random search logging the running best per iteration.

    ``first_iter_actions`` overrides the draw count of the first iteration
    so the evaluation budget can mirror an initialization phase.
    """
    if actions_per_iter < 1:
        raise ValueError("actions_per_iter must be >= 1")
    rng = np.random.default_rng(seed)
    best = -np.inf
    series = np.empty(n_iter, dtype=float)
    for t in range(n_iter):
        m = first_iter_actions if (t == 0 and first_iter_actions is not None) else actions_per_iter
        block = rng.uniform(0.0, chan.p_max, size=(m, chan.n_cells))
        values = batch_rewards(objective, chan, block)
        best = max(best, float(values.max()))
        series[t] = best
    return Trajectory(best_so_far=series, evals_per_iteration=actions_per_iter)
