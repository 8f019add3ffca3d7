"""Finite battery and finite relay: service rates and the policy searches.

The PU service rate depends on the stationary distribution of the
battery/relay chain, which in turn depends on the PU service rate through
``rho = lambda_p / mu_p``.  :func:`fixed_point_mu_p` resolves that loop on a
grid of ``mu_p`` values; :func:`algorithm1_max_throughput` enumerates every
discretized policy and :func:`heuristic_max_throughput` restricts the search
to one shared admission and one shared selection probability.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .markov import DegenerateChainError, build_transition_matrix, steady_state
from .model import (
    PolicyMatrix,
    SystemParams,
    ThroughputPoint,
    exceeds_primary_capacity,
    infeasible_point,
    mu_p_grid,
    probability_grid,
)

log = logging.getLogger(__name__)

DEFAULT_THETA = 1e-3
DEFAULT_EPSILON = 1e-6
DEFAULT_D_NUM = 11


class InfeasibleLambdaError(ValueError):
    pass


class UnstablePrimaryError(ValueError):
    pass


class ComplexityError(RuntimeError):
    pass


@dataclass(frozen=True)
class FixedPointResult:
    mu_p: float
    dist: np.ndarray
    residual: float
    mu_p_bar: float


def _as_flat(params: SystemParams, dist) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.size != params.n_states:
        raise ValueError(f"distribution has {dist.size} entries, expected {params.n_states}")
    return dist.reshape(params.shape)


def primary_service_rate(params: SystemParams, policy: PolicyMatrix, dist) -> float:
    """``f_pd + (1 - f_pd) f_ps * sum_ij a_ij pi_ij``."""
    pi = _as_flat(params, dist)
    return params.f_pd + params.relay_gain * float(np.sum(policy.a * pi))


def secondary_service_rate(params: SystemParams, policy: PolicyMatrix, dist,
                           mu_p: float, lambda_p: float) -> float:
    """Service rate of ``Q_s``; energy from an empty battery needs a fresh quantum."""
    if mu_p <= lambda_p:
        raise UnstablePrimaryError(f"unstable primary: mu_p={mu_p} <= lambda_p={lambda_p}")
    pi = _as_flat(params, dist)
    weighted = policy.b * pi
    energy = weighted[1:].sum() + params.delta * weighted[0].sum()
    return (1.0 - lambda_p / mu_p) * params.f_sd * float(energy)


def scan_start(params: SystemParams, lambda_p: float, epsilon: float) -> float:
    # mu_p >= f_pd always, so grid points below it can never be fixed points.
    return max(lambda_p + epsilon, params.f_pd)


CROSSING = "crossing"
ARGMIN = "argmin"
SELECTIONS = (CROSSING, ARGMIN)


def _selection_flag(selection: str) -> bool:
    if selection not in SELECTIONS:
        raise ValueError(f"selection must be one of {SELECTIONS}, got {selection!r}")
    return selection == ARGMIN


def fixed_point_mu_p(params: SystemParams, policy: PolicyMatrix, lambda_p: float,
                     theta: float = DEFAULT_THETA, epsilon: float = DEFAULT_EPSILON,
                     selection: str = CROSSING) -> FixedPointResult:
    """Self-consistent PU service rate on the grid ``scan_start, +theta, ..., mu_p_max``.

    ``selection="argmin"`` returns the grid point minimizing
    ``|mu_p_bar(mu_p) - mu_p|`` over the whole grid.  The gap can have more
    than one zero: near ``mu_p = lambda_p`` the PU is almost never idle, the
    relay fills and ``mu_p_bar`` drops toward ``f_pd``, which creates a
    repelling root whenever ``lambda_p >= f_pd``.  ``selection="crossing"``
    (the default) therefore takes the last grid step where the gap turns
    from non-negative to negative, i.e. the root that ``mu_p <- mu_p_bar``
    converges to, and picks the side with the smaller gap.  When no such
    step exists the policy cannot sustain ``lambda_p``
    (:class:`InfeasibleLambdaError`).

    Grid points whose chain is degenerate are skipped.  Ties resolve to the
    smallest ``mu_p``.
    """
    use_argmin = _selection_flag(selection)
    if theta <= 0 or epsilon <= 0:
        raise ValueError("theta and epsilon must be positive")
    grid = mu_p_grid(scan_start(params, lambda_p, epsilon), params.mu_p_max, theta)
    if grid.size == 0:
        raise InfeasibleLambdaError(f"infeasible lambda_p={lambda_p}: empty mu_p scan range")

    points = []
    cached = None
    for mu_p in grid:
        if lambda_p == 0.0 and cached is not None:
            pi = cached
        else:
            try:
                pi = steady_state(build_transition_matrix(params, policy, lambda_p / mu_p))
            except DegenerateChainError:
                continue
            cached = pi
        points.append((float(mu_p), pi, primary_service_rate(params, policy, pi)))
    if not points:
        raise DegenerateChainError([])

    def result(k):
        mu_p, pi, mu_bar = points[k]
        return FixedPointResult(mu_p=mu_p, dist=pi, residual=abs(mu_bar - mu_p), mu_p_bar=mu_bar)

    gaps = [mu_bar - mu_p for mu_p, _, mu_bar in points]
    if use_argmin:
        return result(min(range(len(points)), key=lambda k: (abs(gaps[k]), k)))
    last = [k for k in range(len(gaps)) if gaps[k] >= 0.0 and (k == len(gaps) - 1 or gaps[k + 1] < 0.0)]
    if not last:
        raise InfeasibleLambdaError(
            f"no stable fixed point: mu_p_bar < mu_p on the whole grid for lambda_p={lambda_p}")
    k = last[-1]
    if k + 1 < len(gaps) and abs(gaps[k + 1]) < abs(gaps[k]):
        k += 1
    return result(k)


def evaluate_policy(params: SystemParams, policy: PolicyMatrix, lambda_p: float,
                    theta: float = DEFAULT_THETA, epsilon: float = DEFAULT_EPSILON,
                    selection: str = CROSSING):
    """SU service rate of one policy at its fixed point.

    Returns ``(mu_s, fixed_point)``; ``mu_s`` is ``None`` when the chain is
    degenerate everywhere or the policy cannot keep ``Q_p`` stable.
    """
    try:
        fp = fixed_point_mu_p(params, policy, lambda_p, theta, epsilon, selection)
    except (DegenerateChainError, InfeasibleLambdaError):
        return None, None
    if not fp.mu_p_bar > lambda_p:
        return None, fp
    return secondary_service_rate(params, policy, fp.dist, fp.mu_p, lambda_p), fp


def free_cells(params: SystemParams) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Cells whose admission / selection probability is a decision variable."""
    M, N = params.M, params.N
    a_cells = [(i, j) for i in range(M + 1) for j in range(N)]
    b_cells = [(i, j) for i in range(M + 1) for j in range(1, N + 1)]
    return a_cells, b_cells


def combination_count(params: SystemParams, d_num: int, heuristic: bool = False) -> int:
    a_cells, b_cells = free_cells(params)
    if heuristic:
        return d_num ** (int(bool(a_cells)) + int(bool(b_cells)))
    return d_num ** (len(a_cells) + len(b_cells))


def _search(params, lambda_p, d_num, theta, epsilon, heuristic, workers, max_combinations,
            selection, full_scan):
    use_argmin = _selection_flag(selection)
    if exceeds_primary_capacity(params, lambda_p):
        return infeasible_point(lambda_p)
    grid = mu_p_grid(scan_start(params, lambda_p, epsilon), params.mu_p_max, theta)
    if grid.size == 0:
        return infeasible_point(lambda_p)

    a_cells, b_cells = free_cells(params)
    n_vars_a = len(a_cells) if not heuristic else int(bool(a_cells))
    n_vars_b = len(b_cells) if not heuristic else int(bool(b_cells))
    a_var = np.full(params.shape, -1, dtype=np.int64)
    b_var = np.full(params.shape, -1, dtype=np.int64)
    for k, cell in enumerate(a_cells):
        a_var[cell] = 0 if heuristic else k
    for k, cell in enumerate(b_cells):
        b_var[cell] = n_vars_a + (0 if heuristic else k)
    n_vars = n_vars_a + n_vars_b
    total = d_num ** n_vars
    if max_combinations is not None and total > max_combinations:
        raise ComplexityError(
            f"{total} policy combinations (d_num={d_num}, {n_vars} free cells) "
            f"exceeds the limit of {max_combinations}")

    values = probability_grid(d_num)
    task = (params.f_pd, params.f_ps, params.f_sd, params.delta, a_var, b_var, values,
            float(lambda_p), grid)
    extra = (use_argmin, bool(full_scan))
    chunks = _chunks(total, workers)
    if workers and workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [(task, lo, hi, extra) for lo, hi in chunks]))
    else:
        parts = [_run_chunk((task, lo, hi, extra)) for lo, hi in chunks]
    best = _reduce(parts)
    if best is None:
        return infeasible_point(lambda_p)
    mu_s, mu_p, index = best
    digits = _kernels.decode(index, n_vars, d_num)
    a = np.where(a_var >= 0, values[digits[np.maximum(a_var, 0)]], 0.0)
    b = np.where(b_var >= 0, values[digits[np.maximum(b_var, 0)]], 1.0)
    return ThroughputPoint(lambda_p=lambda_p, mu_s=mu_s, mu_p=mu_p, policy=PolicyMatrix(a, b))


def _chunks(total: int, workers) -> list[tuple[int, int]]:
    n = max(1, int(workers or 1))
    step = -(-total // n)
    return [(lo, min(lo + step, total)) for lo in range(0, total, step)]


def _run_chunk(args):
    task, lo, hi, extra = args
    return _kernels.search_policies(*task, lo, hi, *extra)


def _reduce(parts):
    """Deterministic max: higher mu_s, then smaller mu_p, then earlier combination."""
    best = None
    for mu_s, mu_p, index, _solves in parts:
        if index < 0:
            continue
        key = (mu_s, -mu_p, -index)
        if best is None or key > (best[0], -best[1], -best[2]):
            best = (mu_s, mu_p, index)
    return best


def algorithm1_max_throughput(params: SystemParams, lambda_p: float, d_num: int = DEFAULT_D_NUM,
                              theta: float = DEFAULT_THETA, epsilon: float = DEFAULT_EPSILON,
                              workers: int = 1, max_combinations=None,
                              selection: str = CROSSING, full_scan: bool = False) -> ThroughputPoint:
    """Exhaustive search over every discretized state-dependent policy.

    Cost grows as ``d_num ** (2 (M+1) N)``; ``max_combinations`` turns that
    into a :class:`ComplexityError` instead of a very long run.
    ``selection`` is the operating-point rule of :func:`fixed_point_mu_p`.
    ``full_scan`` evaluates every ``mu_p`` grid point per combination
    instead of bracketing the crossing (slow; used as a reference).
    """
    return _search(params, lambda_p, d_num, theta, epsilon, False, workers, max_combinations,
                   selection, full_scan)


def heuristic_max_throughput(params: SystemParams, lambda_p: float, d_num: int = DEFAULT_D_NUM,
                             theta: float = DEFAULT_THETA, epsilon: float = DEFAULT_EPSILON,
                             workers: int = 1, selection: str = CROSSING,
                             full_scan: bool = False) -> ThroughputPoint:
    """Search with one admission and one selection probability shared by all free cells."""
    return _search(params, lambda_p, d_num, theta, epsilon, True, workers, None,
                   selection, full_scan)


def brute_force_max_throughput(params: SystemParams, lambda_p: float, d_num: int,
                               theta: float = DEFAULT_THETA, epsilon: float = DEFAULT_EPSILON,
                               selection: str = CROSSING):
    """Slow reference enumeration built on :func:`evaluate_policy` (small chains only)."""
    values = probability_grid(d_num)
    a_cells, b_cells = free_cells(params)
    best = None
    for combo in itertools.product(values, repeat=len(a_cells) + len(b_cells)):
        a = np.zeros(params.shape)
        b = np.ones(params.shape)
        for cell, v in zip(a_cells, combo):
            a[cell] = v
        for cell, v in zip(b_cells, combo[len(a_cells):]):
            b[cell] = v
        policy = PolicyMatrix(a, b)
        mu_s, fp = evaluate_policy(params, policy, lambda_p, theta, epsilon, selection)
        if mu_s is None:
            continue
        if best is None or (mu_s, -fp.mu_p) > (best.mu_s, -best.mu_p):
            best = ThroughputPoint(lambda_p=lambda_p, mu_s=mu_s, mu_p=fp.mu_p, policy=policy)
    return best if best is not None else infeasible_point(lambda_p)
