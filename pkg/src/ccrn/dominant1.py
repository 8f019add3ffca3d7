"""Finite battery with an unbounded relay queue.

With an unbounded relay the policy can only depend on the battery level, and
the battery is a birth-death chain whose stationary law is geometric.  For a
fixed ``mu_p`` that law is fixed too, so after the substitution
``x_i = a_i pi_i``, ``y_i = b_i pi_i`` the throughput maximization is a small
linear program; :func:`algorithm2` scans ``mu_p`` and keeps the best LP value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .general import DEFAULT_THETA
from .lp import LpProblem, solve_lp
from .markov import birth_death_steady_state
from .model import (
    ArrivalRates,
    PRIMARY_SERVICE,
    RELAY_STABILITY,
    Condition,
    D1Policy,
    NoPolicyError,
    StabilityVerdict,
    SystemParams,
    ThroughputPoint,
    exceeds_primary_capacity,
    infeasible_point,
    mu_p_grid,
)


@dataclass(frozen=True)
class BatteryLaw:
    """Stationary battery distribution over levels ``0..M``.

    ``saturated`` marks the case where the battery only ever charges
    (``delta = 1`` with a busy PU), leaving all mass at level ``M``.
    """

    pi: np.ndarray
    ratio: float
    saturated: bool = False


@dataclass(frozen=True)
class D1LpSolution:
    mu_s: float
    x: np.ndarray
    y: np.ndarray
    pi_b: np.ndarray
    mu_p: float

    @property
    def policy(self) -> D1Policy:
        """Policy recovered as ``a_i = x_i / pi_i``, ``b_i = y_i / pi_i``.

        Levels with zero probability get ``a_i = 0``, ``b_i = 1``.
        """
        pos = self.pi_b > 0
        a = np.zeros_like(self.pi_b)
        b = np.ones_like(self.pi_b)
        a[pos] = np.clip(self.x[pos] / self.pi_b[pos], 0.0, 1.0)
        b[pos] = np.clip(self.y[pos] / self.pi_b[pos], 0.0, 1.0)
        return D1Policy(a, b)


def _battery_law(params: SystemParams, rho: float) -> BatteryLaw:
    up = params.delta * rho
    down = (1.0 - rho) * (1.0 - params.delta)
    size = params.M + 1
    if up > 0.0 and down == 0.0:
        pi = np.zeros(size)
        pi[-1] = 1.0
        return BatteryLaw(pi, np.inf, saturated=True)
    ratio = up / down if up > 0.0 else 0.0
    return BatteryLaw(birth_death_steady_state(up, down, size), ratio)


def battery_steady_state(params: SystemParams, lambda_p: float, mu_p: float) -> BatteryLaw:
    """Geometric battery law at load ``rho = lambda_p / mu_p``.

    The battery charges with probability ``delta * rho`` and drains with
    probability ``(1 - rho)(1 - delta)``, so consecutive levels differ by the
    ratio of the two.
    """
    if not 0.0 < mu_p <= 1.0:
        raise ValueError(f"mu_p={mu_p!r} must lie in (0, 1]")
    if lambda_p > 0.0 and lambda_p >= mu_p:
        raise ValueError(f"need lambda_p < mu_p, got lambda_p={lambda_p!r}, mu_p={mu_p!r}")
    return _battery_law(params, lambda_p / mu_p)


def is_battery_saturated(params: SystemParams, lambda_p: float, mu_p: float) -> bool:
    return battery_steady_state(params, lambda_p, mu_p).saturated


def _energy_weights(params: SystemParams) -> np.ndarray:
    """Probability that a PU-idle slot has energy to transmit, per battery level."""
    w = np.ones(params.M + 1)
    w[0] = params.delta
    return w


def check_stability_d1(params: SystemParams, rates: ArrivalRates, policy: D1Policy,
                       mu_p: float) -> StabilityVerdict:
    """Evaluate the ``Q_p``, ``Q_s`` and relay-queue conditions at a given ``mu_p``.

    A load ``lambda_p / mu_p`` of 1 or more is treated as a PU that never
    idles.
    """
    if policy.a.size != params.M + 1:
        raise ValueError(f"policy has {policy.a.size} levels, expected M+1={params.M + 1}")
    rho = min(rates.lambda_p / mu_p, 1.0) if mu_p > 0 else 1.0
    pi = _battery_law(params, rho).pi
    g = params.relay_gain
    w = _energy_weights(params)
    idle = (1.0 - rho) * params.f_sd
    conditions = (
        Condition("Q_p", rates.lambda_p, params.f_pd + g * float(policy.a @ pi)),
        Condition("Q_s", rates.lambda_s, idle * float(np.sum(w * policy.b * pi))),
        Condition("Q_sp", rho * g * float(policy.a @ pi), idle * float(np.sum(w * (1.0 - policy.b) * pi))),
    )
    return StabilityVerdict(conditions)


def solve_p1_star(params: SystemParams, lambda_p: float, mu_p: float) -> D1LpSolution:
    """Best SU service rate over battery-dependent policies that give the PU rate ``mu_p``.

    The strict relay-stability inequality is solved over its closure, so the
    returned ``mu_s`` is the supremum.  Raises :class:`NoPolicyError` when
    the constraints cannot all be met.
    """
    pi = battery_steady_state(params, lambda_p, mu_p).pi
    m1 = params.M + 1
    g = params.relay_gain
    w = _energy_weights(params)
    slack = params.f_sd * (mu_p - lambda_p)

    need = (mu_p - params.f_pd) / g if g > 0 else (0.0 if abs(mu_p - params.f_pd) <= 1e-12 else np.inf)
    if need < -1e-12 or need > 1.0 + 1e-9:
        raise NoPolicyError(PRIMARY_SERVICE, mu_p)
    if lambda_p * g * need > slack * float(w @ pi) + 1e-12:
        raise NoPolicyError(RELAY_STABILITY, mu_p)

    # Variables: x_0..x_M then y_0..y_M.
    c = np.concatenate([np.zeros(m1), (1.0 - lambda_p / mu_p) * params.f_sd * w])
    A_eq = np.concatenate([np.full(m1, g), np.zeros(m1)])[None, :]
    A_ub = np.concatenate([np.full(m1, lambda_p * g), slack * w])[None, :]
    problem = LpProblem(c, A_eq, [mu_p - params.f_pd], A_ub, [slack * float(w @ pi)],
                        lo=0.0, hi=np.concatenate([pi, pi]))
    sol = solve_lp(problem)
    if not sol.optimal:
        raise NoPolicyError(RELAY_STABILITY, mu_p)
    return D1LpSolution(mu_s=sol.objective, x=sol.x[:m1], y=sol.x[m1:], pi_b=pi, mu_p=mu_p)


def algorithm2(params: SystemParams, lambda_p: float, theta: float = DEFAULT_THETA) -> ThroughputPoint:
    """Maximum SU throughput at ``lambda_p`` by scanning ``mu_p`` in steps of ``theta``.

    The scan runs from ``max(lambda_p, f_pd)`` to ``f_pd + (1 - f_pd) f_ps``;
    points with ``mu_p <= lambda_p`` cannot keep ``Q_p`` stable and are
    skipped.  Ties keep the smallest ``mu_p``.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    if exceeds_primary_capacity(params, lambda_p):
        return infeasible_point(lambda_p)
    best = None
    for mu_p in mu_p_grid(max(lambda_p, params.f_pd), params.mu_p_max, theta):
        if mu_p <= lambda_p:
            continue
        try:
            sol = solve_p1_star(params, lambda_p, float(mu_p))
        except NoPolicyError:
            continue
        if best is None or sol.mu_s > best.mu_s:
            best = sol
    if best is None:
        return infeasible_point(lambda_p)
    return ThroughputPoint(lambda_p=lambda_p, mu_s=best.mu_s, mu_p=best.mu_p, policy=best.policy,
                           extra={"pi_b": best.pi_b})
