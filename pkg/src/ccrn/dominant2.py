"""Finite relay queue with an unbounded battery.

Whether energy ever runs short depends on the battery drift: it charges with
probability ``delta * rho`` and drains with probability
``(1 - rho)(1 - delta)``.  If draining wins the battery empties now and then
and an idle slot has energy with probability ``delta / (1 - rho)``
(energy-limited); otherwise energy is always available.  In either regime the
relay is a birth-death chain, and with ``x_j = a_j pi_j``, ``y_j = b_j pi_j``
the throughput maximization at fixed ``mu_p`` is a linear program.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .general import DEFAULT_THETA
from .lp import LpProblem, solve_lp
from .markov import NonNormalizableError, birth_death_steady_state
from .model import (
    PRIMARY_SERVICE,
    RELAY_FLOW,
    ArrivalRates,
    Condition,
    D2Policy,
    NoPolicyError,
    StabilityVerdict,
    SystemParams,
    ThroughputPoint,
    exceeds_primary_capacity,
    infeasible_point,
    mu_p_grid,
)


class Regime(enum.Enum):
    LIMITED = "Limited"
    UNLIMITED = "Unlimited"


@dataclass(frozen=True)
class EnergyRegime:
    """Battery drift at a given load; ``Limited`` iff ``lambda_b < mu_b``."""

    tag: Regime
    lambda_b: float
    mu_b: float

    @property
    def limited(self) -> bool:
        return self.tag is Regime.LIMITED


@dataclass(frozen=True)
class D2LpSolution:
    mu_s: float
    x: np.ndarray
    y: np.ndarray
    pi_sp: np.ndarray
    mu_p: float
    regime: Regime

    @property
    def policy(self) -> D2Policy:
        """Policy recovered as ``a_j = x_j / pi_j``, ``b_j = y_j / pi_j``.

        Zero-probability levels are made transient so the recovered chain,
        started from an empty relay, settles on ``pi_sp``: levels below the
        support always admit and never relay (``a=1, b=1``), levels above it
        never admit and always relay (``a=0, b=0``).  A zero level strictly
        inside the support splits the chain; it keeps ``a=0, b=1``.
        """
        pos = self.pi_sp > 0
        a = np.zeros_like(self.pi_sp)
        b = np.ones_like(self.pi_sp)
        if pos.any():
            support = np.flatnonzero(pos)
            a[:support[0]] = 1.0
            b[support[-1] + 1:] = 0.0
        a[pos] = np.clip(self.x[pos] / self.pi_sp[pos], 0.0, 1.0)
        b[pos] = np.clip(self.y[pos] / self.pi_sp[pos], 0.0, 1.0)
        return D2Policy(a, b)


def _regime_at(params: SystemParams, rho: float) -> EnergyRegime:
    lambda_b = params.delta * rho
    mu_b = (1.0 - rho) * (1.0 - params.delta)
    tag = Regime.LIMITED if lambda_b < mu_b else Regime.UNLIMITED
    return EnergyRegime(tag, lambda_b, mu_b)


def energy_regime(params: SystemParams, lambda_p: float, mu_p: float) -> EnergyRegime:
    """Energy regime at ``rho = lambda_p / mu_p``; a tie counts as Unlimited."""
    if not 0.0 < mu_p <= 1.0:
        raise ValueError(f"mu_p={mu_p!r} must lie in (0, 1]")
    if lambda_p > 0.0 and lambda_p >= mu_p:
        raise ValueError(f"need lambda_p < mu_p, got lambda_p={lambda_p!r}, mu_p={mu_p!r}")
    return _regime_at(params, lambda_p / mu_p)


def _idle_energy(params: SystemParams, rho: float, regime: Regime) -> float:
    """Per-slot probability that the PU is idle and the SU has energy."""
    return params.delta if regime is Regime.LIMITED else 1.0 - rho


def _relay_rates(params: SystemParams, rho: float, policy: D2Policy, regime: Regime):
    up = rho * params.relay_gain * policy.a
    down = _idle_energy(params, rho, regime) * params.f_sd * (1.0 - policy.b)
    return up, down


def _absorbed_law(up: np.ndarray, down: np.ndarray) -> np.ndarray:
    """Stationary law reached from an empty relay when some level cannot drain.

    The chain climbs past a level with zero downward rate and never comes
    back, so the law lives above the highest such level it can reach.
    """
    size = up.size
    base = 0
    for k in range(size - 1):
        if up[k] <= 0.0:
            break
        if down[k + 1] <= 0.0:
            base = k + 1
    pi = np.zeros(size)
    pi[base:] = birth_death_steady_state(up[base:], np.concatenate([[0.0], down[base + 1:]]), size - base)
    return pi


def relay_steady_state(params: SystemParams, lambda_p: float, mu_p: float, policy: D2Policy,
                       regime: Optional[Regime] = None) -> np.ndarray:
    """Relay occupancy law over ``0..N`` in the given energy regime.

    The regime defaults to the one at ``(lambda_p, mu_p)``.  Raises
    :class:`~ccrn.markov.NonNormalizableError` naming the first level that
    is entered but can never drain (``b = 1`` there with admissions below).
    """
    if policy.a.size != params.N + 1:
        raise ValueError(f"policy has {policy.a.size} levels, expected N+1={params.N + 1}")
    if regime is None:
        regime = energy_regime(params, lambda_p, mu_p).tag
    up, down = _relay_rates(params, lambda_p / mu_p, policy, regime)
    return birth_death_steady_state(up, down, params.N + 1)


def check_stability_d2(params: SystemParams, rates: ArrivalRates, policy: D2Policy,
                       mu_p: float) -> StabilityVerdict:
    """Evaluate the ``Q_p`` and ``Q_s`` conditions at a given ``mu_p``.

    The verdict carries the energy regime.  A load of 1 or more is treated
    as a PU that never idles; a relay level that cannot drain holds the
    chain, as it would in operation.
    """
    if policy.a.size != params.N + 1:
        raise ValueError(f"policy has {policy.a.size} levels, expected N+1={params.N + 1}")
    rho = min(rates.lambda_p / mu_p, 1.0) if mu_p > 0 else 1.0
    regime = _regime_at(params, rho).tag
    up, down = _relay_rates(params, rho, policy, regime)
    try:
        pi = birth_death_steady_state(up, down, params.N + 1)
    except NonNormalizableError:
        pi = _absorbed_law(up, down)
    service = _idle_energy(params, rho, regime) * params.f_sd * float(policy.b @ pi)
    conditions = (
        Condition("Q_p", rates.lambda_p, params.f_pd + params.relay_gain * float(policy.a @ pi)),
        Condition("Q_s", rates.lambda_s, service),
    )
    return StabilityVerdict(conditions, regime=regime.value)


def _solve_relay_lp(params: SystemParams, lambda_p: float, mu_p: float, regime: Regime) -> D2LpSolution:
    if not 0.0 < mu_p <= 1.0 or (lambda_p > 0.0 and lambda_p >= mu_p):
        raise ValueError(f"need 0 <= lambda_p < mu_p <= 1, got lambda_p={lambda_p!r}, mu_p={mu_p!r}")
    g = params.relay_gain
    if not params.f_pd - 1e-12 <= mu_p <= params.mu_p_max + 1e-12:
        raise NoPolicyError(PRIMARY_SERVICE, mu_p)
    # Grid round-off must not push the admission mass past 0 or 1.
    mu_p = min(max(mu_p, params.f_pd), params.mu_p_max)

    n1 = params.N + 1
    X, Y, P = 0, n1, 2 * n1  # column offsets of x, y, pi
    nv = 3 * n1
    rho = lambda_p / mu_p
    idle = _idle_energy(params, rho, regime)
    # Relay balance, multiplied through by mu_p: mu_p * idle * f_sd * (pi - y)_{j+1} = lambda_p * g * x_j.
    drain = mu_p * idle * params.f_sd

    rows, rhs = [], []
    row = np.zeros(nv)
    row[X:X + n1] = g
    rows.append(row)
    rhs.append(mu_p - params.f_pd)
    row = np.zeros(nv)
    row[Y] = 1.0
    row[P] = -1.0
    rows.append(row)
    rhs.append(0.0)
    row = np.zeros(nv)
    row[P:P + n1] = 1.0
    rows.append(row)
    rhs.append(1.0)
    for j in range(params.N):
        row = np.zeros(nv)
        row[P + j + 1] = drain
        row[Y + j + 1] = -drain
        row[X + j] = -lambda_p * g
        rows.append(row)
        rhs.append(0.0)

    ub = np.zeros((2 * n1, nv))
    for j in range(n1):
        ub[j, X + j] = 1.0
        ub[j, P + j] = -1.0
        ub[n1 + j, Y + j] = 1.0
        ub[n1 + j, P + j] = -1.0

    c = np.zeros(nv)
    c[Y:Y + n1] = idle * params.f_sd
    hi = np.ones(nv)
    hi[X + params.N] = 0.0
    sol = solve_lp(LpProblem(c, np.array(rows), rhs, ub, np.zeros(2 * n1), lo=0.0, hi=hi))
    if not sol.optimal:
        raise NoPolicyError(RELAY_FLOW, mu_p)
    x = sol.x
    return D2LpSolution(mu_s=sol.objective, x=x[X:X + n1], y=x[Y:Y + n1], pi_sp=x[P:P + n1],
                        mu_p=mu_p, regime=regime)


def solve_p2_star(params: SystemParams, lambda_p: float, mu_p: float) -> D2LpSolution:
    """Best SU service rate at PU rate ``mu_p`` when energy is limited.

    Each idle slot carries energy with probability ``delta / (1 - rho)``,
    so the objective is ``delta * f_sd * sum(y)``.  Raises
    :class:`NoPolicyError` when the constraints cannot all be met.
    """
    return _solve_relay_lp(params, lambda_p, mu_p, Regime.LIMITED)


def solve_p3(params: SystemParams, lambda_p: float, mu_p: float) -> D2LpSolution:
    """Best SU service rate at PU rate ``mu_p`` when energy never runs out.

    Every idle slot can be used, so the objective is
    ``(1 - rho) * f_sd * sum(y)``.
    """
    return _solve_relay_lp(params, lambda_p, mu_p, Regime.UNLIMITED)


def algorithm3(params: SystemParams, lambda_p: float, theta: float = DEFAULT_THETA,
               energy_limited: bool = False) -> ThroughputPoint:
    """Maximum SU throughput at ``lambda_p`` by scanning ``mu_p`` in steps of ``theta``.

    Each grid point is solved with the LP of its energy regime.  With
    ``energy_limited`` the scan starts at ``max(lambda_p / (1 - delta), f_pd)``
    so the battery keeps draining, and only the limited-energy LP is used
    (the boundary point is included).  Ties keep the smallest ``mu_p``.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    if energy_limited and params.delta >= 1.0:
        raise ValueError("the energy-limited system needs delta < 1")
    if exceeds_primary_capacity(params, lambda_p):
        return infeasible_point(lambda_p)
    if energy_limited:
        start = max(lambda_p / (1.0 - params.delta), params.f_pd)
    else:
        start = max(lambda_p, params.f_pd)
    best = None
    for mu_p in mu_p_grid(start, params.mu_p_max, theta):
        mu_p = float(mu_p)
        if mu_p <= lambda_p:
            continue
        regime = Regime.LIMITED if energy_limited else energy_regime(params, lambda_p, mu_p).tag
        try:
            sol = _solve_relay_lp(params, lambda_p, mu_p, regime)
        except NoPolicyError:
            continue
        if best is None or sol.mu_s > best.mu_s:
            best = sol
    if best is None:
        return infeasible_point(lambda_p)
    return ThroughputPoint(lambda_p=lambda_p, mu_s=best.mu_s, mu_p=best.mu_p, policy=best.policy,
                           regime=best.regime.value, extra={"pi_sp": best.pi_sp})
