"""Slot-level simulation of the PU/SU protocol.

Each slot, in order: the PU transmits if ``Q_p`` is non-empty; otherwise
the SU transmits if it has energy (a stored quantum, or one arriving this
slot), picking ``Q_s`` with probability ``b[i, j]`` and ``Q_sp`` otherwise.
The policy reads the battery level ``i`` and relay occupancy ``j`` at the
start of the slot.  Data arrivals join their queues at the end of the slot
and can be served from the next one, while a harvested quantum can be spent
in the slot it arrives.

With ``DominantMode.DUMMY_SECONDARY`` the SU queues never run dry (dummy packets fill
in), which is the setting the battery/relay chain describes.

Random numbers come from numpy's Philox counter-based generator, one
stream per seed; :data:`RNG_NAME` records it.
"""

from __future__ import annotations

import csv
import os
import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, TextIO, Union

import numpy as np
from numba import njit

from .model import ArrivalRates, PolicyMatrix, SystemParams

RNG_NAME = "numpy.random.Philox"
BLOCK = 1 << 16
N_DRAWS = 8  # uniforms per slot

EVENTS = ("pu_direct", "pu_relayed", "pu_retained", "su_own", "su_relay",
          "su_failed", "su_silent", "no_energy")
PU_DIRECT, PU_RELAYED, PU_RETAINED, SU_OWN, SU_RELAY, SU_FAILED, SU_SILENT, NO_ENERGY = range(8)


class DominantMode(enum.Enum):
    NONE = "None"
    DUMMY_SECONDARY = "DummySecondary"


@dataclass(frozen=True)
class SimConfig:
    params: SystemParams
    rates: ArrivalRates
    policy: PolicyMatrix
    horizon: int
    seed: int = 0
    dominant_mode: DominantMode = DominantMode.NONE
    trace_every: int = 0  # keep every k-th slot in the traces; 0 keeps none

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.policy.a.shape != self.params.shape:
            raise ValueError(f"policy shape {self.policy.a.shape} does not match {self.params.shape}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class SimStats:
    """Counters of one run.  ``occupancy[i, j]`` counts slots that started in state ``(i, j)``."""

    horizon: int
    pu_arrivals: int
    pu_direct: int
    pu_relayed: int
    relay_delivered: int
    su_own_delivered: int
    busy_slots: int
    qp_backlog: int
    qs_backlog: int
    occupancy: np.ndarray
    trace: Optional[np.ndarray] = field(default=None, repr=False)
    rng: str = RNG_NAME
    seed: int = 0

    @property
    def mu_p(self) -> float:
        """PU departures per busy slot."""
        return (self.pu_direct + self.pu_relayed) / self.busy_slots if self.busy_slots else 0.0

    @property
    def mu_s(self) -> float:
        """Successful ``Q_s`` transmissions per slot (dummy packets included)."""
        return self.su_own_delivered / self.horizon

    def conserves_pu_packets(self) -> bool:
        return self.pu_arrivals == self.pu_direct + self.pu_relayed + self.qp_backlog


@njit(cache=True)
def _run_block(u, a, b, M, N, lam_p, lam_s, delta, f_pd, f_ps, f_sd, dominant,
               state, counts, occupancy, trace, trace_every, slot0, trace_pos):
    """Advance ``state = [qp, qs, i, j]`` through ``u.shape[0]`` slots."""
    qp, qs, i, j = state[0], state[1], state[2], state[3]
    for t in range(u.shape[0]):
        occupancy[i, j] += 1
        row = u[t]
        energy = row[2] < delta
        event = NO_ENERGY
        if qp > 0:
            counts[5] += 1
            if row[3] < f_pd:
                qp -= 1
                counts[1] += 1
                event = PU_DIRECT
            elif row[4] < f_ps and j < N and row[5] < a[i, j]:
                qp -= 1
                j += 1
                counts[2] += 1
                event = PU_RELAYED
            else:
                event = PU_RETAINED
            if energy and i < M:
                i += 1
        elif i > 0 or energy:
            own = row[6] < b[i, j]
            if own and (qs > 0 or dominant):
                success = row[7] < f_sd
                if success:
                    counts[4] += 1
                    if qs > 0:
                        qs -= 1
                event = SU_OWN if success else SU_FAILED
                spent = True
            elif not own and j > 0:
                if row[7] < f_sd:
                    j -= 1
                    counts[3] += 1
                    event = SU_RELAY
                else:
                    event = SU_FAILED
                spent = True
            else:
                event = SU_SILENT
                spent = False
            if spent:
                if not energy:
                    i -= 1
            elif energy and i < M:
                i += 1
        if row[0] < lam_p:
            qp += 1
            counts[0] += 1
        if row[1] < lam_s:
            qs += 1
        if trace_every > 0 and (slot0 + t) % trace_every == 0:
            trace[trace_pos, 0] = slot0 + t
            trace[trace_pos, 1] = i
            trace[trace_pos, 2] = j
            trace[trace_pos, 3] = qp
            trace[trace_pos, 4] = qs
            trace[trace_pos, 5] = event
            trace_pos += 1
    state[0], state[1], state[2], state[3] = qp, qs, i, j
    return trace_pos


def simulate(config: SimConfig) -> SimStats:
    """Run one replication; identical configs give identical stats."""
    p, r, pol = config.params, config.rates, config.policy
    rng = np.random.Generator(np.random.Philox(config.seed))
    state = np.zeros(4, dtype=np.int64)
    counts = np.zeros(6, dtype=np.int64)
    occupancy = np.zeros(p.shape, dtype=np.int64)
    every = config.trace_every
    n_trace = (config.horizon + every - 1) // every if every > 0 else 0
    trace = np.zeros((n_trace, 6), dtype=np.int64)
    a = np.ascontiguousarray(pol.a)
    b = np.ascontiguousarray(pol.b)
    pos = 0
    for slot0 in range(0, config.horizon, BLOCK):
        n = min(BLOCK, config.horizon - slot0)
        u = rng.random((n, N_DRAWS))
        pos = _run_block(u, a, b, p.M, p.N, r.lambda_p, r.lambda_s, p.delta, p.f_pd, p.f_ps, p.f_sd,
                         config.dominant_mode is DominantMode.DUMMY_SECONDARY, state, counts, occupancy, trace, every, slot0, pos)
    return SimStats(horizon=config.horizon, pu_arrivals=int(counts[0]), pu_direct=int(counts[1]),
                    pu_relayed=int(counts[2]), relay_delivered=int(counts[3]),
                    su_own_delivered=int(counts[4]), busy_slots=int(counts[5]),
                    qp_backlog=int(state[0]), qs_backlog=int(state[1]), occupancy=occupancy,
                    trace=trace if every > 0 else None, seed=config.seed)


def simulate_replications(config: SimConfig, seeds: Sequence[int]) -> list[SimStats]:
    """One run per seed, each with its own Philox stream."""
    return [simulate(replace(config, seed=int(s))) for s in seeds]


def empirical_distribution(stats: SimStats) -> np.ndarray:
    """Fraction of slots spent in each ``(i, j)``, shaped ``(M+1, N+1)``."""
    return stats.occupancy / stats.occupancy.sum()


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.ravel(p) - np.ravel(q)).sum())


def write_trace(stats: SimStats, dest: Union[str, os.PathLike, TextIO]) -> None:
    """Write the thinned trace as CSV ``slot,i,j,qp_len,qs_len,event``."""
    if stats.trace is None:
        raise ValueError("run was made without a trace (trace_every=0)")

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "i", "j", "qp_len", "qs_len", "event"])
        for slot, i, j, qp, qs, ev in stats.trace:
            w.writerow([slot, i, j, qp, qs, EVENTS[ev]])

    if hasattr(dest, "write"):
        emit(dest)
    else:
        with open(dest, "w", newline="") as fh:
            emit(fh)
