"""Parameter, policy and result types shared across the package.

The network has one primary user (PU) with data queue ``Q_p`` and one
energy-harvesting secondary user (SU) with an own-data queue ``Q_s``, a
finite relay queue ``Q_sp`` of capacity ``N`` and a battery ``Q_B`` of
capacity ``M`` quanta.  Battery level is indexed by ``i`` and relay
occupancy by ``j`` throughout.

Note on naming: the PU->SU link success probability is called ``f_ps``
everywhere in this package (some texts write it ``f_sp``; it is the same
quantity).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np


@dataclass(frozen=True)
class SystemParams:
    """Channel, energy and buffer parameters of the network.

    Attributes:
        f_pd: PU -> destination success probability.
        f_ps: PU -> SU success probability (overhearing).
        f_sd: SU -> destination success probability.
        delta: probability that one energy quantum arrives in a slot.
        M: battery capacity in quanta.
        N: relay queue capacity in packets.
    """

    f_pd: float = 0.3
    f_ps: float = 0.4
    f_sd: float = 0.8
    delta: float = 0.5
    M: int = 1
    N: int = 1

    @property
    def relay_gain(self) -> float:
        """Probability that a PU packet fails directly but is overheard."""
        return (1.0 - self.f_pd) * self.f_ps

    @property
    def mu_p_max(self) -> float:
        """Largest PU service rate any policy can produce."""
        return self.f_pd + self.relay_gain

    @property
    def shape(self) -> tuple[int, int]:
        return (self.M + 1, self.N + 1)

    @property
    def n_states(self) -> int:
        return (self.M + 1) * (self.N + 1)

    def replace(self, **changes) -> "SystemParams":
        values = {k: getattr(self, k) for k in ("f_pd", "f_ps", "f_sd", "delta", "M", "N")}
        values.update(changes)
        return SystemParams(**values)


def validate_params(params: SystemParams) -> list[str]:
    """Return the list of violated invariants; empty iff ``params`` is valid.

    Comparisons against 0 and 1 are exact: these are user inputs.
    """
    problems = []
    for name in ("f_pd", "f_ps", "f_sd", "delta"):
        value = getattr(params, name)
        if not isinstance(value, (int, float, np.floating, np.integer)) or not 0.0 <= value <= 1.0:
            problems.append(f"{name}={value!r}: probability out of range [0, 1]")
    for name in ("M", "N"):
        value = getattr(params, name)
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
            problems.append(f"{name}={value!r}: must be a non-negative integer")
    try:
        if not params.f_pd < params.f_sd:
            problems.append(f"f_pd < f_sd required (got f_pd={params.f_pd}, f_sd={params.f_sd})")
    except TypeError:
        pass
    return problems


class InvalidParamsError(ValueError):
    pass


def require_valid(params: SystemParams) -> None:
    problems = validate_params(params)
    if problems:
        raise InvalidParamsError("; ".join(problems))


def _frozen_array(values, shape, name) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == 0:
        arr = np.full(shape, float(arr))
    if arr.shape != shape:
        raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} entries must be probabilities in [0, 1]")
    return arr


@dataclass(frozen=True, eq=False)
class PolicyMatrix:
    """State-dependent admission (``a``) and selection (``b``) probabilities.

    Both matrices are indexed ``[i, j]`` (battery, relay).  Boundary cells
    are structural and get overwritten on construction: ``b[:, 0] = 1``
    (an empty relay is never selected) and ``a[:, N] = 0`` (a full relay
    admits nothing).
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 2:
            raise ValueError("a must be a 2-D (M+1) x (N+1) matrix")
        a = _frozen_array(a, a.shape, "a")
        b = _frozen_array(self.b, a.shape, "b")
        a[:, -1] = 0.0
        b[:, 0] = 1.0
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def uniform(cls, M: int, N: int, a: float = 0.5, b: float = 0.5) -> "PolicyMatrix":
        shape = (M + 1, N + 1)
        return cls(np.full(shape, float(a)), np.full(shape, float(b)))

    @property
    def M(self) -> int:
        return self.a.shape[0] - 1

    @property
    def N(self) -> int:
        return self.a.shape[1] - 1

    def __eq__(self, other):
        if not isinstance(other, PolicyMatrix):
            return NotImplemented
        return np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)

    def __hash__(self):
        return hash((self.a.tobytes(), self.b.tobytes()))

    def __repr__(self):
        return f"PolicyMatrix(a={self.a.tolist()}, b={self.b.tolist()})"


@dataclass(frozen=True, eq=False)
class VectorPolicy:
    """Admission/selection probabilities that depend on one queue only.

    Base for the two dominant-system policies; subclasses pin the
    structural cells.
    """

    a: np.ndarray
    b: np.ndarray

    def _pin(self, a: np.ndarray, b: np.ndarray) -> None:
        pass

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("a must be a non-empty vector")
        a = _frozen_array(a, a.shape, "a")
        b = _frozen_array(self.b, a.shape, "b")
        self._pin(a, b)
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)

    def __hash__(self):
        return hash((type(self).__name__, self.a.tobytes(), self.b.tobytes()))

    def __repr__(self):
        return f"{type(self).__name__}(a={self.a.tolist()}, b={self.b.tolist()})"


class D1Policy(VectorPolicy):
    """Battery-dependent policy ``a_i, b_i`` for i = 0..M (infinite relay)."""


class D2Policy(VectorPolicy):
    """Relay-dependent policy ``a_j, b_j`` for j = 0..N, with ``a_N = 0`` and ``b_0 = 1``."""

    def _pin(self, a, b):
        a[-1] = 0.0
        b[0] = 1.0


@dataclass(frozen=True)
class ArrivalRates:
    lambda_p: float
    lambda_s: float = 0.0

    def __post_init__(self):
        for name in ("lambda_p", "lambda_s"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value!r} must be a probability in [0, 1]")


Policy = Union[PolicyMatrix, D1Policy, D2Policy]


@dataclass(frozen=True)
class ThroughputPoint:
    """One point on the boundary curve mu_s*(lambda_p).

    ``feasible`` is False when no admissible policy keeps ``Q_p`` stable;
    ``mu_s`` is then 0 and ``mu_p`` is 0.  ``regime`` is only set by the
    finite-relay analysis ("Limited"/"Unlimited").  The ``*_std`` fields are
    filled by simulation sweeps only.
    """

    lambda_p: float
    mu_s: float
    mu_p: float
    policy: Optional[Policy] = None
    feasible: bool = True
    regime: str = ""
    mu_s_std: Optional[float] = None
    mu_p_std: Optional[float] = None
    extra: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class Condition:
    """One Loynes-type inequality ``arrival < service``.

    A queue that receives nothing stays empty, so zero arrivals count as
    stable even when the service rate is zero too.
    """

    name: str
    arrival: float
    service: float

    @property
    def margin(self) -> float:
        return self.service - self.arrival

    @property
    def holds(self) -> bool:
        return self.arrival < self.service or self.arrival == 0.0


@dataclass(frozen=True)
class StabilityVerdict:
    conditions: tuple[Condition, ...]
    regime: str = ""

    @property
    def stable(self) -> bool:
        return all(c.holds for c in self.conditions)

    def __getitem__(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)


PRIMARY_SERVICE = "primary_service"
RELAY_STABILITY = "relay_stability"
RELAY_FLOW = "relay_flow"


class NoPolicyError(ValueError):
    """No admissible policy sustains the requested ``mu_p``.

    ``constraint`` names the constraint that cannot be met:
    ``"primary_service"`` (the admission mass needed for ``mu_p`` is out of
    reach), ``"relay_stability"`` (relaying that much PU traffic overloads
    an unbounded relay queue) or ``"relay_flow"`` (no finite relay
    distribution balances that much relayed traffic).
    """

    def __init__(self, constraint: str, mu_p: float):
        super().__init__(f"no policy sustains mu_p={mu_p:.6g}: {constraint} constraint is infeasible")
        self.constraint = constraint
        self.mu_p = mu_p


def mu_p_grid(start: float, stop: float, theta: float) -> np.ndarray:
    """Grid ``start, start+theta, ...`` up to ``stop`` (inclusive within 1e-9 steps).

    Empty when ``start > stop``.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    if start > stop + 1e-12:
        return np.empty(0)
    count = int(np.floor((stop - start) / theta + 1e-9)) + 1
    return np.minimum(start + theta * np.arange(count), max(start, stop))


def probability_grid(d_num: int) -> np.ndarray:
    """``d_num`` equally spaced values ``k/(d_num-1)`` covering [0, 1]."""
    if d_num < 2:
        raise ValueError("d_num must be at least 2")
    return np.arange(d_num) / (d_num - 1)


def infeasible_point(lambda_p: float, regime: str = "") -> ThroughputPoint:
    return ThroughputPoint(lambda_p=lambda_p, mu_s=0.0, mu_p=0.0, policy=None,
                           feasible=False, regime=regime)


def exceeds_primary_capacity(params: SystemParams, lambda_p: float) -> bool:
    """True when no policy can serve ``lambda_p`` (``lambda_p >= f_pd + (1-f_pd) f_ps``)."""
    return lambda_p >= params.mu_p_max - 1e-12
