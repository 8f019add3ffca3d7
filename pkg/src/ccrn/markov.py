"""Battery/relay Markov chain: transition matrix and stationary distributions.

States are ``(i, j)`` with battery level ``i = 0..M`` and relay occupancy
``j = 0..N``, flattened row-major as ``i * (N + 1) + j``.  ``rho`` is the
probability that ``Q_p`` is non-empty in a slot (``lambda_p / mu_p``).
SU queues carry dummy packets, so whenever the PU is idle and energy is
available the SU transmits.
"""

from __future__ import annotations

import csv
import io
import os
from typing import Optional, Sequence, TextIO, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .model import PolicyMatrix, SystemParams

ROW_SUM_TOL = 1e-12
RESIDUAL_TOL = 1e-10


class DegenerateChainError(ValueError):
    """The chain has more than one closed (recurrent) class."""

    def __init__(self, classes: list[list[int]]):
        self.classes = classes
        shown = "; ".join("{" + ", ".join(map(str, c)) + "}" for c in classes)
        super().__init__(f"degenerate chain: {len(classes)} closed classes {shown}")


class NonNormalizableError(ValueError):
    """A birth-death chain pushes mass upward past a level it cannot leave downward."""

    def __init__(self, level: int):
        self.level = level
        super().__init__(f"non-normalizable: level {level} has zero downward rate "
                         f"but is entered from level {level - 1}")


def state_index(i: int, j: int, N: int) -> int:
    return i * (N + 1) + j


def index_state(k: int, N: int) -> tuple[int, int]:
    return divmod(k, N + 1)


def build_transition_matrix(params: SystemParams, policy: PolicyMatrix, rho: float) -> np.ndarray:
    """Row-stochastic transition matrix of the (battery, relay) chain.

    Battery gains at ``i = M`` are clamped (the quantum is lost), battery
    losses at ``i = 0`` cannot happen, and the self-loop absorbs the
    residual mass of every row.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho={rho!r} outside [0, 1)")
    M, N = params.M, params.N
    if policy.a.shape != (M + 1, N + 1):
        raise ValueError(f"policy shape {policy.a.shape} does not match (M+1, N+1)={(M + 1, N + 1)}")

    a, b = policy.a, policy.b
    d, fsd, g = params.delta, params.f_sd, params.relay_gain
    idle = 1.0 - rho
    admit = g * a
    relay_ok = fsd * (1.0 - b)

    i, j = np.meshgrid(np.arange(M + 1), np.arange(N + 1), indexing="ij")
    has_battery = i > 0
    up = np.minimum(i + 1, M)
    moves = [
        (up, j + 1, rho * d * admit),
        (up, j, rho * d * (1.0 - admit)),
        (i, j + 1, rho * (1.0 - d) * admit),
        (i - 1, j - 1, np.where(has_battery, idle * (1.0 - d) * relay_ok, 0.0)),
        (i, j - 1, idle * d * relay_ok),
        (i - 1, j, np.where(has_battery, idle * (1.0 - d) * (1.0 - relay_ok), 0.0)),
    ]

    S = (M + 1) * (N + 1)
    T = np.zeros((S, S))
    src = (i * (N + 1) + j).ravel()
    for ti, tj, prob in moves:
        prob = prob.ravel()
        mask = prob > 0.0
        dst = (ti * (N + 1) + tj).ravel()
        np.add.at(T, (src[mask], dst[mask]), prob[mask])
    np.fill_diagonal(T, 0.0)
    np.fill_diagonal(T, 1.0 - T.sum(axis=1))
    return T


def closed_classes(T: np.ndarray) -> list[list[int]]:
    """Closed communicating classes of ``T`` (sorted state indices)."""
    graph = csr_matrix(T > 0.0)
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    rows, cols = graph.nonzero()
    leaks = np.zeros(n_comp, dtype=bool)
    leaks[labels[rows][labels[rows] != labels[cols]]] = True
    return [np.flatnonzero(labels == c).tolist() for c in range(n_comp) if not leaks[c]]


def _power_iteration(T: np.ndarray, tol: float = 1e-14, max_iter: int = 1_000_000) -> np.ndarray:
    # Lazy chain (T + I)/2 has the same stationary vector and is aperiodic.
    lazy = 0.5 * (T + np.eye(T.shape[0]))
    pi = np.full(T.shape[0], 1.0 / T.shape[0])
    for _ in range(max_iter):
        nxt = pi @ lazy
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt / nxt.sum()
        pi = nxt
    return pi / pi.sum()


def _gth(T: np.ndarray) -> Optional[np.ndarray]:
    """Grassmann-Taksar-Heyman reduction; None if some step has no mass."""
    P = np.array(T, dtype=float)
    S = P.shape[0]
    for n in range(S - 1, 0, -1):
        total = P[n, :n].sum()
        if total <= 0.0:
            return None
        P[:n, n] /= total
        P[:n, :n] += np.outer(P[:n, n], P[n, :n])
    x = np.zeros(S)
    x[0] = 1.0
    for n in range(1, S):
        x[n] = x[:n] @ P[:n, n]
    return x / x.sum()


def steady_state(T: np.ndarray) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix with one closed class.

    Uses GTH state reduction, which has no subtractions and so keeps small
    probabilities accurate in nearly decomposable chains.  If a reduction
    step finds no mass it falls back to a direct solve with one balance
    equation replaced by the normalization row, then to power iteration.
    Raises :class:`DegenerateChainError` if several closed classes exist.
    """
    T = np.asarray(T, dtype=float)
    S = T.shape[0]
    if T.ndim != 2 or T.shape[1] != S:
        raise ValueError("transition matrix must be square")
    if np.any(np.abs(T.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("transition matrix is not row-stochastic")
    if S == 1:
        return np.ones(1)

    classes = closed_classes(T)
    if len(classes) > 1:
        raise DegenerateChainError(classes)

    pi = _gth(T)
    if pi is None:
        A = T.T - np.eye(S)
        A[-1, :] = 1.0
        rhs = np.zeros(S)
        rhs[-1] = 1.0
        try:
            pi = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            pi = None
    if pi is None or not np.all(np.isfinite(pi)) or _residual(T, pi) > RESIDUAL_TOL:
        pi = _power_iteration(T)
    pi = np.where(pi < 0.0, 0.0, pi)
    return pi / pi.sum()


def _residual(T: np.ndarray, pi: np.ndarray) -> float:
    return float(np.max(np.abs(pi @ T - pi)))


def birth_death_steady_state(up: Sequence[float], down: Sequence[float], size: int) -> np.ndarray:
    """Stationary law of a birth-death chain on ``0..size-1``.

    ``up[k]`` is the probability of moving ``k -> k+1`` and ``down[k]`` of
    moving ``k -> k-1`` (``down[0]`` is ignored).  Products are formed in log
    space so long chains with ratios far from 1 do not overflow.  Levels
    above the first zero upward rate get no mass.
    """
    if size < 1:
        raise ValueError("size must be at least 1")
    up = np.broadcast_to(np.asarray(up, dtype=float), (size,)) if np.ndim(up) == 0 else np.asarray(up, dtype=float)
    down = np.broadcast_to(np.asarray(down, dtype=float), (size,)) if np.ndim(down) == 0 else np.asarray(down, dtype=float)
    if len(up) < size - 1 or len(down) < size:
        raise ValueError("need len(up) >= size-1 and len(down) >= size")

    log_pi = np.full(size, -np.inf)
    log_pi[0] = 0.0
    for k in range(size - 1):
        if up[k] <= 0.0:
            break
        if down[k + 1] <= 0.0:
            raise NonNormalizableError(k + 1)
        log_pi[k + 1] = log_pi[k] + np.log(up[k]) - np.log(down[k + 1])
    pi = np.exp(log_pi - log_pi.max())
    return pi / pi.sum()


def birth_death_matrix(up: Sequence[float], down: Sequence[float], size: int) -> np.ndarray:
    """Tridiagonal transition matrix matching :func:`birth_death_steady_state`."""
    T = np.zeros((size, size))
    for k in range(size):
        if k + 1 < size:
            T[k, k + 1] = up[k]
        if k > 0:
            T[k, k - 1] = down[k]
        T[k, k] = 1.0 - T[k].sum()
    return T


def dump_transition_csv(T: np.ndarray, dest: Union[str, os.PathLike, TextIO, None] = None) -> str:
    """Write the non-zero entries of ``T`` as ``row,col,prob`` CSV.

    Returns the CSV text; also writes it to ``dest`` when given.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "col", "prob"])
    rows, cols = np.nonzero(T)
    for r, c in zip(rows, cols):
        writer.writerow([int(r), int(c), repr(float(T[r, c]))])
    text = buf.getvalue()
    if dest is None:
        return text
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    return text
