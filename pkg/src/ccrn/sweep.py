"""lambda_p sweeps over any of the analyses, with a round-trippable CSV format.

A sweep file starts with ``# key=value`` metadata lines (tool version,
parameters and solver knobs) followed by one CSV row per grid point.
Floats are written with ``repr`` so that reading a file back gives the
exact values that were computed.
"""

from __future__ import annotations

import csv
import enum
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional, Union

import numpy as np

from . import __version__
from .dominant1 import algorithm2
from .dominant2 import algorithm3
from .general import (
    DEFAULT_D_NUM,
    DEFAULT_EPSILON,
    DEFAULT_THETA,
    ComplexityError,
    algorithm1_max_throughput,
    combination_count,
    heuristic_max_throughput,
)
from .model import (
    ArrivalRates,
    D1Policy,
    D2Policy,
    PolicyMatrix,
    SystemParams,
    ThroughputPoint,
    exceeds_primary_capacity,
    require_valid,
)
from .simulator import DominantMode, SimConfig, simulate_replications

# Exhaustive searches above this many policy combinations need force=True.
MAX_COMBINATIONS = 10 ** 9

COLUMNS = ["lambda_p", "mu_s", "mu_p", "regime", "feasible", "mode", "M", "N", "delta",
           "f_pd", "f_ps", "f_sd", "mu_s_std", "mu_p_std", "policy_a", "policy_b"]


class Mode(enum.Enum):
    GENERAL = "General"
    HEURISTIC = "Heuristic"
    DOMINANT1 = "Dominant1"
    DOMINANT2 = "Dominant2"
    DOMINANT2_ENERGY_LIMITED = "Dominant2EnergyLimited"
    SIMULATE = "Simulate"


@dataclass(frozen=True)
class SweepConfig:
    """One sweep: the grid ``start, start+step, ..., stop`` evaluated in ``mode``.

    ``horizon``, ``seeds``, ``sim_a`` and ``sim_b`` only matter in Simulate
    mode, which runs the uniform policy ``(sim_a, sim_b)`` with saturated
    SU queues and reports seed means and sample standard deviations.
    """

    params: SystemParams = field(default_factory=SystemParams)
    start: float = 0.0
    stop: float = 0.55
    step: float = 0.05
    mode: Mode = Mode.DOMINANT1
    theta: float = DEFAULT_THETA
    epsilon: float = DEFAULT_EPSILON
    d_num: int = DEFAULT_D_NUM
    horizon: int = 10 ** 6
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    sim_a: float = 0.5
    sim_b: float = 0.5
    workers: int = 1
    force: bool = False
    output: Optional[str] = None

    def __post_init__(self):
        require_valid(self.params)
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.start > self.stop:
            raise ValueError("need start <= stop")
        if self.start < 0 or self.stop > 1:
            raise ValueError("lambda_p grid must lie in [0, 1]")
        if self.theta <= 0 or self.epsilon <= 0:
            raise ValueError("theta and epsilon must be positive")
        if self.d_num < 2:
            raise ValueError("d_num must be at least 2")
        if self.mode is Mode.DOMINANT2_ENERGY_LIMITED and self.params.delta >= 1.0:
            raise ValueError("Dominant2EnergyLimited needs delta < 1")
        if self.mode is Mode.SIMULATE and (self.horizon < 1 or not self.seeds):
            raise ValueError("Simulate mode needs horizon >= 1 and at least one seed")

    def grid(self) -> np.ndarray:
        count = int(np.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return np.round(self.start + self.step * np.arange(count), 12)


@dataclass
class SweepResult:
    points: list[ThroughputPoint]
    metadata: dict[str, str]

    def __eq__(self, other):
        if not isinstance(other, SweepResult):
            return NotImplemented
        return self.metadata == other.metadata and self.points == other.points

    @property
    def any_feasible(self) -> bool:
        return any(p.feasible for p in self.points)


def check_complexity(config: SweepConfig) -> None:
    """Raise :class:`ComplexityError` for an exhaustive search that is too large to run."""
    if config.mode is not Mode.GENERAL or config.force:
        return
    total = combination_count(config.params, config.d_num)
    if total > MAX_COMBINATIONS:
        raise ComplexityError(
            f"General mode would enumerate {total:.3g} policy combinations "
            f"(M={config.params.M}, N={config.params.N}, d_num={config.d_num}); "
            f"the limit is {MAX_COMBINATIONS:.0e}, pass force to run anyway")


def _simulate_point(config: SweepConfig, lambda_p: float) -> ThroughputPoint:
    p = config.params
    if exceeds_primary_capacity(p, lambda_p):
        return ThroughputPoint(lambda_p=lambda_p, mu_s=0.0, mu_p=0.0, feasible=False)
    policy = PolicyMatrix.uniform(p.M, p.N, config.sim_a, config.sim_b)
    sim = SimConfig(p, ArrivalRates(lambda_p, 1.0), policy, config.horizon,
                    dominant_mode=DominantMode.DUMMY_SECONDARY)
    runs = simulate_replications(sim, config.seeds)
    mu_s = np.array([r.mu_s for r in runs])
    mu_p = np.array([r.mu_p for r in runs])
    ddof = 1 if len(runs) > 1 else 0
    # With no backlog growth the PU queue kept up with its arrivals.
    feasible = lambda_p == 0.0 or bool(np.all(mu_p > lambda_p))
    return ThroughputPoint(lambda_p=lambda_p, mu_s=float(mu_s.mean()), mu_p=float(mu_p.mean()),
                           policy=policy, feasible=feasible, mu_s_std=float(mu_s.std(ddof=ddof)),
                           mu_p_std=float(mu_p.std(ddof=ddof)))


def evaluate_point(config: SweepConfig, lambda_p: float) -> ThroughputPoint:
    p, mode = config.params, config.mode
    if mode is Mode.GENERAL:
        return algorithm1_max_throughput(p, lambda_p, config.d_num, config.theta, config.epsilon)
    if mode is Mode.HEURISTIC:
        return heuristic_max_throughput(p, lambda_p, config.d_num, config.theta, config.epsilon)
    if mode is Mode.DOMINANT1:
        return algorithm2(p, lambda_p, config.theta)
    if mode is Mode.DOMINANT2:
        return algorithm3(p, lambda_p, config.theta)
    if mode is Mode.DOMINANT2_ENERGY_LIMITED:
        return algorithm3(p, lambda_p, config.theta, energy_limited=True)
    return _simulate_point(config, lambda_p)


def _point_task(args):
    config, lambda_p = args
    return evaluate_point(config, lambda_p)


def metadata_for(config: SweepConfig) -> dict[str, str]:
    meta = {"tool": "ccrn", "version": __version__, "mode": config.mode.value}
    for f in fields(SystemParams):
        meta[f.name] = repr(getattr(config.params, f.name))
    for key in ("start", "stop", "step", "theta", "epsilon", "d_num"):
        meta[key] = repr(getattr(config, key))
    if config.mode is Mode.SIMULATE:
        meta["horizon"] = repr(config.horizon)
        meta["seeds"] = ",".join(str(s) for s in config.seeds)
        meta["sim_a"] = repr(config.sim_a)
        meta["sim_b"] = repr(config.sim_b)
        meta["rng"] = "numpy.random.Philox"
    return meta


def run_sweep(config: SweepConfig) -> SweepResult:
    """Evaluate every grid point (in a process pool if ``workers > 1``) and write the CSV if asked."""
    check_complexity(config)
    lambdas = [float(x) for x in config.grid()]
    if config.workers > 1 and len(lambdas) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            points = list(pool.map(_point_task, [(config, lam) for lam in lambdas]))
    else:
        points = [evaluate_point(config, lam) for lam in lambdas]
    points = [_strip(pt) for pt in points]
    result = SweepResult(points, metadata_for(config))
    if config.output:
        write_csv(result, config.output)
    return result


def _strip(point: ThroughputPoint) -> ThroughputPoint:
    # Only what the CSV carries, so a written result reads back equal.
    return ThroughputPoint(lambda_p=float(point.lambda_p), mu_s=float(point.mu_s),
                           mu_p=float(point.mu_p), policy=point.policy, feasible=point.feasible,
                           regime=point.regime,
                           mu_s_std=None if point.mu_s_std is None else float(point.mu_s_std),
                           mu_p_std=None if point.mu_p_std is None else float(point.mu_p_std))


def format_policy_rows(arr: Optional[np.ndarray]) -> str:
    """Rows separated by ``|``, entries by spaces; a vector is one row."""
    if arr is None:
        return ""
    arr = np.atleast_2d(arr)
    return "|".join(" ".join(repr(float(v)) for v in row) for row in arr)


def parse_policy_rows(text: str) -> Optional[np.ndarray]:
    if not text.strip():
        return None
    return np.array([[float(v) for v in row.split()] for row in text.split("|")])


def _policy_from_rows(mode: Mode, a: Optional[np.ndarray], b: Optional[np.ndarray]):
    if a is None:
        return None
    if mode is Mode.DOMINANT1:
        return D1Policy(a[0], b[0])
    if mode in (Mode.DOMINANT2, Mode.DOMINANT2_ENERGY_LIMITED):
        return D2Policy(a[0], b[0])
    return PolicyMatrix(a, b)


def _opt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_csv(result: SweepResult, dest: Union[str, os.PathLike, io.TextIOBase]) -> None:
    meta = result.metadata

    def emit(fh):
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for pt in result.points:
            a = b = None
            if pt.policy is not None:
                a, b = pt.policy.a, pt.policy.b
            w.writerow([repr(pt.lambda_p), repr(pt.mu_s), repr(pt.mu_p), pt.regime,
                        int(pt.feasible), meta["mode"], meta["M"], meta["N"], meta["delta"],
                        meta["f_pd"], meta["f_ps"], meta["f_sd"], _opt(pt.mu_s_std),
                        _opt(pt.mu_p_std), format_policy_rows(a), format_policy_rows(b)])

    if hasattr(dest, "write"):
        emit(dest)
        return
    try:
        with open(dest, "w", newline="") as fh:
            emit(fh)
    except OSError as exc:
        raise OSError(f"cannot write sweep output {os.fspath(dest)!r}: {exc.strerror}") from exc


def read_csv(src: Union[str, os.PathLike, io.TextIOBase]) -> SweepResult:
    """Parse a file written by :func:`write_csv`."""
    if hasattr(src, "read"):
        text = src.read()
    else:
        with open(src, newline="") as fh:
            text = fh.read()
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line:
            body.append(line)
    mode = Mode(meta["mode"])
    rows = csv.DictReader(body)
    if rows.fieldnames != COLUMNS:
        raise ValueError(f"unexpected sweep columns {rows.fieldnames}")
    points = []
    for row in rows:
        std_s, std_p = row["mu_s_std"], row["mu_p_std"]
        policy = _policy_from_rows(mode, parse_policy_rows(row["policy_a"]),
                                   parse_policy_rows(row["policy_b"]))
        points.append(ThroughputPoint(
            lambda_p=float(row["lambda_p"]), mu_s=float(row["mu_s"]), mu_p=float(row["mu_p"]),
            policy=policy, feasible=row["feasible"] == "1", regime=row["regime"],
            mu_s_std=float(std_s) if std_s else None, mu_p_std=float(std_p) if std_p else None))
    return SweepResult(points, meta)


# Config files: one ``key = value`` per line, ``#`` starts a comment.
_PARAM_KEYS = {"f_pd": float, "f_ps": float, "f_sd": float, "delta": float, "M": int, "N": int}
_SWEEP_KEYS = {"start": float, "stop": float, "step": float, "theta": float, "epsilon": float,
               "d_num": int, "horizon": int, "sim_a": float, "sim_b": float, "workers": int,
               "output": str}


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"config line {n}: expected key=value, got {raw!r}")
        values[key.strip()] = value.strip()
    return values


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def sweep_config_from(values: dict[str, str]) -> SweepConfig:
    """Build a :class:`SweepConfig` from string key/values; unknown keys are errors."""
    params, kwargs = {}, {}
    for key, value in values.items():
        try:
            if key in _PARAM_KEYS:
                params[key] = _PARAM_KEYS[key](value)
            elif key in _SWEEP_KEYS:
                kwargs[key] = _SWEEP_KEYS[key](value)
            elif key == "mode":
                kwargs["mode"] = Mode(value)
            elif key == "seeds":
                kwargs["seeds"] = tuple(int(s) for s in value.split(",") if s.strip())
            elif key == "force":
                kwargs["force"] = _parse_bool(value)
            else:
                raise KeyError(key)
        except KeyError:
            raise ValueError(f"unknown config key {key!r}") from None
        except ValueError as exc:
            raise ValueError(f"bad value for {key!r}: {exc}") from None
    return SweepConfig(params=SystemParams(**params), **kwargs)
