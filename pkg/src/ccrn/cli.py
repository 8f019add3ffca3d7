"""Command-line entry point: ``ccrn {sweep,steady-state,stability,simulate}``.

Every subcommand reads the same ``key=value`` settings, first from
``--config FILE`` and then from repeated ``--set KEY=VALUE`` overrides.
Exit status is 0 on success, 2 when a sweep finds no feasible point and 1
on any error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from .dominant1 import check_stability_d1
from .dominant2 import check_stability_d2
from .general import ComplexityError, fixed_point_mu_p
from .markov import build_transition_matrix, dump_transition_csv, index_state, steady_state
from .model import ArrivalRates, D1Policy, D2Policy, PolicyMatrix, SystemParams, require_valid
from .simulator import DominantMode, SimConfig, simulate, write_trace
from .sweep import (
    _PARAM_KEYS,
    parse_config_text,
    parse_policy_rows,
    run_sweep,
    sweep_config_from,
    write_csv,
)

log = logging.getLogger("ccrn")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


def _settings(args) -> dict[str, str]:
    values = {}
    if args.config:
        with open(args.config) as fh:
            values.update(parse_config_text(fh.read()))
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = value.strip()
    return values


def _take_params(values: dict[str, str]) -> SystemParams:
    kwargs = {k: _PARAM_KEYS[k](values.pop(k)) for k in list(values) if k in _PARAM_KEYS}
    params = SystemParams(**kwargs)
    require_valid(params)
    return params


def _take(values: dict[str, str], key: str, cast, default):
    return cast(values.pop(key)) if key in values else default


def _reject_leftovers(values: dict[str, str], command: str) -> None:
    if values:
        raise ValueError(f"unknown setting(s) for {command}: {', '.join(sorted(values))}")


def _matrix_policy(values: dict[str, str], params: SystemParams) -> PolicyMatrix:
    a = values.pop("a", "0.5")
    b = values.pop("b", "0.5")
    rows_a, rows_b = parse_policy_rows(a), parse_policy_rows(b)
    shape = params.shape
    a_arr = np.full(shape, rows_a.item()) if rows_a.size == 1 else rows_a
    b_arr = np.full(shape, rows_b.item()) if rows_b.size == 1 else rows_b
    return PolicyMatrix(a_arr, b_arr)


def _vector(text: str, size: int) -> np.ndarray:
    rows = parse_policy_rows(text).ravel()
    return np.full(size, rows.item()) if rows.size == 1 else rows


def cmd_sweep(args) -> int:
    values = _settings(args)
    if args.mode:
        values["mode"] = args.mode
    if args.output:
        values["output"] = args.output
    if args.force:
        values["force"] = "true"
    config = sweep_config_from(values)
    result = run_sweep(config)
    if not config.output:
        write_csv(result, sys.stdout)
    if not result.any_feasible:
        log.warning("no feasible lambda_p on the grid")
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_steady_state(args) -> int:
    """Print pi over (i, j) for a matrix policy; mu_p defaults to the fixed point."""
    values = _settings(args)
    params = _take_params(values)
    lambda_p = _take(values, "lambda_p", float, 0.0)
    policy = _matrix_policy(values, params)
    mu_p = _take(values, "mu_p", float, None)
    _reject_leftovers(values, "steady-state")
    if mu_p is None:
        fp = fixed_point_mu_p(params, policy, lambda_p)
        mu_p, pi = fp.mu_p, np.ravel(fp.dist)
    else:
        pi = steady_state(build_transition_matrix(params, policy, lambda_p / mu_p))
    out = sys.stdout
    out.write(f"# lambda_p={lambda_p!r}\n# mu_p={mu_p!r}\n")
    if args.matrix:
        dump_transition_csv(build_transition_matrix(params, policy, lambda_p / mu_p), out)
        return EXIT_OK
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["i", "j", "pi"])
    for k, value in enumerate(pi):
        i, j = index_state(k, params.N)
        w.writerow([i, j, repr(float(value))])
    return EXIT_OK


def cmd_stability(args) -> int:
    values = _settings(args)
    params = _take_params(values)
    rates = ArrivalRates(_take(values, "lambda_p", float, 0.0), _take(values, "lambda_s", float, 0.0))
    mu_p = _take(values, "mu_p", float, params.mu_p_max)
    a = values.pop("a", "0.5")
    b = values.pop("b", "0.5")
    _reject_leftovers(values, "stability")
    if args.system == "Dominant1":
        verdict = check_stability_d1(params, rates, D1Policy(_vector(a, params.M + 1),
                                                             _vector(b, params.M + 1)), mu_p)
    else:
        verdict = check_stability_d2(params, rates, D2Policy(_vector(a, params.N + 1),
                                                             _vector(b, params.N + 1)), mu_p)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["queue", "arrival", "service", "holds"])
    for c in verdict.conditions:
        w.writerow([c.name, repr(float(c.arrival)), repr(float(c.service)), int(c.holds)])
    sys.stdout.write(f"# stable={int(verdict.stable)}\n")
    if verdict.regime:
        sys.stdout.write(f"# regime={verdict.regime}\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    values = _settings(args)
    params = _take_params(values)
    rates = ArrivalRates(_take(values, "lambda_p", float, 0.0), _take(values, "lambda_s", float, 0.0))
    policy = _matrix_policy(values, params)
    horizon = _take(values, "horizon", int, 10 ** 6)
    seed = _take(values, "seed", int, 0)
    _reject_leftovers(values, "simulate")
    mode = DominantMode.DUMMY_SECONDARY if args.dominant else DominantMode.NONE
    stats = simulate(SimConfig(params, rates, policy, horizon, seed, mode,
                               trace_every=args.trace_every if args.trace else 0))
    if args.trace:
        write_trace(stats, args.trace)
    out = sys.stdout
    for key in ("horizon", "seed", "rng", "pu_arrivals", "pu_direct", "pu_relayed",
                "relay_delivered", "su_own_delivered", "busy_slots", "qp_backlog", "qs_backlog"):
        out.write(f"{key}={getattr(stats, key)}\n")
    out.write(f"mu_p={stats.mu_p!r}\nmu_s={stats.mu_s!r}\n")
    occ = " ".join(str(v) for v in stats.occupancy.ravel())
    out.write(f"occupancy={occ}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccrn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="key=value settings file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="evaluate a lambda_p grid and write CSV")
    p.add_argument("--mode", choices=["General", "Heuristic", "Dominant1", "Dominant2",
                                      "Dominant2EnergyLimited", "Simulate"])
    p.add_argument("-o", "--output", help="CSV path (default: stdout)")
    p.add_argument("--force", action="store_true", help="run oversized exhaustive searches")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("steady-state", parents=[common], help="print the battery/relay distribution")
    p.add_argument("--matrix", action="store_true", help="print the transition matrix instead")
    p.set_defaults(func=cmd_steady_state)

    p = sub.add_parser("stability", parents=[common], help="queue stability verdicts of a dominant system")
    p.add_argument("--system", choices=["Dominant1", "Dominant2"], default="Dominant1")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("simulate", parents=[common], help="run the slot-level simulator once")
    p.add_argument("--dominant", action="store_true", help="SU queues never empty (dummy packets)")
    p.add_argument("--trace", help="write a thinned event trace CSV here")
    p.add_argument("--trace-every", type=int, default=1000, help="trace thinning (default 1000)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ComplexityError as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    except (ValueError, OSError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
