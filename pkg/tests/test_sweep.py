import io

import numpy as np
import pytest

from ccrn.general import ComplexityError
from ccrn.model import SystemParams
from ccrn.sweep import (
    COLUMNS,
    Mode,
    SweepConfig,
    check_complexity,
    format_policy_rows,
    parse_config_text,
    parse_policy_rows,
    read_csv,
    run_sweep,
    sweep_config_from,
    write_csv,
)


def csv_text(result):
    buf = io.StringIO()
    write_csv(result, buf)
    return buf.getvalue()


def test_grid_is_clean():
    assert SweepConfig().grid().tolist() == [round(0.05 * k, 12) for k in range(12)]
    with pytest.raises(ValueError):
        SweepConfig(step=0.0)
    with pytest.raises(ValueError):
        SweepConfig(start=0.5, stop=0.1)
    with pytest.raises(ValueError):
        SweepConfig(mode=Mode.DOMINANT2_ENERGY_LIMITED, params=SystemParams(delta=1.0))


def test_dominant1_battery_ten_starts_at_idle_rate():
    result = run_sweep(SweepConfig(params=SystemParams(M=10), stop=0.6, step=0.1, theta=1e-2))
    assert result.points[0].mu_s == pytest.approx(0.4, abs=1e-12)
    mus = [p.mu_s for p in result.points]
    assert all(a >= b - 1e-12 for a, b in zip(mus, mus[1:]))
    assert not result.points[-1].feasible


@pytest.mark.parametrize("mode", [Mode.DOMINANT1, Mode.DOMINANT2, Mode.HEURISTIC])
def test_csv_round_trip(mode):
    cfg = SweepConfig(params=SystemParams(M=1, N=1), stop=0.3, step=0.1, mode=mode, theta=0.02, d_num=5)
    result = run_sweep(cfg)
    text = csv_text(result)
    assert read_csv(io.StringIO(text)) == result
    assert text.splitlines()[len(result.metadata)] == ",".join(COLUMNS)
    assert text == csv_text(run_sweep(cfg))


def test_workers_do_not_change_output():
    cfg = SweepConfig(params=SystemParams(M=1, N=1), stop=0.2, step=0.1, mode=Mode.HEURISTIC, theta=0.02, d_num=4)
    serial = csv_text(run_sweep(cfg))
    parallel = csv_text(run_sweep(SweepConfig(**{**cfg.__dict__, "workers": 2})))
    assert serial == parallel


def test_simulate_mode_reports_spread_and_rng():
    cfg = SweepConfig(stop=0.1, step=0.1, mode=Mode.SIMULATE, horizon=20000, seeds=(0, 1, 2))
    result = run_sweep(cfg)
    assert result.metadata["rng"] == "numpy.random.Philox"
    assert result.metadata["seeds"] == "0,1,2"
    assert all(p.mu_s_std is not None and p.mu_s_std >= 0 for p in result.points)
    assert result.points[0].mu_s == pytest.approx(0.4, abs=0.02)
    assert read_csv(io.StringIO(csv_text(result))) == result


def test_complexity_guard():
    big = SweepConfig(params=SystemParams(M=3, N=3), mode=Mode.GENERAL, d_num=11)
    with pytest.raises(ComplexityError):
        check_complexity(big)
    with pytest.raises(ComplexityError):
        run_sweep(big)
    check_complexity(SweepConfig(params=SystemParams(M=3, N=3), mode=Mode.GENERAL, d_num=11, force=True))
    check_complexity(SweepConfig(params=SystemParams(M=3, N=3), mode=Mode.HEURISTIC, d_num=11))


def test_config_parsing():
    values = parse_config_text("# comment\nM = 3\nmode=Dominant2  # trailing\nseeds=1,2\nforce=yes\n")
    cfg = sweep_config_from(values)
    assert cfg.params.M == 3 and cfg.mode is Mode.DOMINANT2 and cfg.seeds == (1, 2) and cfg.force
    with pytest.raises(ValueError):
        sweep_config_from({"bogus": "1"})
    with pytest.raises(ValueError):
        parse_config_text("no equals sign")


def test_policy_rows_round_trip():
    arr = np.array([[0.25, 1.0], [0.0, 0.1]])
    assert np.array_equal(parse_policy_rows(format_policy_rows(arr)), arr)
    assert format_policy_rows(None) == "" and parse_policy_rows("") is None
