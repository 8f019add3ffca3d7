import pytest

from ccrn.cli import EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK, main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_sweep_to_stdout_and_file(capsys, tmp_path):
    code, out = run(capsys, "sweep", "--set", "stop=0.2", "--set", "step=0.1", "--set", "theta=0.02")
    assert code == EXIT_OK
    rows = [line for line in out.out.splitlines() if not line.startswith("#")]
    assert rows[0].startswith("lambda_p,mu_s,mu_p") and len(rows) == 4
    dest = tmp_path / "out.csv"
    cfg = tmp_path / "run.cfg"
    cfg.write_text("stop=0.2\nstep=0.1\ntheta=0.02\n")
    code, _ = run(capsys, "sweep", "-c", str(cfg), "-o", str(dest))
    assert code == EXIT_OK
    assert dest.read_text() == out.out


def test_sweep_exit_codes(capsys, caplog):
    code, _ = run(capsys, "sweep", "--set", "start=0.58", "--set", "stop=0.6", "--set", "step=0.02")
    assert code == EXIT_INFEASIBLE
    code, out = run(capsys, "sweep", "--mode", "General", "--set", "M=3", "--set", "N=3", "--set", "d_num=11")
    assert code == EXIT_ERROR and "combinations" in caplog.text
    code, out = run(capsys, "sweep", "--set", "nope=1")
    assert code == EXIT_ERROR and "nope" in caplog.text
    code, _ = run(capsys, "sweep", "--set", "f_pd=0.9")
    assert code == EXIT_ERROR


def test_steady_state(capsys):
    code, out = run(capsys, "steady-state", "--set", "lambda_p=0.1")
    assert code == EXIT_OK
    lines = out.out.splitlines()
    assert lines[2] == "i,j,pi" and len(lines) == 3 + 4
    assert sum(float(line.split(",")[2]) for line in lines[3:]) == pytest.approx(1.0)
    code, out = run(capsys, "steady-state", "--matrix", "--set", "lambda_p=0.1", "--set", "mu_p=0.4")
    assert code == EXIT_OK and "row,col,prob" in out.out


def test_stability(capsys):
    code, out = run(capsys, "stability", "--set", "lambda_s=0.39", "--set", "mu_p=0.3",
                    "--set", "a=0", "--set", "b=1")
    assert code == EXIT_OK and "# stable=1" in out.out
    code, out = run(capsys, "stability", "--system", "Dominant2", "--set", "lambda_p=0.25",
                    "--set", "mu_p=0.5", "--set", "b=1", "--set", "a=0")
    assert "# regime=Unlimited" in out.out


def test_simulate_with_trace(capsys, tmp_path):
    trace = tmp_path / "t.csv"
    code, out = run(capsys, "simulate", "--dominant", "--trace", str(trace), "--trace-every", "100",
                    "--set", "horizon=1000", "--set", "lambda_s=1")
    assert code == EXIT_OK
    assert "rng=numpy.random.Philox" in out.out
    assert len(trace.read_text().splitlines()) == 11
