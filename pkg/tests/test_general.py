import numpy as np
import pytest

from ccrn import _kernels
from ccrn.general import (
    ComplexityError,
    InfeasibleLambdaError,
    UnstablePrimaryError,
    algorithm1_max_throughput,
    brute_force_max_throughput,
    combination_count,
    evaluate_policy,
    fixed_point_mu_p,
    free_cells,
    heuristic_max_throughput,
    primary_service_rate,
    scan_start,
    secondary_service_rate,
)
from ccrn.model import PolicyMatrix, SystemParams, mu_p_grid, probability_grid


def variable_maps(params):
    a_cells, b_cells = free_cells(params)
    a_var = np.full(params.shape, -1, dtype=np.int64)
    b_var = np.full(params.shape, -1, dtype=np.int64)
    for k, cell in enumerate(a_cells):
        a_var[cell] = k
    for k, cell in enumerate(b_cells):
        b_var[cell] = len(a_cells) + k
    return a_var, b_var, len(a_cells) + len(b_cells)


def policy_at(index, params, d_num):
    a_var, b_var, n_vars = variable_maps(params)
    values = probability_grid(d_num)
    digits = _kernels.decode(index, n_vars, d_num)
    a = np.where(a_var >= 0, values[digits[np.maximum(a_var, 0)]], 0.0)
    b = np.where(b_var >= 0, values[digits[np.maximum(b_var, 0)]], 1.0)
    return PolicyMatrix(a, b)


def kernel_trace(params, lam, d_num, lo, hi, full_scan=False, argmin=False, theta=1e-3):
    a_var, b_var, _ = variable_maps(params)
    grid = mu_p_grid(scan_start(params, lam, 1e-6), params.mu_p_max, theta)
    return _kernels.operating_points(params.f_pd, params.f_ps, params.f_sd, params.delta, a_var, b_var,
                                     probability_grid(d_num), lam, grid, lo, hi, argmin, full_scan)


def test_free_cells_and_counts():
    p = SystemParams(M=1, N=2)
    a_cells, b_cells = free_cells(p)
    assert len(a_cells) == len(b_cells) == 4
    assert combination_count(p, 11) == 11 ** 8
    assert combination_count(p, 11, heuristic=True) == 121
    assert combination_count(SystemParams(), 11) == 11 ** 4


def test_service_rates_on_hand_distribution():
    p = SystemParams()
    pol = PolicyMatrix(np.array([[0.5, 0.0], [1.0, 0.0]]), np.array([[1.0, 0.2], [1.0, 0.4]]))
    pi = np.array([0.4, 0.1, 0.3, 0.2])
    assert primary_service_rate(p, pol, pi) == pytest.approx(0.3 + 0.28 * (0.2 + 0.3))
    energy = 0.5 * (0.4 + 0.2 * 0.1) + (0.3 + 0.4 * 0.2)
    assert secondary_service_rate(p, pol, pi, 0.5, 0.25) == pytest.approx(0.5 * 0.8 * energy)
    with pytest.raises(UnstablePrimaryError):
        secondary_service_rate(p, pol, pi, 0.3, 0.3)


def test_fixed_point_is_self_consistent():
    p = SystemParams()
    fp = fixed_point_mu_p(p, PolicyMatrix.uniform(1, 1), 0.2)
    assert fp.residual <= 1e-3
    assert fp.mu_p_bar == pytest.approx(primary_service_rate(p, PolicyMatrix.uniform(1, 1), fp.dist))


def test_fixed_point_rejects_unsustainable_load():
    with pytest.raises(InfeasibleLambdaError):
        fixed_point_mu_p(SystemParams(), PolicyMatrix.uniform(1, 1, a=0.0), 0.35)
    with pytest.raises(ValueError):
        fixed_point_mu_p(SystemParams(), PolicyMatrix.uniform(1, 1), 0.2, selection="nearest")


def test_kernel_matches_numpy_evaluation():
    p = SystemParams()
    d_num = 5
    for lam in (0.0, 0.15, 0.3):
        trace = kernel_trace(p, lam, d_num, 0, combination_count(p, d_num), full_scan=True)
        for index in range(0, trace.shape[0], 7):
            mu_s, fp = evaluate_policy(p, policy_at(index, p, d_num), lam)
            if mu_s is None:
                assert np.isnan(trace[index, 1])
            else:
                assert trace[index, 0] == pytest.approx(fp.mu_p, abs=1e-12)
                assert trace[index, 1] == pytest.approx(mu_s, abs=1e-10)


@pytest.mark.parametrize("params", [SystemParams(), SystemParams(N=2), SystemParams(M=2),
                                    SystemParams(f_pd=0.1, f_ps=0.9, f_sd=0.5, delta=0.8, N=2)])
def test_fast_search_agrees_with_full_scan(params):
    rng = np.random.default_rng(0)
    total = combination_count(params, 11)
    for lam in (0.05, 0.2, 0.35, 0.5):
        if lam >= params.mu_p_max:
            continue
        lo = int(rng.integers(0, max(total - 1500, 1)))
        hi = min(lo + 1500, total)
        fast = kernel_trace(params, lam, 11, lo, hi)
        full = kernel_trace(params, lam, 11, lo, hi, full_scan=True)
        assert np.array_equal(fast, full, equal_nan=True)


def test_algorithm1_equals_brute_force_binary_grid():
    p = SystemParams()
    for lam in (0.0, 0.1, 0.2, 0.3, 0.4):
        fast = algorithm1_max_throughput(p, lam, d_num=2)
        slow = brute_force_max_throughput(p, lam, d_num=2)
        assert fast.feasible == slow.feasible
        assert fast.mu_s == pytest.approx(slow.mu_s, abs=1e-10)


def test_algorithm1_equals_brute_force_three_levels():
    p = SystemParams(delta=0.3)
    for lam in (0.1, 0.25):
        assert algorithm1_max_throughput(p, lam, d_num=3).mu_s == pytest.approx(
            brute_force_max_throughput(p, lam, d_num=3).mu_s, abs=1e-10)


def test_zero_load_and_cutoff():
    p = SystemParams()
    assert algorithm1_max_throughput(p, 0.0, d_num=3).mu_s == pytest.approx(0.4, abs=1e-12)
    point = algorithm1_max_throughput(p, 0.6, d_num=3)
    assert not point.feasible and point.mu_s == 0.0


def test_heuristic_never_beats_full_search():
    p = SystemParams()
    for lam in (0.1, 0.3, 0.45):
        h = heuristic_max_throughput(p, lam, d_num=6)
        g = algorithm1_max_throughput(p, lam, d_num=6)
        assert h.mu_s <= g.mu_s + 1e-12


def test_best_policy_reproduces_its_throughput():
    p = SystemParams()
    point = algorithm1_max_throughput(p, 0.25, d_num=6)
    mu_s, fp = evaluate_policy(p, point.policy, 0.25)
    assert mu_s == pytest.approx(point.mu_s, abs=1e-10)
    assert fp.mu_p == pytest.approx(point.mu_p, abs=1e-12)


def test_complexity_guard():
    with pytest.raises(ComplexityError):
        algorithm1_max_throughput(SystemParams(M=3, N=3), 0.1, max_combinations=10 ** 6)


def test_workers_give_same_answer():
    p = SystemParams()
    assert algorithm1_max_throughput(p, 0.2, d_num=5, workers=2) == algorithm1_max_throughput(p, 0.2, d_num=5)


def test_crossing_and_argmin_selection():
    # Below f_pd the gap has a single root and both rules agree.  At
    # lambda_p = f_pd the gap also vanishes at the scan start, where the
    # literal argmin lands instead of the stable root.
    p = SystemParams()
    rng = np.random.default_rng(5)
    moved = 0
    for _ in range(15):
        pol = PolicyMatrix(rng.uniform(size=p.shape), rng.uniform(size=p.shape))
        for lam in (0.1, 0.2):
            assert fixed_point_mu_p(p, pol, lam).mu_p == fixed_point_mu_p(p, pol, lam, selection="argmin").mu_p
        try:
            stable = fixed_point_mu_p(p, pol, 0.3)
        except InfeasibleLambdaError:
            continue
        literal = fixed_point_mu_p(p, pol, 0.3, selection="argmin")
        if literal.mu_p != stable.mu_p:
            moved += 1
            assert literal.mu_p == pytest.approx(scan_start(p, 0.3, 1e-6))
    assert moved > 0
    with pytest.raises(ValueError):
        fixed_point_mu_p(p, pol, 0.1, selection="nearest")
