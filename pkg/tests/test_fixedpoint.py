import numpy as np
import pytest
import scipy.linalg

from qmefix.errors import DivergentQuadrature, GridMismatch, MaxIterExceeded
from qmefix.fixedpoint import (IterationReport, SuperopTrajectory, anti_time_ordered_exp,
                               khat_functional, khat_functional_all, khat_of_superop,
                               stationary_iterate, transient_iterate)
from qmefix.liouville import hermicity_project
from qmefix.model_jc import jc_g_infty, jc_generator, jc_kernel_hat, jc_kernel_split
from qmefix.model_rlm import rlm_g_infty, rlm_generator, rlm_kernel_hat, rlm_kernel_split


def _random_generator(rng, scale=0.3):
    return hermicity_project(scale * (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))))


def test_divisor_of_constant_is_exponential(rng):
    x = _random_generator(rng)
    traj = SuperopTrajectory.constant(x, 2.0, 41)
    np.testing.assert_allclose(anti_time_ordered_exp(traj, 0.5, 1.5), scipy.linalg.expm(1j * x),
                               atol=1e-12)


def test_divisor_composes(rng):
    a, b = _random_generator(rng), _random_generator(rng)
    traj = SuperopTrajectory.from_function(lambda t: a + t * b, 1.0, 21)
    d = anti_time_ordered_exp
    np.testing.assert_allclose(d(traj, 0.2, 0.9), d(traj, 0.2, 0.5) @ d(traj, 0.5, 0.9), atol=1e-13)
    with pytest.raises(GridMismatch):
        d(traj, 0.9, 0.2)


def test_divisor_is_anti_time_ordered(rng):
    # later factors stand to the right
    a, b = _random_generator(rng), _random_generator(rng)
    values = np.array([a, a, b, b])
    traj = SuperopTrajectory(3.0, values)
    expected = scipy.linalg.expm(1j * a) @ scipy.linalg.expm(0.5j * (a + b)) @ scipy.linalg.expm(1j * b)
    np.testing.assert_allclose(anti_time_ordered_exp(traj, 0.0, 3.0), expected, atol=1e-12)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        SuperopTrajectory(1.0, np.full((3, 4, 4), np.nan))
    traj = SuperopTrajectory.constant(np.eye(4), 1.0, 11)
    assert traj.index_of(0.3) == 3
    with pytest.raises(GridMismatch):
        traj.index_of(0.35)


def test_masked_nodes_are_zeroed():
    values = np.ones((5, 4, 4), dtype=complex)
    values[2] = np.inf
    traj = SuperopTrajectory(1.0, values, mask=[False, False, True, False, False])
    assert np.all(traj.values[2] == 0)


@pytest.mark.parametrize("E", [0.0, 0.4 + 0.1j, -1.0 + 0.3j])
def test_khat_of_scalar_superop_is_khat(jc_over, E):
    kernel = jc_kernel_split(jc_over)
    np.testing.assert_allclose(khat_of_superop(kernel, E * np.eye(4)), jc_kernel_hat(E, jc_over),
                               atol=1e-12)


def test_khat_routes_agree(jc_over):
    kernel = jc_kernel_split(jc_over)
    x = jc_g_infty(jc_over)
    np.testing.assert_allclose(khat_of_superop(kernel, x, route="quadrature"),
                               khat_of_superop(kernel, x), atol=1e-9)


def test_quadrature_route_refuses_growing_exponential(jc_over):
    kernel = jc_kernel_split(jc_over)
    with pytest.raises(DivergentQuadrature):
        khat_of_superop(kernel, -5j * np.eye(4), route="quadrature")


def test_exact_stationary_generator_is_fixed_point(jc_over, rlm):
    np.testing.assert_allclose(khat_of_superop(jc_kernel_split(jc_over), jc_g_infty(jc_over)),
                               jc_g_infty(jc_over), atol=1e-12)
    np.testing.assert_allclose(khat_of_superop(rlm_kernel_split(rlm), rlm_g_infty(rlm)),
                               rlm_g_infty(rlm), atol=1e-12)


def test_rlm_stationary_iteration_terminates(rlm):
    x, report = stationary_iterate(rlm_kernel_split(rlm), rlm_kernel_hat(0.0, rlm), tol=1e-10)
    assert report.converged and report.iters <= 2
    np.testing.assert_allclose(x, rlm_g_infty(rlm), atol=1e-10)


def test_max_iter_carries_state(jc_over):
    kernel = jc_kernel_split(jc_over)
    with pytest.raises(MaxIterExceeded) as info:
        stationary_iterate(kernel, jc_kernel_hat(0.0, jc_over), max_iter=3)
    assert info.value.report.iters == 3
    assert info.value.result.shape == (4, 4)


def test_unknown_acceleration(jc_over):
    with pytest.raises(ValueError):
        stationary_iterate(jc_kernel_split(jc_over), np.eye(4), accelerate="broyden")


def test_report_json_round_trip():
    report = IterationReport([1.0, 0.5, 0.25], converged=True)
    back = IterationReport.from_json(report.to_json())
    assert back.residuals == report.residuals and back.converged
    with pytest.raises(ValueError):
        IterationReport.from_json('{"iters": 5, "residuals": [1.0], "converged": false, "oscillating": false}')


def test_oscillation_flag():
    report = IterationReport()
    for k in range(20):
        report.residuals.append(1.0 + 0.1 * (-1) ** k)
        report.update_oscillation(window=10)
    assert report.oscillating and report.oscillation_onset == 11


def test_functional_reproduces_exact_rlm_generator(rlm):
    g = SuperopTrajectory.from_function(lambda t: rlm_generator(t, rlm), 6.0, 601)
    out = khat_functional_all(rlm_kernel_split(rlm), g)
    assert np.max(np.abs(out - g.values)) < 1e-8


def test_functional_reproduces_exact_jc_generator(jc_over):
    g = SuperopTrajectory.from_function(lambda t: jc_generator(t, jc_over), 5.0, 1001)
    out = khat_functional_all(jc_kernel_split(jc_over), g)
    assert np.max(np.abs(out - g.values)) < 1e-6


def test_functional_end_correction_raises_order(jc_over):
    kernel = jc_kernel_split(jc_over)
    errors = {}
    for corrected in (False, True):
        errs = []
        for nodes in (201, 401):
            g = SuperopTrajectory.from_function(lambda t: jc_generator(t, jc_over), 4.0, nodes)
            errs.append(np.max(np.abs(khat_functional_all(kernel, g, corrected) - g.values)))
        errors[corrected] = errs
    assert errors[True][1] < errors[False][1]
    assert np.log2(errors[True][0] / errors[True][1]) > 1.8


def test_functional_single_node_matches_scan(jc_over):
    g = SuperopTrajectory.constant(jc_kernel_hat(0.0, jc_over), 2.0, 81)
    kernel = jc_kernel_split(jc_over)
    full = khat_functional(kernel, g)
    np.testing.assert_allclose(khat_functional(kernel, g, 1.0), full.values[40], atol=1e-13)


def test_functional_at_zero_is_local_part(jc_over):
    g = SuperopTrajectory.constant(jc_kernel_hat(0.0, jc_over), 2.0, 81)
    out = khat_functional_all(jc_kernel_split(jc_over), g)
    np.testing.assert_array_equal(out[0], jc_kernel_split(jc_over).local)


def test_transient_block_must_be_invariant(jc_over):
    g0 = SuperopTrajectory.constant(jc_kernel_hat(0.0, jc_over), 2.0, 41)
    with pytest.raises(ValueError):
        transient_iterate(jc_kernel_split(jc_over), g0, 1, block=[0, 1])


def test_transient_block_matches_full_iteration(jc_over):
    kernel = jc_kernel_split(jc_over)
    g0 = SuperopTrajectory.constant(jc_kernel_hat(0.0, jc_over), 3.0, 121)
    full, _ = transient_iterate(kernel, g0, 2)
    part, _ = transient_iterate(kernel, g0, 2, block=[0, 3])
    idx = np.ix_([0, 3], [0, 3])
    np.testing.assert_allclose(part[-1].values[:, idx[0], idx[1]],
                               full[-1].values[:, idx[0], idx[1]], atol=1e-13)
    np.testing.assert_array_equal(part[-1].values[:, 1, 1], g0.values[:, 1, 1])
