import io

import numpy as np
import pytest
import scipy.linalg

from qmefix.errors import HigherOrderPole, SamplingViolation, SingularResolvent
from qmefix.liouville import spectral_decompose
from qmefix.model_jc import (jc_g_infty, jc_kernel_hat, jc_propagator_hat, table_poles)
from qmefix.model_rlm import rlm_g_infty, rlm_kernel_hat
from qmefix.spectral import (PoleRecord, adiabatic_generator, classify, find_poles,
                             kernel_derivative, resolvent, seed_grid, semigroup_evolution,
                             slippage, verify_sampling, write_pole_csv)


def test_seed_grid_shape():
    seeds = seed_grid((-1, 1), (-2, 0), density=5)
    assert seeds.shape == (25,)
    assert seeds[0] == -1 - 2j and seeds[-1] == 1


def test_find_poles_near_table_values(jc_over):
    khat = lambda E: jc_kernel_hat(E, jc_over)
    exact = table_poles(jc_over)
    poles = find_poles(khat, exact + 0.02 - 0.01j)
    found = np.array([r.energy for r in poles])
    assert found.size == 8
    for E in exact:
        assert np.min(np.abs(found - E)) < 1e-8


def test_sampled_poles_are_the_stationary_eigenvalues(jc_over):
    khat = lambda E: jc_kernel_hat(E, jc_over)
    ref = spectral_decompose(jc_g_infty(jc_over))
    poles = find_poles(khat, table_poles(jc_over) + 0.01, reference=ref)
    sampled = sorted((r.energy for r in poles if r.sampled), key=lambda z: (z.imag, z.real))
    np.testing.assert_allclose(sorted(table_poles(jc_over)[:4], key=lambda z: (z.imag, z.real)),
                               sampled, atol=1e-8)


def test_branch_slope_at_occupation_pole(jc_over):
    # d k / dE at E_3 for Gamma / gamma = 0.495: 0.967 (analytic, 117 / 121)
    khat = lambda E: jc_kernel_hat(E, jc_over)
    poles = find_poles(khat, [-0.9j + 0.01])
    rec = next(r for r in poles if abs(r.energy + 0.9j) < 1e-8)
    assert abs(rec.slope - 117 / 121) < 1e-6


def test_classify_needs_parallel_vectors(jc_over):
    ref = spectral_decompose(jc_g_infty(jc_over))
    rec = PoleRecord(ref.eigenvalues[0], 0, np.array([1, 1, 0, 0]) / np.sqrt(2), np.zeros(4), 0j)
    assert not classify([rec], ref)[0].sampled


def test_verify_sampling_jc(jc_over):
    report = verify_sampling(spectral_decompose(jc_g_infty(jc_over)),
                             lambda E: jc_kernel_hat(E, jc_over))
    assert report.reconstruction_error < 1e-10
    assert max(report.eigenvalue_errors) < 1e-10


def test_verify_sampling_rlm_detects_left_mismatch(rlm):
    g = spectral_decompose(rlm_g_infty(rlm))
    report = verify_sampling(g, lambda E: rlm_kernel_hat(E, rlm))
    assert report.reconstruction_error < 1e-10
    i3 = int(np.argmin(np.abs(g.eigenvalues + 1j * rlm.Gamma)))
    assert report.left_mismatch[i3] > 1e-3


def test_verify_sampling_rejects_wrong_generator(jc_over):
    wrong = spectral_decompose(jc_kernel_hat(0.0, jc_over))
    with pytest.raises(SamplingViolation):
        verify_sampling(wrong, lambda E: jc_kernel_hat(E, jc_over))


def test_slippage_rejects_double_pole():
    rec = PoleRecord(0j, 0, np.ones(4), np.ones(4), 1 + 1e-12)
    with pytest.raises(HigherOrderPole):
        slippage([rec])


def test_slippage_sums_weighted_projectors(jc_over):
    khat = lambda E: jc_kernel_hat(E, jc_over)
    ref = spectral_decompose(jc_g_infty(jc_over))
    poles = [r for r in find_poles(khat, ref.eigenvalues + 0.01, reference=ref) if r.sampled]
    s = slippage(poles)
    # the stationary pole has slope 0, so the trace row is untouched
    np.testing.assert_allclose(np.array([1, 0, 0, 1]) @ s, [1, 0, 0, 1], atol=1e-8)


def test_resolvent_matches_propagator_transform(jc_over):
    E = 0.3 + 0.2j
    np.testing.assert_allclose(resolvent(lambda z: jc_kernel_hat(z, jc_over), E),
                               jc_propagator_hat(E, jc_over), atol=1e-12)


def test_resolvent_raises_at_pole(jc_over):
    with pytest.raises(SingularResolvent):
        resolvent(lambda z: jc_kernel_hat(z, jc_over), 0.0)


def test_semigroup_evolution_stack(jc_over):
    g = jc_g_infty(jc_over)
    out = semigroup_evolution(g, np.array([0.0, 0.5, 2.0]))
    assert out.shape == (3, 4, 4)
    np.testing.assert_allclose(out[2], scipy.linalg.expm(-2j * g), atol=1e-12)
    np.testing.assert_allclose(semigroup_evolution(g, 0.5), out[1])


def test_adiabatic_generator(rlm):
    khat = lambda E: rlm_kernel_hat(E, rlm)
    k0 = khat(0.0)
    np.testing.assert_allclose(adiabatic_generator(khat), k0 + kernel_derivative(khat) @ k0)


def test_pole_csv_layout(jc_over):
    poles = find_poles(lambda E: jc_kernel_hat(E, jc_over), [0.01])
    buf = io.StringIO()
    write_pole_csv(poles, buf, ["model = jc"])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# model = jc"
    assert lines[1].startswith("re(E),im(E),branch,sampled")
