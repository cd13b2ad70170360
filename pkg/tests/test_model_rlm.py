import mpmath
import numpy as np
import pytest
import scipy.integrate
import scipy.special

from qmefix.errors import DomainError
from qmefix.liouville import check_hermicity_preserving, check_trace_preserving
from qmefix.model_rlm import (RlmParams, coherence_eigenvalues, digamma, eigenvalue_poles,
                              eigenvector_poles, lerch_phi, rlm_g, rlm_g_infty, rlm_generator,
                              rlm_k, rlm_kernel_hat, rlm_kernel_local, rlm_kernel_nonlocal,
                              rlm_khat, rlm_p, rlm_propagator, rlm_propagator_hat)

# oracle: mpmath quadrature of the defining integral at Gamma = 1, T = 0.1 / (2 pi), eps = 2 pi
KHAT_AT_HALF_GAMMA = 0.94944488496


def _mp_k(s, p):
    e, T = mpmath.mpf(p.detuning), mpmath.mpf(p.T)
    if s == 0:
        return 2 * e / mpmath.pi
    return 2 * T * mpmath.sin(e * s) / mpmath.sinh(mpmath.pi * T * s)


@mpmath.workdps(20)
def _mp_g(t, p):
    return float(mpmath.quad(lambda s: mpmath.exp(-p.Gamma * s / 2) * _mp_k(s, p),
                             mpmath.linspace(0, t, 12)))


@mpmath.workdps(20)
def _mp_p(t, p):
    G = p.Gamma
    inner = mpmath.quad(lambda s: mpmath.exp(-G * (t - s)) * _mp_g(float(s), p), [0, t])
    return float(G / (1 - mpmath.exp(-G * t)) * inner)


@pytest.mark.parametrize("z", [0.5 + 0.1j, 3.7, -2.5 + 0.3j, 0.5 + 12j, 20 - 5j, 0.01 + 0.01j])
def test_digamma_matches_mpmath(z):
    assert abs(digamma(z) - complex(mpmath.digamma(z))) < 1e-12 * max(1, abs(digamma(z)))


def test_digamma_real_axis_matches_scipy():
    x = np.linspace(0.1, 30, 40)
    np.testing.assert_allclose(np.real(digamma(x)), scipy.special.psi(x), rtol=1e-13)


@pytest.mark.parametrize("z", [0.0, -1.0, -7.0])
def test_digamma_poles(z):
    with pytest.raises(DomainError):
        digamma(z)


@pytest.mark.parametrize("z,a", [(0.5, 0.5 + 1j), (0.9, 2.3 - 0.4j), (-0.7j, 0.5 + 5j), (0.99, 0.5)])
def test_lerch_matches_mpmath(z, a):
    ref = complex(mpmath.lerchphi(z, 1, a))
    assert abs(lerch_phi(z, a) - ref) < 1e-12 * abs(ref)


def test_lerch_domain():
    with pytest.raises(DomainError):
        lerch_phi(1.0, 0.5)
    with pytest.raises(DomainError):
        lerch_phi(0.5, -2.0)
    with pytest.raises(DomainError):
        lerch_phi(0.5, 0.5, s=2)


def test_k_at_zero(rlm):
    assert np.isclose(rlm_k(0.0, rlm), 2 * rlm.detuning / np.pi)
    assert np.isclose(rlm_k(1e-9, rlm), 2 * rlm.detuning / np.pi)


def test_khat_frozen(rlm):
    assert abs(rlm_khat(0.5j, rlm) - KHAT_AT_HALF_GAMMA) < 1e-10


@pytest.mark.parametrize("omega", [0.5j, 0.3 + 0.8j, -1.0 + 0.2j])
def test_khat_routes_agree(rlm, omega):
    assert abs(rlm_khat(omega, rlm) - rlm_khat(omega, rlm, route="quadrature")) < 1e-9


@pytest.mark.parametrize("t", [0.05, 0.5, 2.0, 7.0])
def test_g_matches_mpmath(rlm, t):
    assert abs(rlm_g(t, rlm) - _mp_g(t, rlm)) < 1e-10


def test_g_tends_to_khat(rlm):
    assert abs(rlm_g(60.0, rlm) - rlm_khat(0.5j, rlm).real) < 1e-10


@pytest.mark.parametrize("t", [0.1, 1.0, 4.0])
def test_p_matches_mpmath(rlm, t):
    ref = _mp_p(t, rlm)
    assert abs(rlm_p(t, rlm, route="lerch") - ref) < 1e-9
    assert abs(rlm_p(t, rlm, route="quadrature") - ref) < 1e-9


def test_propagator_basics(rlm):
    np.testing.assert_allclose(rlm_propagator(0.0, rlm), np.eye(4), atol=1e-14)
    for t in (0.3, 2.0):
        pi = rlm_propagator(t, rlm)
        np.testing.assert_allclose(np.array([1, 0, 0, 1]) @ pi, [1, 0, 0, 1], atol=1e-14)


@pytest.mark.parametrize("t", [0.4, 1.5, 5.0])
def test_generator_solves_g_pi_equals_i_pi_dot(rlm, t):
    h = 1e-4
    dot = (rlm_propagator(t + h, rlm) - rlm_propagator(t - h, rlm)) / (2 * h)
    np.testing.assert_allclose(rlm_generator(t, rlm) @ rlm_propagator(t, rlm), 1j * dot, atol=1e-7)


def test_generator_is_local_plus_integrated_kernel(rlm):
    for t in (0.5, 3.0, 10.0):
        integral = scipy.integrate.quad_vec(lambda s: rlm_kernel_nonlocal(s, rlm), 0, t,
                                            epsabs=1e-13, limit=400)[0]
        np.testing.assert_allclose(rlm_generator(t, rlm), rlm_kernel_local(rlm) + integral, atol=1e-10)


def test_stationary_generator_equals_khat_at_zero(rlm):
    np.testing.assert_allclose(rlm_g_infty(rlm), rlm_kernel_hat(0.0, rlm), atol=1e-12)
    g = rlm_g_infty(rlm)
    assert check_trace_preserving(g) and check_hermicity_preserving(g)


def test_eigenvalue_poles_are_fixed_points(rlm):
    for E in eigenvalue_poles(rlm):
        values = np.linalg.eigvals(rlm_kernel_hat(E, rlm))
        assert np.min(np.abs(values - E)) < 1e-10
    assert coherence_eigenvalues(rlm)[0] == eigenvalue_poles(rlm)[1]


def test_eigenvector_poles_lie_below_eigenvalue_poles(rlm):
    poles = eigenvector_poles(rlm, n_max=2)
    assert poles.size == 6
    assert np.all(poles.imag < -0.5 * rlm.Gamma)


def test_propagator_hat_is_laplace_transform(rlm):
    E = 0.3 + 0.4j
    quad = scipy.integrate.quad_vec(lambda t: np.exp(1j * E * t) * rlm_propagator(t, rlm),
                                    0, 120, epsabs=1e-11, limit=500)[0]
    np.testing.assert_allclose(rlm_propagator_hat(E, rlm), quad, atol=1e-7)


def test_occupation_re_entrance_from_empty_level(rlm):
    # the exact occupation overshoots its stationary value before settling
    times = np.linspace(0, 10, 401)
    occ = np.array([(rlm_propagator(t, rlm) @ np.array([1, 0, 0, 0]))[3].real for t in times])
    peak = np.argmax(occ)
    assert 0 < peak < times.size - 1
    assert occ[peak] > 2 * occ[-1]


def test_params_validation():
    with pytest.raises(ValueError):
        RlmParams(Gamma=1.0, T=0.0)
