import numpy as np
import scipy.linalg
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qmefix.errors import NonDiagonalizable
from qmefix.fixedpoint import SuperopTrajectory, anti_time_ordered_exp, khat_of_superop
from qmefix.liouville import (check_hermicity_preserving, devectorize, from_json,
                              hermicity_project, spectral_decompose, superop_exp, to_json,
                              vectorize)
from qmefix.memexp import fcoeff_binomial, fcoeff_recursive
from qmefix.model_jc import JcParams, jc_kernel_split
from qmefix.model_rlm import RlmParams, rlm_kernel_split

TRACE = np.array([1, 0, 0, 1])
# LAPACK balancing mishandles entries near the underflow range, so tiny values snap to zero
finite = st.floats(-1, 1, allow_nan=False, allow_infinity=False).map(
    lambda v: v if abs(v) > 1e-100 else 0.0)
real4 = arrays(np.float64, (4, 4), elements=finite)

KERNELS = [jc_kernel_split(JcParams.from_ratio(0.495, eps=1.0)),
           jc_kernel_split(JcParams.from_ratio(0.3, eps=-0.5)),
           rlm_kernel_split(RlmParams(1.0, 0.1 / (2 * np.pi), eps=2 * np.pi))]


def _generator(re, im):
    return hermicity_project(re + 1j * im)


def _khat(which, x):
    # the spectral route needs a diagonalizable argument
    try:
        return khat_of_superop(KERNELS[which], x)
    except NonDiagonalizable:
        assume(False)


@settings(max_examples=100, deadline=None)
@given(real4, real4, st.sampled_from(range(len(KERNELS))))
def test_khat_keeps_trace_row_zero(re, im, which):
    k = _khat(which, _generator(re, im))
    assert np.max(np.abs(TRACE @ k)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(real4, real4, st.sampled_from(range(len(KERNELS))))
def test_khat_propagates_hermicity(re, im, which):
    x = _generator(re, im)
    k = _khat(which, x)
    # the spectral route loses accuracy in proportion to the eigenvector conditioning
    assert check_hermicity_preserving(k, 1e-12 * max(1.0, spectral_decompose(x).condition))


@settings(max_examples=100, deadline=None)
@given(real4, real4)
def test_spectral_reconstruction(re, im):
    m = re + 1j * im + np.diag([0.0, 1.1, 2.3, 3.7])  # keeps the spectrum simple
    dec = spectral_decompose(m)
    assert dec.biorthogonality_error() < 1e-9
    assert np.max(np.abs(dec.reconstruct() - m)) < 1e-9


@settings(max_examples=100, deadline=None)
@given(real4, real4, st.floats(-2, 2), st.floats(-2, 2))
def test_exponential_group_law(re, im, s, t):
    x = re + 1j * im
    np.testing.assert_allclose(superop_exp(x, s) @ superop_exp(x, t), superop_exp(x, s + t),
                               atol=1e-9 * np.exp(4 * abs(s) + 4 * abs(t)))


@settings(max_examples=50, deadline=None)
@given(real4, real4, real4, real4)
def test_divisor_group_property(a_re, a_im, b_re, b_im):
    a, b = _generator(a_re, a_im), _generator(b_re, b_im)
    traj = SuperopTrajectory.from_function(lambda t: a + np.sin(t) * b, 1.0, 11)
    lhs = anti_time_ordered_exp(traj, 0.0, 1.0)
    rhs = anti_time_ordered_exp(traj, 0.0, 0.4) @ anti_time_ordered_exp(traj, 0.4, 1.0)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * max(1.0, np.max(np.abs(lhs))))


@settings(max_examples=100, deadline=None)
@given(arrays(np.complex128, (3, 3), elements=st.complex_numbers(max_magnitude=1e3,
                                                                 allow_nan=False)))
def test_vectorize_round_trip(a):
    assert np.array_equal(devectorize(vectorize(a)), a)


@settings(max_examples=100, deadline=None)
@given(real4, real4)
def test_json_round_trip(re, im):
    x = re + 1j * im
    assert np.array_equal(from_json(to_json(x)), x)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=6))
def test_coefficient_forms_agree(p):
    assert fcoeff_recursive(len(p), p) == fcoeff_binomial(len(p), p)


@settings(max_examples=50, deadline=None)
@given(real4, real4)
def test_hermicity_projection_is_closest(re, im):
    x = re + 1j * im
    y = hermicity_project(x)
    z = hermicity_project(scipy.linalg.expm(0.1 * (re + 1j * im)))
    assert np.linalg.norm(x - y) <= np.linalg.norm(x - z) + 1e-12
