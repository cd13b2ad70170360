"""Finite-temperature resonant level model (wide band, energy-independent ``Gamma``).

The superoperators are expanded in the operator basis ``|1>>``, ``|P>>``
(the parity ``(-1)^N = 1 - 2 d^dagger d``), ``|d>> = |0><1|`` and
``|d^dagger>> = |1><0|``. Coherences are labelled by ``eta = +`` for
``|d>>`` (i.e. ``|d_+^dagger>>`` with ``d_+ = d^dagger``) and ``eta = -`` for
``|d^dagger>>``.

The time dependence of the eigenvectors of the propagator enters through
three scalar functions of the detuning ``eps - mu`` and temperature:
``k(t) = 2T sin((eps - mu) t) / sinh(pi T t)``, its damped integral ``g(t)``
and the weighted average ``p(t)``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .errors import ConvergenceRegion, DomainError, PoleHit
from .fixedpoint import KernelSplit

ONE = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)
PARITY = np.array([1.0, 0.0, 0.0, -1.0], dtype=complex)
I01, I10 = 1, 2
# pole proximity that counts as a hit
POLE_TOL = 1e-12
# below this value of 2 pi T t the Lerch series converges too slowly
LERCH_SWITCH = 0.05


@dataclass(frozen=True)
class RlmParams:
    """Tunnel rate ``Gamma``, temperature ``T``, level ``eps`` and chemical potential ``mu``."""

    Gamma: float
    T: float
    eps: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if not (self.Gamma > 0 and self.T > 0):
            raise ValueError("Gamma and T must be positive (T = 0 is not supported)")
        if not (np.isfinite(self.eps) and np.isfinite(self.mu)):
            raise ValueError("eps and mu must be finite")

    @property
    def detuning(self):
        return self.eps - self.mu


# -- special functions --------------------------------------------------------

_BERNOULLI_TERMS = np.array([1 / 12, -1 / 120, 1 / 252, -1 / 240, 1 / 132,
                             -691 / 32760, 1 / 12, -3617 / 8160])


def _digamma_scalar(z):
    if z.imag == 0 and z.real <= 0 and z.real == np.round(z.real):
        raise DomainError(f"digamma has a pole at {z.real:g}")
    if z.real < 0.5:
        # reflection formula
        return _digamma_scalar(1 - z) - np.pi / np.tan(np.pi * z)
    shift = 0j
    while abs(z) < 15:
        shift -= 1 / z
        z = z + 1
    inv2 = 1 / (z * z)
    series = 0j
    power = inv2
    for c in _BERNOULLI_TERMS:
        series += c * power
        power *= inv2
    return shift + np.log(z) - 0.5 / z - series


def digamma(z):
    """Digamma function ``Psi(z)`` for complex ``z``.

    Recurrence up to ``|z| >= 15`` followed by the asymptotic Stirling
    series; the reflection formula covers ``Re z < 1/2``.

    Raises
    ------
    DomainError
        At the poles ``z = 0, -1, -2, ...``.
    """
    z = np.asarray(z, dtype=complex)
    out = np.array([_digamma_scalar(complex(v)) for v in z.reshape(-1)])
    return out.reshape(z.shape)[()] if z.ndim else out[0]


def lerch_phi(z, a, s=1, tol=1e-16, max_terms=2_000_000):
    """Lerch transcendent ``Phi(z, 1, a) = sum_{n>=0} z**n / (n + a)``.

    Summed directly until the tail bound ``|z|**N / (min_{n>=N}|n + a| (1 - |z|))``
    drops below ``tol`` relative to the partial sum.

    Raises
    ------
    DomainError
        For ``|z| >= 1``, ``s != 1`` or ``a`` a non-positive integer.
    """
    if s != 1:
        raise DomainError("only s = 1 is implemented")
    z, a = complex(z), complex(a)
    if abs(z) >= 1:
        raise DomainError("the series needs |z| < 1")
    if a.imag == 0 and a.real <= 0 and a.real == round(a.real):
        raise DomainError("a may not be a non-positive integer")
    r = abs(z)
    if r == 0:
        return 1 / a
    block = 64
    total = 0j
    power = 1 + 0j
    n0 = 0
    while n0 < max_terms:
        n = np.arange(n0, n0 + block)
        powers = power * z ** (n - n0)
        total += np.sum(powers / (n + a))
        n0 += block
        power = power * z ** block
        dist = n0 + a.real if n0 + a.real > 0 else abs(n0 + a)
        tail = abs(power) / (max(dist, 1e-300) * (1 - r))
        if n0 + a.real > 0 and tail <= tol * max(abs(total), 1e-300):
            return total
        block = min(block * 2, 65536)
    raise DomainError(f"Lerch series did not converge within {max_terms} terms")


# -- scalar functions of the model ---------------------------------------------

def _x_over_sinh(x):
    x = np.asarray(x, dtype=float)
    small = x < 1e-4
    safe = np.where(small, 1.0, x)
    big = 2 * safe * np.exp(-safe) / -np.expm1(-2 * safe)
    return np.where(small, 1 - x * x / 6, big)


def rlm_k(t, p):
    """``k(t) = 2T sin((eps - mu) t) / sinh(pi T t)``; ``k(0) = 2 (eps - mu) / pi``."""
    t = np.asarray(t, dtype=float)
    e = p.detuning
    return 2 * e / np.pi * np.sinc(e * t / np.pi) * _x_over_sinh(np.pi * p.T * t)


def rlm_khat(omega, p, route="digamma"):
    """Laplace transform ``k_hat(omega) = int_0^oo dt exp(i omega t) k(t)``.

    Parameters
    ----------
    route : {"digamma", "quadrature"}
        ``"digamma"`` uses
        ``(1 / (i pi)) [Psi(1/2 + (e - omega)i / (2 pi T)) - Psi(1/2 - (e + omega)i / (2 pi T))]``
        with ``e = eps - mu``, which continues analytically below
        ``Im omega = -pi T``. ``"quadrature"`` integrates numerically and is
        limited to the convergence half plane.
    """
    omega = complex(omega)
    e = p.detuning
    if e == 0:
        return 0j
    if route == "digamma":
        scale = 2 * np.pi * p.T
        try:
            return (digamma(0.5 + 1j * (e - omega) / scale)
                    - digamma(0.5 - 1j * (e + omega) / scale)) / (1j * np.pi)
        except DomainError as exc:
            raise PoleHit(f"k_hat has a pole at omega = {omega}") from exc
    if route != "quadrature":
        raise ValueError(f"unknown route {route!r}")
    rate = omega.imag + np.pi * p.T
    if rate <= 0:
        raise ConvergenceRegion("quadrature needs Im omega > -pi T")
    upper = 40.0 / rate
    opts = dict(limit=2000, epsabs=1e-14, epsrel=1e-12)

    def part(f):
        return scipy.integrate.quad(lambda s: f(np.exp(1j * omega * s) * rlm_k(s, p)),
                                    0, upper, **opts)[0]

    return part(np.real) + 1j * part(np.imag)


def _g_tail(t, p):
    # int_t^oo exp(-Gamma s / 2) k(s) ds via the Lerch transcendent
    e = p.detuning
    a = 0.5 + (0.5 * p.Gamma - 1j * e) / (2 * np.pi * p.T)
    z = np.exp(-2 * np.pi * p.T * t)
    pref = np.exp(-(0.5 * p.Gamma + np.pi * p.T - 1j * e) * t)
    return 2 / np.pi * np.imag(pref * lerch_phi(z, a))


def _g_quad(t, p):
    return scipy.integrate.quad(lambda s: np.exp(-0.5 * p.Gamma * s) * rlm_k(s, p), 0, t,
                                limit=500, epsabs=1e-15, epsrel=1e-13)[0]


def rlm_g(t, p):
    """``g(t) = int_0^t ds exp(-Gamma s / 2) k(s)``; tends to ``k_hat(i Gamma / 2)``."""
    t = np.asarray(t, dtype=float)
    if p.detuning == 0:
        return np.zeros_like(t)
    g_inf = rlm_khat(0.5j * p.Gamma, p).real
    flat = t.reshape(-1)
    out = np.empty(flat.shape)
    for i, ti in enumerate(flat):
        if 2 * np.pi * p.T * ti < LERCH_SWITCH:
            out[i] = _g_quad(ti, p)
        else:
            out[i] = g_inf - _g_tail(ti, p)
    return out.reshape(t.shape)[()] if t.ndim else out[0]


def _p_lerch(t, p):
    e, G, T = p.detuning, p.Gamma, p.T
    z = np.exp(-2 * np.pi * T * t)
    total = 0.0
    for eta in (1, -1):
        a = 0.5 + (1j * e + eta * 0.5 * G) / (2 * np.pi * T)
        sh = np.pi * np.sinh(0.5 * G * t)
        term = (np.exp(-(np.pi * T + 1j * e) * t) / sh * lerch_phi(z, a)
                + np.exp(eta * 0.5 * G * t) / sh * digamma(a))
        total += eta * term.imag
    return total


def _p_quad(t, p):
    G = p.Gamma
    f = lambda u: np.exp(-0.5 * G * u) * rlm_k(u, p) * -np.expm1(-G * (t - u))
    val = scipy.integrate.quad(f, 0, t, limit=500, epsabs=1e-15, epsrel=1e-13)[0]
    return val / -np.expm1(-G * t)


def rlm_p(t, p, route="auto"):
    """Eigenvector function ``p(t) = Gamma / (1 - e^{-Gamma t}) int_0^t ds e^{-Gamma (t-s)} g(s)``.

    ``route="lerch"`` evaluates the closed form in Lerch and digamma
    functions, ``"quadrature"`` the integral identity; ``"auto"`` picks the
    closed form unless ``exp(-2 pi T t)`` is close to 1 or ``Gamma t`` is small
    (where the two closed-form terms cancel).
    """
    t = np.asarray(t, dtype=float)
    if p.detuning == 0:
        return np.zeros_like(t)
    flat = t.reshape(-1)
    out = np.empty(flat.shape)
    for i, ti in enumerate(flat):
        if ti == 0:
            out[i] = 0.0
            continue
        use_lerch = route == "lerch" or (
            route == "auto" and 2 * np.pi * p.T * ti >= LERCH_SWITCH and p.Gamma * ti >= 1.0)
        out[i] = _p_lerch(ti, p) if use_lerch else _p_quad(ti, p)
    return out.reshape(t.shape)[()] if t.ndim else out[0]


# -- superoperators ---------------------------------------------------------------

def _coherence_block(values_plus, values_minus, shape):
    out = np.zeros(shape + (4, 4), dtype=complex)
    out[..., I01, I01] = values_plus
    out[..., I10, I10] = values_minus
    return out


def _outer(ket, bra):
    return np.outer(ket, np.conj(bra))


def coherence_eigenvalues(p):
    """``-eta eps - i Gamma / 2`` for ``eta = +`` (``|d>>``) and ``eta = -`` (``|d^dagger>>``)."""
    return -p.eps - 0.5j * p.Gamma, p.eps - 0.5j * p.Gamma


def _generator_like(value, p):
    """``sum_eta (...) + (-i Gamma / 2) |P>> [<<P| - value <<1|]`` for scalar or array ``value``."""
    value = np.asarray(value, dtype=complex)
    cp, cm = coherence_eigenvalues(p)
    out = _coherence_block(cp, cm, value.shape)
    out += -0.5j * p.Gamma * _outer(PARITY, PARITY)
    out += 0.5j * p.Gamma * value[..., None, None] * _outer(PARITY, ONE)
    return out


def rlm_propagator(t, p):
    """Propagator ``Pi(t)`` with time-dependent eigenvectors through ``p(t)``."""
    t = np.asarray(t, dtype=float)
    pt = np.asarray(rlm_p(t, p), dtype=float)
    cp, cm = coherence_eigenvalues(p)
    out = _coherence_block(np.exp(-1j * cp * t), np.exp(-1j * cm * t), t.shape)
    decay = np.exp(-p.Gamma * t)[..., None, None]
    pt = pt[..., None, None]
    out += 0.5 * (_outer(ONE, ONE) + pt * _outer(PARITY, ONE))
    out += 0.5 * decay * (_outer(PARITY, PARITY) - pt * _outer(PARITY, ONE))
    return out


def rlm_generator(t, p):
    """Time-local generator ``G(t)``, parametrized by ``g(t)``."""
    return _generator_like(rlm_g(t, p), p)


def rlm_g_infty(p):
    """Stationary generator ``G(inf)`` (``g(inf) = k_hat(i Gamma / 2)``)."""
    return _generator_like(rlm_khat(0.5j * p.Gamma, p), p)


def rlm_kernel_hat(E, p):
    """Frequency-domain memory kernel ``K_hat(E)``, parametrized by ``k_hat(E + i Gamma / 2)``."""
    return _generator_like(rlm_khat(complex(E) + 0.5j * p.Gamma, p), p)


def rlm_kernel_local(p):
    """E-independent part of ``K_hat(E)``: coherence rotation-decay and parity decay."""
    return _generator_like(0.0, p)


def rlm_kernel_nonlocal(t, p):
    """``K_n(t) = (i Gamma / 2) e^{-Gamma t / 2} k(t) |P>> <<1|``."""
    t = np.asarray(t, dtype=float)
    amp = np.asarray(0.5j * p.Gamma * np.exp(-0.5 * p.Gamma * t) * rlm_k(t, p))
    return amp[..., None, None] * _outer(PARITY, ONE)


def rlm_kernel_split(p):
    return KernelSplit(
        local=rlm_kernel_local(p),
        nonlocal_part=lambda t: rlm_kernel_nonlocal(t, p),
        khat=lambda E: rlm_kernel_hat(E, p),
        decay_rate=0.5 * p.Gamma + np.pi * p.T,
    )


def eigenvalue_poles(p):
    """The four eigenvalue poles ``0, -eps - i Gamma/2, eps - i Gamma/2, -i Gamma``."""
    cp, cm = coherence_eigenvalues(p)
    return np.array([0.0, cp, cm, -1j * p.Gamma], dtype=complex)


def eigenvector_poles(p, n_max=3):
    """Poles of ``k_hat(E + i Gamma / 2)``: ``+-(eps - mu) - i Gamma/2 - i pi T (2n + 1)``."""
    e = p.detuning
    n = np.arange(n_max + 1)
    shift = -0.5j * p.Gamma - 1j * np.pi * p.T * (2 * n + 1)
    return np.concatenate([e + shift, -e + shift])


def rlm_propagator_hat(E, p):
    """``Pi_hat(E) = int_0^oo dt e^{iEt} Pi(t)``.

    Raises
    ------
    PoleHit
        Within ``1e-12`` of an eigenvalue pole, or at a pole of ``k_hat``.
    """
    E = complex(E)
    scale = max(p.Gamma, abs(p.eps), 1.0)
    if np.min(np.abs(eigenvalue_poles(p) - E)) <= POLE_TOL * scale:
        raise PoleHit(f"E = {E} is an eigenvalue pole")
    kh = rlm_khat(E + 0.5j * p.Gamma, p)
    cp, cm = coherence_eigenvalues(p)
    out = _coherence_block(1j / (E - cp), 1j / (E - cm), ())
    out += 1j / E * 0.5 * (_outer(ONE, ONE) + kh * _outer(PARITY, ONE))
    out += 1j / (E + 1j * p.Gamma) * 0.5 * (_outer(PARITY, PARITY) - kh * _outer(PARITY, ONE))
    return out
