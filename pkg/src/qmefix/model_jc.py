"""Dissipative Jaynes-Cummings model with a Lorentzian spectral density.

Closed forms for the excited-state amplitude, the propagator in time and
frequency, the time-local generator and the frequency-domain memory kernel.
All objects are block diagonal in the basis ``|00>>, |01>>, |10>>, |11>>``:
an occupation block spanned by ``|00>>, |11>>`` and two coherence entries.

Every rational function below is written in terms of ``gamma'**2`` rather than
``gamma'`` so the same expressions serve the overdamped (real ``gamma'``),
critical (``gamma' = 0``) and underdamped (imaginary ``gamma'``) regimes.
"""

from dataclasses import dataclass

import numpy as np

from .errors import PoleHit, SingularTime, TransformZero, WrongRegime
from .fixedpoint import KernelSplit

I00, I01, I10, I11 = 0, 1, 2, 3
POLE_TOL = 1e-12
GUARD = 1e-6


@dataclass(frozen=True)
class JcParams:
    """Lorentzian width ``gamma``, peak coupling ``Gamma`` and level splitting ``eps``."""

    gamma: float
    Gamma: float
    eps: float = 0.0

    def __post_init__(self):
        if not (self.gamma > 0 and self.Gamma > 0):
            raise ValueError("gamma and Gamma must be positive")
        if not np.isfinite(self.eps):
            raise ValueError("eps must be finite")

    @classmethod
    def from_ratio(cls, Gamma_over_gamma, eps=0.0, gamma=1.0):
        return cls(gamma=gamma, Gamma=Gamma_over_gamma * gamma, eps=eps)

    @property
    def gamma_prime_sq(self):
        return self.gamma * (self.gamma - 2.0 * self.Gamma)

    @property
    def gamma_prime(self):
        """``sqrt(gamma (gamma - 2 Gamma))``; purely imaginary when underdamped."""
        return np.sqrt(complex(self.gamma_prime_sq))

    @property
    def Omega(self):
        """Oscillation frequency ``sqrt(gamma (2 Gamma - gamma))`` (underdamped only)."""
        if self.overdamped:
            raise WrongRegime("Omega is defined in the underdamped regime only")
        return float(np.sqrt(-self.gamma_prime_sq))

    @property
    def overdamped(self):
        return self.gamma >= 2.0 * self.Gamma


def _sinhc(z):
    """``sinh(z) / z`` with the removable singularity filled in."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-3
    safe = np.where(small, 1.0, z)
    z2 = z * z
    series = 1.0 + z2 / 6.0 + z2 * z2 / 120.0 + z2 * z2 * z2 / 5040.0
    return np.where(small, series, np.sinh(safe) / safe)


def _occupation_matrix():
    """``(|11>> - |00>>) <<11|``."""
    m = np.zeros((4, 4), dtype=complex)
    m[I11, I11] = 1.0
    m[I00, I11] = -1.0
    return m


M_OCC = _occupation_matrix()


def _assemble(occ, c01, c10, stationary_col=None):
    occ, c01, c10 = np.broadcast_arrays(
        np.asarray(occ, dtype=complex), np.asarray(c01, dtype=complex),
        np.asarray(c10, dtype=complex))
    out = np.zeros(occ.shape + (4, 4), dtype=complex)
    out[..., I11, I11] = occ
    out[..., I00, I11] = -occ
    out[..., I01, I01] = c01
    out[..., I10, I10] = c10
    if stationary_col is not None:
        s = np.broadcast_to(np.asarray(stationary_col, dtype=complex), occ.shape)
        out[..., I00, I00] += s
        out[..., I00, I11] += s
    return out


def jc_pi(t, p):
    """Excited-state amplitude ``pi(t)``; ``|pi(t)|**2`` is the excited population."""
    t = np.asarray(t, dtype=float)
    z = 0.5 * p.gamma_prime * t
    f = np.cosh(z) + 0.5 * p.gamma * t * _sinhc(z)
    return np.exp(-(1j * p.eps + 0.5 * p.gamma) * t) * f


def jc_pi_dot(t, p):
    """Time derivative of :func:`jc_pi`."""
    t = np.asarray(t, dtype=float)
    z = 0.5 * p.gamma_prime * t
    f = np.cosh(z) + 0.5 * p.gamma * t * _sinhc(z)
    fdot = 0.25 * p.gamma_prime_sq * t * _sinhc(z) + 0.5 * p.gamma * np.cosh(z)
    return np.exp(-(1j * p.eps + 0.5 * p.gamma) * t) * (fdot - (1j * p.eps + 0.5 * p.gamma) * f)


def singular_times(p, t_max=None, count=None):
    """Zeros ``t_n`` of ``pi(t)`` (underdamped regime), ``n = 1, 2, ...``.

    Give either ``t_max`` (all ``t_n <= t_max``) or ``count``.
    """
    if p.overdamped:
        return np.empty(0)
    omega = p.Omega
    shift = np.arctan(omega / p.gamma) / np.pi
    if count is None:
        if t_max is None:
            raise ValueError("need t_max or count")
        count = max(int(np.floor(t_max * omega / (2 * np.pi) + shift)), 0)
    n = np.arange(1, count + 1)
    times = 2 * np.pi / omega * (n - shift)
    return times if t_max is None else times[times <= t_max]


def _check_singular(t, p, guard):
    if p.overdamped:
        return
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.size == 0:
        return
    tn = singular_times(p, t_max=float(np.max(t)) + 1.0)
    if tn.size == 0:
        return
    band = guard * 2 * np.pi / p.Omega
    dist = np.min(np.abs(t[:, None] - tn[None, :]), axis=1)
    if np.any(dist <= band):
        bad = t[np.argmin(dist)]
        raise SingularTime(f"t = {bad!r} within {band:.3g} of a generator singularity")


def jc_propagator(t, p):
    """Propagator ``Pi(t)`` (amplitude damping channel)."""
    amp = jc_pi(t, p)
    return _assemble(np.abs(amp) ** 2, amp, np.conj(amp), stationary_col=1.0)


def jc_propagator_dot(t, p):
    """``dPi/dt``; finite at every ``t`` including the singular times."""
    amp, damp = jc_pi(t, p), jc_pi_dot(t, p)
    return _assemble(2 * np.real(np.conj(amp) * damp), damp, np.conj(damp))


def jc_log_derivative(t, p, guard=GUARD):
    """``pi'(t) / pi(t)``."""
    _check_singular(t, p, guard)
    return jc_pi_dot(t, p) / jc_pi(t, p)


def jc_generator(t, p, guard=GUARD):
    """Time-local generator ``G(t) = i Pi'(t) Pi(t)^{-1}``.

    Raises
    ------
    SingularTime
        In the underdamped regime, when ``t`` is within ``guard * 2 pi / Omega``
        of a zero of ``pi``.
    """
    rate = jc_log_derivative(t, p, guard)
    return _assemble(2j * np.real(rate), 1j * rate, 1j * np.conj(rate))


def table_poles(p):
    """The eight poles ``E_0 .. E_7`` of the frequency-domain propagator.

    The first four are the eigenvalues of the stationary generator.
    """
    gp = p.gamma_prime
    g, e = p.gamma, p.eps
    return np.array([
        0.0,
        e - 0.5j * (g - gp),
        -e - 0.5j * (g - gp),
        -1j * (g - gp),
        e - 0.5j * (g + gp),
        -e - 0.5j * (g + gp),
        -1j * g,
        -1j * (g + gp),
    ], dtype=complex)


def _check_pole(E, p):
    E = np.atleast_1d(np.asarray(E, dtype=complex))
    poles = table_poles(p)
    scale = max(p.gamma, abs(p.eps), 1.0)
    if np.any(np.abs(E[:, None] - poles[None, :]) <= POLE_TOL * scale):
        raise PoleHit(f"frequency within {POLE_TOL:g} of a propagator pole")


def _q(E, p):
    return p.gamma - 1j * np.asarray(E, dtype=complex)


def _pcoh(E, p, sign):
    # gamma/2 - i(E - sign*eps)
    return 0.5 * p.gamma - 1j * (np.asarray(E, dtype=complex) - sign * p.eps)


def population_hat(E, p):
    """Laplace transform of ``|pi(t)|**2`` at frequency ``E``."""
    q = _q(E, p)
    return (q * q + p.gamma * q + p.gamma * p.Gamma) / (q * (q * q - p.gamma_prime_sq))


def pi_hat(E, p):
    """Laplace transform of ``pi(t)``."""
    s = _pcoh(E, p, +1)
    return (s + 0.5 * p.gamma) / (s * s - 0.25 * p.gamma_prime_sq)


def pi_conj_hat(E, p):
    """Laplace transform of ``pi(t)^*``, i.e. ``[pi_hat(-E^*)]^*``."""
    s = _pcoh(E, p, -1)
    return (s + 0.5 * p.gamma) / (s * s - 0.25 * p.gamma_prime_sq)


def jc_propagator_hat(E, p):
    """``Pi_hat(E) = int_0^oo dt e^{iEt} Pi(t)``.

    Raises
    ------
    PoleHit
        If ``E`` lies within ``1e-12`` (relative) of one of the eight poles.
    """
    _check_pole(E, p)
    E = np.asarray(E, dtype=complex)
    return _assemble(population_hat(E, p), pi_hat(E, p), pi_conj_hat(E, p),
                     stationary_col=1j / E)


def _kernel_blocks(E, p):
    q = _q(E, p)
    denom_occ = q * q + p.gamma * q + p.gamma * p.Gamma
    d01 = p.gamma - 1j * (np.asarray(E, dtype=complex) - p.eps)
    d10 = p.gamma - 1j * (np.asarray(E, dtype=complex) + p.eps)
    scale = max(p.gamma, abs(p.eps), 1.0)
    for d, power in ((denom_occ, 2), (d01, 1), (d10, 1)):
        if np.any(np.abs(d) <= 1e-14 * scale ** power):
            raise TransformZero("a propagator transform vanishes at this frequency")
    gG = p.gamma * p.Gamma
    occ = -1j * gG * (q + p.gamma) / denom_occ
    c01 = p.eps - 0.5j * gG / d01
    c10 = -p.eps - 0.5j * gG / d10
    return occ, c01, c10


def jc_kernel_hat(E, p):
    """Frequency-domain memory kernel ``K_hat(E) = E - i Pi_hat(E)^{-1}``.

    Raises
    ------
    TransformZero
        Where ``|pi|^2``-hat or ``pi``-hat vanishes (poles of the kernel).
    """
    return _assemble(*_kernel_blocks(E, p))


def jc_kernel_branches(E, p):
    """The eigenvalues ``0, k_occ, k_01, k_10`` of ``K_hat(E)``."""
    occ, c01, c10 = _kernel_blocks(E, p)
    return np.stack(np.broadcast_arrays(np.zeros_like(occ), occ, c01, c10), axis=-1)


def jc_kernel_local(p):
    """Time-local part ``K_l = G(0)``: free rotation of the coherences.

    In the sign convention of ``pi(t)`` the coherence ``|0><1|`` rotates as
    ``exp(-i eps t)``, so ``-i K_l |01>> = -i eps |01>>``.
    """
    return _assemble(0.0, p.eps, -p.eps)


def jc_kernel_nonlocal(t, p):
    """Smooth part ``K_n(t)`` of the memory kernel.

    ``K_hat(E) - K_l`` is rational in ``E``; its inverse Laplace transform is
    a short sum of exponentials which is evaluated here in closed form.
    """
    t = np.asarray(t, dtype=float)
    gG = p.gamma * p.Gamma
    delta = 0.5 * np.sqrt(complex(p.gamma * p.gamma - 4.0 * gG))
    z = delta * t
    occ = -1j * gG * np.exp(-1.5 * p.gamma * t) * (np.cosh(z) + 0.5 * p.gamma * t * _sinhc(z))
    c01 = -0.5j * gG * np.exp(-(p.gamma + 1j * p.eps) * t)
    c10 = -0.5j * gG * np.exp(-(p.gamma - 1j * p.eps) * t)
    return _assemble(occ, c01, c10)


def jc_kernel_split(p):
    """Kernel as ``K_l delta(t) + K_n(t)`` together with its Laplace transform."""
    return KernelSplit(
        local=jc_kernel_local(p),
        nonlocal_part=lambda t: jc_kernel_nonlocal(t, p),
        khat=lambda E: jc_kernel_hat(E, p),
        decay_rate=p.gamma,
    )


def jc_g_infty(p):
    """Exact stationary generator ``G(inf)`` (overdamped regime)."""
    if not p.overdamped:
        raise WrongRegime("G(inf) does not exist for gamma < 2 Gamma; use jc_g_infty_reg")
    rate = -1j * p.eps - 0.5 * (p.gamma - p.gamma_prime.real)
    return _assemble(2j * rate.real, 1j * rate, 1j * np.conj(rate))


def jc_g_infty_reg(p):
    """Principal-value regularized stationary generator (underdamped regime)."""
    if p.overdamped:
        raise WrongRegime("the regularized generator is defined for gamma < 2 Gamma")
    rate = -1j * p.eps - 0.5 * p.gamma
    return _assemble(2j * rate.real, 1j * rate, 1j * np.conj(rate))


def jc_stationary_state():
    """``|00>>``: the ground state is stationary for every parameter set."""
    v = np.zeros(4, dtype=complex)
    v[I00] = 1.0
    return v
