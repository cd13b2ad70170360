"""Fixed-point relation between a memory kernel and its time-local generator.

The generator is the fixed point ``G = K_hat[G]`` of the functional

    K_hat[X](t) = K_l + int_0^t ds K_n(t - s) D_X(s, t),

where ``D_X(s, t)`` is the anti-time-ordered exponential of ``i int_s^t X``.
This module provides that functional on a uniform grid, its stationary
counterpart ``K_hat(X) = int_0^oo ds K(s) exp(isX)`` and the two iteration
schemes built on them.
"""

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.integrate

from .errors import (DivergentQuadrature, GridMismatch, MaxIterExceeded, SingularTime)
from .liouville import spectral_decompose, superop_exp

DEFAULT_NODES = 2000


@dataclass(frozen=True)
class KernelSplit:
    """Memory kernel ``K(t) = K_l delta(t) + K_n(t)``.

    Attributes
    ----------
    local : ndarray
        The delta-singular part ``K_l``.
    nonlocal_part : callable
        ``t -> K_n(t)``; must accept arrays of times and return ``t.shape + (n, n)``.
    khat : callable, optional
        Analytic Laplace transform ``E -> K_hat(E)``.
    decay_rate : float
        A rate ``r`` with ``||K_n(t)|| <~ exp(-r t)``; bounds the region where
        the Laplace integral converges.
    """

    local: np.ndarray
    nonlocal_part: Callable
    khat: Optional[Callable] = None
    decay_rate: float = 1.0

    @property
    def size(self):
        return self.local.shape[0]

    def block(self, indices):
        """Restriction to the index block ``indices`` (which must be invariant)."""
        idx = np.asarray(indices)
        sub = np.ix_(idx, idx)
        khat = None if self.khat is None else (lambda E: np.asarray(self.khat(E))[..., idx[:, None], idx])
        return KernelSplit(np.asarray(self.local)[sub],
                           lambda t: np.asarray(self.nonlocal_part(t))[..., idx[:, None], idx],
                           khat, self.decay_rate)

    def laplace(self, E):
        if self.khat is not None:
            return self.khat(E)
        return khat_of_superop(self, E * np.eye(self.size), route="quadrature")


@dataclass(frozen=True)
class SuperopTrajectory:
    """Superoperator samples on the uniform grid ``t_k = k * t_max / (n - 1)``.

    Nodes listed in ``mask`` are singular: their stored values are zero and
    must not be used.
    """

    t_max: float
    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.ndim != 3 or values.shape[0] < 2 or values.shape[1] != values.shape[2]:
            raise ValueError("values must have shape (nodes >= 2, n, n)")
        mask = np.zeros(values.shape[0], bool) if self.mask is None else np.asarray(self.mask, bool)
        if mask.shape != values.shape[:1]:
            raise ValueError("mask length must equal the node count")
        values = np.where(mask[:, None, None], 0.0, values)
        if not np.all(np.isfinite(values)):
            raise ValueError("trajectory values must be finite; mask singular nodes instead")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def constant(cls, x, t_max, nodes=DEFAULT_NODES):
        x = np.asarray(x, dtype=complex)
        return cls(t_max, np.broadcast_to(x, (nodes,) + x.shape).copy())

    @classmethod
    def from_function(cls, func, t_max, nodes=DEFAULT_NODES):
        """Sample ``func`` at every node; nodes raising :class:`SingularTime` are masked."""
        times = np.linspace(0.0, t_max, nodes)
        values, mask = [], np.zeros(nodes, bool)
        for k, t in enumerate(times):
            try:
                values.append(np.asarray(func(t), dtype=complex))
            except SingularTime:
                mask[k] = True
                values.append(None)
        shape = next(v.shape for v in values if v is not None)
        filled = np.array([np.zeros(shape) if v is None else v for v in values])
        return cls(t_max, filled, mask)

    @property
    def nodes(self):
        return self.values.shape[0]

    @property
    def dt(self):
        return self.t_max / (self.nodes - 1)

    @property
    def times(self):
        return np.linspace(0.0, self.t_max, self.nodes)

    def index_of(self, t):
        k = t / self.dt
        i = int(round(k))
        if abs(k - i) > 1e-9 * max(1.0, abs(k)) or not 0 <= i < self.nodes:
            raise GridMismatch(f"time {t!r} is not a node of the grid")
        return i

    def block(self, indices):
        idx = np.asarray(indices)
        return SuperopTrajectory(self.t_max, self.values[:, idx[:, None], idx], self.mask)

    def compatible(self, other):
        return self.nodes == other.nodes and np.isclose(self.t_max, other.t_max, rtol=1e-14)


@dataclass
class IterationReport:
    """Residual history ``max |X_{n+1} - X_n|`` of an iteration."""

    residuals: list = field(default_factory=list)
    converged: bool = False
    oscillating: bool = False
    oscillation_onset: Optional[int] = None

    @property
    def iters(self):
        return len(self.residuals)

    def to_json(self):
        return json.dumps({"iters": self.iters, "residuals": [float(r) for r in self.residuals],
                           "converged": self.converged, "oscillating": self.oscillating})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        if obj["iters"] != len(obj["residuals"]):
            raise ValueError("iteration count does not match residual list")
        return cls(list(obj["residuals"]), bool(obj["converged"]), bool(obj["oscillating"]))

    def update_oscillation(self, window=10, drop=0.95, bound=1e6):
        """Flag a residual that stays bounded but stops decreasing over ``window`` steps."""
        r = self.residuals
        if len(r) > window and not self.oscillating:
            if r[-1] < bound and r[-1] > drop * r[-1 - window]:
                self.oscillating = True
                self.oscillation_onset = len(r)


def residual(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def _step_factors(x):
    """Per-interval factors ``exp(i dt (X_{k-1} + X_k) / 2)``; index ``k`` covers ``[t_{k-1}, t_k]``.

    Masked nodes are bridged: the interval pair around a masked node becomes a
    single step of length ``2 dt`` placed on the later interval, the earlier
    one is the identity.
    """
    vals, mask, dt = x.values, x.mask, x.dt
    n = x.nodes
    if mask[0] or mask[-1]:
        raise GridMismatch("the first and last grid node may not be masked")
    if np.any(mask[1:] & mask[:-1]):
        raise GridMismatch("adjacent masked nodes are not supported")
    avg = 0.5 * (vals[:-1] + vals[1:])
    length = np.full(n - 1, dt)
    for k in np.flatnonzero(mask):
        avg[k - 1] = 0.0
        length[k - 1] = 0.0
        avg[k] = 0.5 * (vals[k - 1] + vals[k + 1])
        length[k] = 2 * dt
    factors = superop_exp(avg * length[:, None, None])
    eye = np.eye(vals.shape[1])
    return np.concatenate([eye[None], factors])


def anti_time_ordered_exp(x, s, t):
    """Anti-time-ordered exponential ``D(s, t)`` of ``i int_s^t X`` on the grid.

    Factors for later intervals stand to the right, so that
    ``D(s, t) = D(s, r) @ D(r, t)`` holds exactly for every node ``r``.
    """
    i, j = x.index_of(s), x.index_of(t)
    if i > j:
        raise GridMismatch("need s <= t")
    factors = _step_factors(x)
    out = np.eye(x.values.shape[1], dtype=complex)
    for k in range(i + 1, j + 1):
        out = out @ factors[k]
    return out


def _nonlocal_and_slope(kernel, times, delta):
    kn = np.asarray(kernel.nonlocal_part(times), dtype=complex)
    k1 = np.asarray(kernel.nonlocal_part(times + delta), dtype=complex)
    k2 = np.asarray(kernel.nonlocal_part(times + 2 * delta), dtype=complex)
    return kn, (-3 * kn + 4 * k1 - k2) / (2 * delta)


def khat_functional_all(kernel, x, end_correction=True):
    """``K_hat[X](t_j)`` for every node ``t_j`` of ``x``; returns an ndarray.

    The divisor ``D(t_j - m dt, t_j)`` is extended one factor at a time in the
    lag ``m`` for all ``j`` at once, so a full scan costs ``O(nodes**2)``
    small matrix products. The ``s``-integral is the trapezoid rule with the
    Euler-Maclaurin end corrections ``-dt**2/12 [f'(t) - f'(0)]``, where
    ``f'(s) = [-K_n'(t - s) - i K_n(t - s) X(s)] D(s, t)``; this makes the
    quadrature fourth order wherever the divisor is exact.
    """
    n, dt = x.nodes, x.dt
    factors = _step_factors(x)
    times = np.arange(n) * dt
    kn, kn_slope = _nonlocal_and_slope(kernel, times, 1e-4 * min(dt, 1.0 / kernel.decay_rate))
    out = np.broadcast_to(np.asarray(kernel.local, dtype=complex), x.values.shape).copy()
    dim = x.values.shape[1]
    divisor = np.broadcast_to(np.eye(dim, dtype=complex), (n, dim, dim))
    corr = dt * dt / 12.0
    # lag m = 0: half weight at s = t
    out[1:] += 0.5 * dt * kn[0]
    if end_correction:
        upper = -kn_slope[0] - 1j * kn[0] @ x.values
        upper[x.mask] = 0.0
        out[1:] -= corr * upper[1:]
    lower_x = x.values[0]
    for m in range(1, n):
        divisor = factors[1:n - m + 1] @ divisor[1:]
        contrib = dt * (kn[m] @ divisor)
        contrib[0] *= 0.5
        if end_correction:
            # divisor[0] is D(0, t_m): the s = 0 end of the integral for t = t_m
            contrib[0] += corr * (-kn_slope[m] - 1j * kn[m] @ lower_x) @ divisor[0]
        out[m:] += contrib
    return out


def khat_functional(kernel, x, t=None):
    """The functional ``K_hat[X](t)`` (single node) or the whole trajectory (``t=None``)."""
    if t is None:
        return SuperopTrajectory(x.t_max, khat_functional_all(kernel, x))
    j = x.index_of(t)
    sub_values = x.values[:j + 1] if j > 0 else x.values[:2]
    sub = SuperopTrajectory(j * x.dt if j > 0 else x.dt, sub_values, x.mask[:len(sub_values)])
    return khat_functional_all(kernel, sub)[j]


def _khat_spectral(kernel, x):
    decomp = spectral_decompose(x)
    return decomp.apply(kernel.khat)


def _khat_quadrature(kernel, x, tol=1e-13):
    eig = np.linalg.eigvals(x)
    growth = max(0.0, float(np.max(-eig.imag)))
    margin = kernel.decay_rate - growth
    if margin <= 0.05 * kernel.decay_rate:
        raise DivergentQuadrature(
            f"exp(isX) grows at rate {growth:.3g}, kernel decays at {kernel.decay_rate:.3g}")
    s_max = np.log(1e14) / margin
    eigen_scale = max(float(np.max(np.abs(eig))), kernel.decay_rate)
    pieces = max(8, int(np.ceil(s_max * eigen_scale / np.pi)))

    def integrand(s):
        return kernel.nonlocal_part(s) @ superop_exp(x, s)

    value, _ = scipy.integrate.quad_vec(integrand, 0.0, s_max, epsabs=tol, epsrel=tol,
                                        points=np.linspace(0, s_max, pieces + 1)[1:-1])
    return np.asarray(kernel.local, dtype=complex) + value


def khat_of_superop(kernel, x, route="spectral"):
    """Stationary transform ``K_hat(X) = int_0^oo ds K(s) exp(isX)``.

    Parameters
    ----------
    route : {"spectral", "quadrature"}
        ``"spectral"`` evaluates the analytic ``khat`` on the eigenvalues of
        ``X``: ``sum_i K_hat(x_i) |x_i>> <<x_i|``. ``"quadrature"`` integrates
        ``K_n(s) exp(isX)`` directly and needs the integrand to decay.
    """
    x = np.asarray(x, dtype=complex)
    if route == "spectral" and kernel.khat is not None:
        return _khat_spectral(kernel, x)
    if route in ("spectral", "quadrature"):
        return _khat_quadrature(kernel, x)
    raise ValueError(f"unknown route {route!r}")


class _Anderson:
    """Type-II Anderson mixing on flattened complex iterates."""

    def __init__(self, depth=5):
        self.depth = depth
        self.xs, self.fs = [], []

    def step(self, x, fx):
        g = fx - x
        self.xs.append(x)
        self.fs.append(g)
        self.xs, self.fs = self.xs[-self.depth - 1:], self.fs[-self.depth - 1:]
        if len(self.fs) < 2:
            return fx
        dg = np.array([b - a for a, b in zip(self.fs[:-1], self.fs[1:])]).T
        dx = np.array([b - a for a, b in zip(self.xs[:-1], self.xs[1:])]).T
        coef, *_ = np.linalg.lstsq(dg, g, rcond=None)
        return x + g - (dx + dg) @ coef


def stationary_iterate(kernel, x0, tol=1e-10, max_iter=500, accelerate=None,
                       route="spectral", window=10):
    """Iterate ``X_{n+1} = K_hat(X_n)`` towards the stationary generator.

    Parameters
    ----------
    kernel : KernelSplit
    x0 : array_like
        Start; ``K_hat(0)`` reproduces the scheme ``K_hat(...K_hat(K_hat(0)))``.
    tol : float
        Stop once ``max |X_{n+1} - X_n| < tol``.
    accelerate : {None, "anderson"}
        Plain fixed-point iteration by default. ``"anderson"`` switches to
        Anderson mixing (depth 5) once the residual contracts at a steady
        rate; this cuts iteration counts by an order of magnitude when the
        plain map contracts slowly. Because the mixing only starts inside the
        linear regime it normally lands on the same fixed point as the plain
        iteration, though this is not guaranteed when several attracting
        fixed points lie close together.
    window : int
        Window of the oscillation detector.

    Returns
    -------
    result : ndarray
    report : IterationReport

    Raises
    ------
    MaxIterExceeded
        Carries ``result`` (last iterate) and ``report`` (with the oscillation
        flag) for inspection.
    """
    x = np.asarray(x0, dtype=complex)
    if not np.all(np.isfinite(x)):
        raise ValueError("start superoperator must be finite")
    shape = x.shape
    report = IterationReport()
    if accelerate not in (None, "anderson"):
        raise ValueError(f"unknown acceleration {accelerate!r}")
    mixer = _Anderson() if accelerate == "anderson" else None
    mixing = False
    for _ in range(max_iter):
        fx = khat_of_superop(kernel, x, route=route)
        r = report.residuals
        r.append(residual(fx, x))
        if r[-1] < tol:
            report.converged = True
            return fx, report
        report.update_oscillation(window)
        if mixer is not None and not mixing and len(r) >= 3:
            # engage only once the residual contracts at a steady rate, i.e. the
            # iterate sits in the linear regime of one fixed point
            q1, q2 = r[-1] / r[-2], r[-2] / r[-3]
            mixing = q1 < 1 and abs(q1 - q2) < 0.3 * q1
        if mixing:
            x = mixer.step(x.reshape(-1), fx.reshape(-1)).reshape(shape)
        else:
            x = fx
    raise MaxIterExceeded(
        f"no convergence to {tol:g} within {max_iter} iterations"
        + (" (residual oscillates)" if report.oscillating else ""),
        result=x, report=report)


def _is_invariant_block(kernel, g0, idx, tol=1e-12):
    rest = np.setdiff1d(np.arange(kernel.size), idx)
    probes = [np.asarray(kernel.local), np.asarray(kernel.nonlocal_part(np.array([0.0, 1.0 / kernel.decay_rate])))]
    probes.append(g0.values)
    return all(np.max(np.abs(np.asarray(m)[..., rest[:, None], idx]), initial=0) < tol
               and np.max(np.abs(np.asarray(m)[..., idx[:, None], rest]), initial=0) < tol
               for m in probes)


def transient_iterate(kernel, g0, n_iters, block=None):
    """Iterate ``G^{(n+1)}(t) = K_hat[G^{(n)}](t)`` on the grid of ``g0``.

    Every iterate inherits the mask of ``g0`` so that singular nodes stay
    excluded from the step products.

    Parameters
    ----------
    kernel : KernelSplit
    g0 : SuperopTrajectory
    n_iters : int
    block : sequence of int, optional
        Indices of a block left invariant by ``K_l``, ``K_n`` and ``g0``. Only
        that block is iterated; the rest of every iterate keeps the values of
        ``g0``. Useful when one block converges and another does not.

    Returns
    -------
    iterates : list of SuperopTrajectory
        ``G^{(1)} .. G^{(n_iters)}``.
    report : IterationReport
        ``residuals[n]`` is ``max |G^{(n+1)} - G^{(n)}|`` over unmasked nodes.
    """
    if block is not None:
        idx = np.asarray(block)
        if not _is_invariant_block(kernel, g0, idx):
            raise ValueError(f"indices {list(idx)} do not span an invariant block")
        sub_iterates, report = transient_iterate(kernel.block(idx), g0.block(idx), n_iters)
        iterates = []
        for sub in sub_iterates:
            values = g0.values.copy()
            values[:, idx[:, None], idx] = sub.values
            iterates.append(SuperopTrajectory(g0.t_max, values, g0.mask))
        return iterates, report
    current, iterates = g0, []
    report = IterationReport()
    keep = ~g0.mask
    for _ in range(n_iters):
        values = khat_functional_all(kernel, current)
        nxt = SuperopTrajectory(g0.t_max, values, g0.mask)
        diff = np.abs(nxt.values[keep] - current.values[keep])
        report.residuals.append(float(np.max(diff)) if np.all(np.isfinite(diff)) else float("inf"))
        report.update_oscillation()
        iterates.append(nxt)
        current = nxt
    report.converged = bool(report.residuals and report.residuals[-1] < 1e-7)
    return iterates, report


def bromwich_nonlocal(kernel, t, shift=None, cutoff=4e3, step=None):
    """``K_n(t)`` by numerical inversion of ``K_hat(E) - K_l`` along ``Im E = shift``.

    Validation route for kernels given only in the frequency domain. The
    leading ``1/E`` tail is removed analytically before the trapezoid sum, so
    the truncation error falls off like ``1/cutoff``.
    """
    if kernel.khat is None:
        raise ValueError("kernel has no analytic Laplace transform")
    c = kernel.decay_rate if shift is None else shift
    t = np.atleast_1d(np.asarray(t, dtype=float))
    step = step if step is not None else min(0.05, np.pi / (4 * max(t.max(), 1e-3)))
    xs = np.arange(-cutoff, cutoff + step / 2, step)
    es = xs + 1j * c
    big = 1j * cutoff * 10
    # K_hat - K_l ~ i A / (E + i a): A from the far tail, a = decay_rate
    a = kernel.decay_rate
    amp = -1j * big * (kernel.khat(big) - kernel.local)
    tail = 1j * amp / (es[:, None, None] + 1j * a)
    resid = np.asarray(kernel.khat(es)) - kernel.local - tail
    phase = np.exp(-1j * np.outer(t, es))
    body = np.einsum("tk,kij->tij", phase, resid) * step / (2 * np.pi)
    return body + amp * np.exp(-a * t)[:, None, None]
