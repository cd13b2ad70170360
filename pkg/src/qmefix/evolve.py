"""Forward solvers for the time-local and the time-nonlocal master equations.

    d rho / dt = -i G(t) rho(t)                                (time-local)
    d rho / dt = -i K_l rho(t) - i int_0^t K_n(t - s) rho(s) ds   (time-nonlocal)

Both act on row-major vectorized density operators.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularNode, SingularTime
from .fixedpoint import SuperopTrajectory, _nonlocal_and_slope
from .liouville import devectorize, superop_exp, vectorize

NEAR_STEPS = 30
GAUSS_STAGES = 4  # even, so no collocation node sits at the centre of a bridged pair


def _gauss_tableau(stages):
    """Gauss-Legendre collocation nodes ``c`` on [0, 1] and the basis integrals."""
    x, _ = np.polynomial.legendre.leggauss(stages)
    c = 0.5 * (x + 1)
    basis = []
    for j in range(stages):
        others = np.delete(c, j)
        poly = np.polynomial.Polynomial.fromroots(others) / np.prod(c[j] - others)
        basis.append(poly.integ())
    return c, basis


_GAUSS, _BASIS = _gauss_tableau(GAUSS_STAGES)
_GAUSS_A = np.array([[b(ci) for b in _BASIS] for ci in _GAUSS])


def _collocation_weights(theta):
    return np.array([b(theta) for b in _BASIS])


@dataclass
class StateTrajectory:
    """Density operators ``rho(t_k)`` on a uniform grid.

    Attributes
    ----------
    times : ndarray
    states : ndarray
        Shape ``(nodes, d, d)``.
    meta : dict
        Free-form description of the generator or kernel that produced it.
    """

    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def vectors(self):
        return self.states.reshape(len(self.times), -1)

    def element(self, i, j):
        return self.states[:, i, j]

    def occupation(self, level=1):
        return self.states[:, level, level].real

    def trace_error(self):
        return float(np.max(np.abs(np.trace(self.states, axis1=1, axis2=2) - 1)))

    def hermiticity_error(self):
        return float(np.max(np.abs(self.states - np.conj(np.swapaxes(self.states, 1, 2)))))


def _rk4_step(rho, h, g0, gm, g1):
    k1 = -1j * g0 @ rho
    k2 = -1j * gm @ (rho + 0.5 * h * k1)
    k3 = -1j * gm @ (rho + 0.5 * h * k2)
    k4 = -1j * g1 @ (rho + h * k3)
    return rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _gauss_step(rho, h, gens, thetas=(1.0,)):
    """Gauss collocation step for ``-i G``; returns the collocation polynomial at ``thetas``."""
    n, m = rho.shape[0], len(gens)
    a = [-1j * g for g in gens]
    # stage slopes k_i = A_i (rho + h sum_j a_ij k_j)
    system = np.eye(m * n, dtype=complex)
    for i in range(m):
        for j in range(m):
            system[i * n:(i + 1) * n, j * n:(j + 1) * n] -= h * _GAUSS_A[i, j] * a[i]
    rhs = np.concatenate([ai @ rho for ai in a])
    k = np.linalg.solve(system, rhs).reshape(m, n)
    return [rho + h * _collocation_weights(th) @ k for th in thetas]


def _midpoints(values):
    """Cubic interpolation of a sampled function at the interval midpoints."""
    n = values.shape[0]
    mid = np.empty((n - 1,) + values.shape[1:], dtype=complex)
    if n >= 4:
        mid[1:-1] = (9 * (values[1:-2] + values[2:-1]) - (values[:-3] + values[3:])) / 16
        mid[0] = (5 * values[0] + 15 * values[1] - 5 * values[2] + values[3]) / 16
        mid[-1] = (5 * values[-1] + 15 * values[-2] - 5 * values[-3] + values[-4]) / 16
    else:
        mid[:] = 0.5 * (values[:-1] + values[1:])
    return mid


def _as_vector(rho0):
    rho0 = np.asarray(rho0, dtype=complex)
    return vectorize(rho0) if rho0.ndim == 2 else rho0.copy()


def _sample(G, t):
    try:
        return np.asarray(G(t), dtype=complex), False
    except SingularTime:
        return None, True


def _regular_part_stages(vals, mask, poles, k0, span):
    """Generator at the collocation nodes of ``[t_k0, t_{k0 + span}]`` from grid samples.

    Near a singular time ``t_c`` (``poles`` holds ``t_c / dt``) the generator
    may have a simple pole, so the regular part ``(t - t_c) G(t)`` is
    interpolated through the four nearest unmasked nodes and divided by
    ``t - t_c`` again.
    """
    x = k0 + span * _GAUSS
    centre = poles[np.argmin(np.abs(poles - x.mean()))]
    usable = np.flatnonzero(~mask)
    support = np.sort(usable[np.argsort(np.abs(usable - x.mean()), kind="stable")[:4]])
    reg = (support - centre)[:, None, None] * vals[support]
    out = []
    for xi in x:
        w = [np.prod([(xi - o) / (a - o) for o in support if o != a]) for a in support]
        out.append(np.tensordot(w, reg, axes=1) / (xi - centre))
    return out


def solve_timelocal(G, rho0, t_max=None, nodes=None, singular_times=()):
    """Integrate ``d rho / dt = -i G(t) rho``, by classical Runge-Kutta away from singular times.

    Parameters
    ----------
    G : SuperopTrajectory or callable
        A trajectory fixes the grid; midpoint values are interpolated with
        cubic accuracy. A callable is sampled at nodes and midpoints of the grid
        given by ``t_max`` and ``nodes``.
    rho0 : array_like
        Initial density operator (matrix or row-major vector).
    singular_times : sequence of float
        Known singular times of ``G``. Intervals within ``NEAR_STEPS`` steps
        of one (or of a masked node) are stepped with Gauss-Legendre
        collocation, which never samples the interval ends and follows the
        ``1 / (t - t_n)`` growth of the generator far better than Runge-Kutta.
        A trajectory supplies the stage values by interpolating the regular
        part ``(t - t_n) G(t)`` of its samples.

    Notes
    -----
    A masked trajectory node, or a node where a callable raises
    :class:`SingularTime`, is bridged by one collocation step over the two
    adjacent intervals; the state at the masked node is the value of the
    collocation polynomial there.

    Raises
    ------
    SingularNode
        If an unmasked trajectory node carries a non-finite value.
    """
    rho = _as_vector(rho0)
    if isinstance(G, SuperopTrajectory):
        times, vals, mask = G.times, G.values, G.mask.copy()
        if not np.all(np.isfinite(vals[~mask])):
            raise SingularNode("unmasked singular node in the generator trajectory")
        mids = _midpoints(np.where(mask[:, None, None], 0.0, vals))

        def at(k):
            return vals[k]

        def mid(k):
            return mids[k]

        poles = np.concatenate([np.asarray(singular_times, dtype=float) / G.dt,
                                np.flatnonzero(mask)])

        def gauss(k0, k1):
            return _regular_part_stages(vals, mask, poles, k0, k1 - k0)
    else:
        if t_max is None or nodes is None:
            raise ValueError("t_max and nodes are required for a callable generator")
        times = np.linspace(0.0, t_max, nodes)
        cache = [_sample(G, t) for t in times]
        vals = [c[0] for c in cache]
        mask = np.array([c[1] for c in cache])

        def at(k):
            return vals[k]

        def mid(k):
            return np.asarray(G(0.5 * (times[k] + times[k + 1])), dtype=complex)

        def gauss(k0, k1):
            h = times[k1] - times[k0]
            return [np.asarray(G(times[k0] + c * h), dtype=complex) for c in _GAUSS]
    n = len(times)
    if mask[0] or mask[-1]:
        raise SingularNode("the first and last node may not be singular")
    if np.any(mask[1:] & mask[:-1]):
        raise SingularNode("adjacent singular nodes are not supported")
    h = times[1] - times[0]
    singular_times = np.concatenate([np.asarray(singular_times, dtype=float), times[mask]])
    out = np.empty((n, rho.size), dtype=complex)
    out[0] = rho
    k = 0
    while k < n - 1:
        if mask[k + 1]:
            half, full = _gauss_step(out[k], 2 * h, gauss(k, k + 2), thetas=(0.5, 1.0))
            out[k + 1], out[k + 2] = half, full
            k += 2
            continue
        near = np.any(np.abs(singular_times - 0.5 * (times[k] + times[k + 1])) < NEAR_STEPS * h)
        if near:
            out[k + 1] = _gauss_step(out[k], h, gauss(k, k + 1))[0]
        else:
            out[k + 1] = _rk4_step(out[k], h, at(k), mid(k), at(k + 1))
        k += 1
    dim = int(round(np.sqrt(rho.size)))
    return StateTrajectory(times, out.reshape(n, dim, dim), {"solver": "timelocal-rk4"})


def solve_timenonlocal(kernel, rho0, t_max, nodes):
    """Integrate the time-nonlocal equation with a Heun predictor-corrector.

    The local part ``K_l`` carries unit weight at ``s = t`` and is propagated
    exactly through ``exp(-i dt K_l)``. The memory integral uses the trapezoid
    rule with Euler-Maclaurin end corrections; one corrector pass per step.

    Parameters
    ----------
    kernel : KernelSplit
    rho0 : array_like
    t_max : float
    nodes : int
    """
    rho = _as_vector(rho0)
    times = np.linspace(0.0, t_max, nodes)
    h = times[1] - times[0]
    kn, kn_slope = _nonlocal_and_slope(kernel, times, 1e-4 * min(h, 1.0 / kernel.decay_rate))
    local = np.asarray(kernel.local, dtype=complex)
    step = superop_exp(local, -h)
    corr = h * h / 12.0
    states = np.empty((nodes, rho.size), dtype=complex)
    slopes = np.empty_like(states)
    states[0] = rho

    def memory(j, rho_j, slope_j):
        # int_0^{t_j} K_n(t_j - s) rho(s) ds with the value at s = t_j supplied
        if j == 0:
            return np.zeros_like(rho_j)
        body = h * np.einsum("mab,mb->a", kn[j:0:-1], states[:j])
        body -= 0.5 * h * kn[j] @ states[0]
        body += 0.5 * h * kn[0] @ rho_j
        upper = -kn_slope[0] @ rho_j + kn[0] @ slope_j
        lower = -kn_slope[j] @ states[0] + kn[j] @ slopes[0]
        return body - corr * (upper - lower)

    slopes[0] = -1j * local @ rho
    mem = np.zeros_like(rho)
    for j in range(nodes - 1):
        f_j = -1j * mem
        pred = step @ (states[j] + h * f_j)
        # the end correction only needs the slope to low order: reuse the last one
        mem_pred = memory(j + 1, pred, slopes[j])
        states[j + 1] = step @ (states[j] + 0.5 * h * f_j) - 0.5j * h * mem_pred
        slope = -1j * local @ states[j + 1] - 1j * mem_pred
        mem = memory(j + 1, states[j + 1], slope)
        slopes[j + 1] = -1j * local @ states[j + 1] - 1j * mem
    dim = int(round(np.sqrt(rho.size)))
    return StateTrajectory(times, states.reshape(nodes, dim, dim), {"solver": "timenonlocal-heun"})


def write_state_csv(traj, stream, header_lines=()):
    """CSV: ``t``, re/im of each density-matrix entry, occupation and coherence."""
    for line in header_lines:
        stream.write(f"# {line}\n")
    d = traj.states.shape[1]
    cols = ["t"]
    for i in range(d):
        for j in range(d):
            cols += [f"re(rho{i}{j})", f"im(rho{i}{j})"]
    cols += ["occupation", "re(coherence)"]
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(cols)
    for t, rho in zip(traj.times, traj.states):
        row = [repr(float(t))]
        for v in rho.ravel():
            row += [repr(float(v.real)), repr(float(v.imag))]
        row += [repr(float(rho[1, 1].real)), repr(float(rho[0, 1].real))]
        writer.writerow(row)


def states_from_vectors(vectors):
    """Stack of density matrices from row-major vectors."""
    return np.array([devectorize(v) for v in vectors])
