"""Memory expansion of the time-local generator.

Expanding past-time generators under the memory integral around the current
time produces the series

    d^k Pi / dt^k = F^k Pi,
    F^k = sum_n sum_p F^n_p [-i d^{p_1} G] ... [-i d^{p_n} G],

with ``n + sum(p) = k``. This module holds the integer coefficients
``F^n_p`` (recursively and in closed form), the superoperators ``F^k``, the
truncated stationary gradient series and the first two orders of the
perturbative expansion of ``G``.
"""

import csv
import itertools
from functools import lru_cache
from math import comb, factorial, prod

import numpy as np
import scipy.integrate

from .errors import ConventionMismatch, DerivativeOrderTooHigh, NoConvergence
from .fixedpoint import SuperopTrajectory

FK_CAP = 5
GRADIENT_CAP = 4


def _check_index(n, p):
    p = tuple(int(v) for v in p)
    if n < 1 or len(p) != n:
        raise ValueError(f"need n >= 1 and a multi-index of length n, got n={n}, p={p}")
    if any(v < 0 for v in p):
        raise ValueError("multi-index entries must be non-negative")
    return p


@lru_cache(maxsize=None)
def _fcoeff(n, p):
    if n == 0:
        return 1 if not p else 0
    if any(v < 0 for v in p):
        return 0
    if n == 1 and p == (0,):
        return 1
    total = 0
    for j in range(n):
        if p[j] > 0:
            total += _fcoeff(n, p[:j] + (p[j] - 1,) + p[j + 1:])
    if p[-1] == 0:
        # a trailing index -1 stands for dropping the last factor
        total += _fcoeff(n - 1, p[:-1])
    return total


def fcoeff_recursive(n, p):
    """``F^n_p`` from the recursion, with ``F^1_0 = 1``; exact integer."""
    return _fcoeff(n, _check_index(n, p))


def _partial_sums(p):
    # S_i = sum_{j=0}^{i} (p_{n-j} + 1), read from the right end of p
    return list(itertools.accumulate(v + 1 for v in reversed(p)))


def _fcoeff_factorial(p):
    n = len(p)
    denom = prod(factorial(v) for v in p) * prod(_partial_sums(p))
    num = factorial(n + sum(p))
    if num % denom:
        raise ConventionMismatch(f"closed form is not an integer at p={p}")
    return num // denom


def fcoeff_binomial(n, p):
    """``F^n_p`` as a product of binomials, ``prod_i C(p_{n-i} + S_{i-1}, p_{n-i})``.

    Here ``S_{-1} = 0`` and ``S_i`` sums ``p_{n-j} + 1`` over ``j = 0 .. i``;
    the product makes integrality manifest.
    """
    p = _check_index(n, p)
    sums = [0] + _partial_sums(p)
    return prod(comb(v + s, v) for v, s in zip(reversed(p), sums))


def _all_indices(n_max, k_max):
    for n in range(1, n_max + 1):
        for rest in range(0, k_max - n + 1):
            yield from ((n, p) for p in _compositions(rest, n))


def _compositions(total, parts):
    """All tuples of ``parts`` non-negative integers summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for tail in _compositions(total - first, parts - 1):
            yield (first,) + tail


_SELF_TESTED = False


def _self_test(n_max=5, k_max=8):
    global _SELF_TESTED
    for n, p in _all_indices(n_max, k_max):
        if _fcoeff_factorial(p) != _fcoeff(n, p):
            raise ConventionMismatch(f"closed form disagrees with the recursion at n={n}, p={p}")
    _SELF_TESTED = True


def fcoeff_explicit(n, p):
    """``F^n_p = (n + sum p)! / (prod_i p_i! prod_{i=0}^{n-1} S_i)``.

    ``S_i = sum_{j=0}^{i} (p_{n-j} + 1)``. The closed form is checked against
    the recursion for ``n <= 5, k <= 8`` on first use.

    Raises
    ------
    ConventionMismatch
        If that self-test fails.
    """
    p = _check_index(n, p)
    if not _SELF_TESTED:
        _self_test()
    return _fcoeff_factorial(p)


def fcoeff_table(k_max, n_max=None):
    """``{(n, p): F^n_p}`` for every index with ``n + sum(p) <= k_max``."""
    n_max = k_max if n_max is None else n_max
    return {(n, p): fcoeff_recursive(n, p) for n, p in _all_indices(n_max, k_max)}


def write_fcoeff_csv(table, stream, header_lines=()):
    """Coefficient table as CSV with columns ``n``, ``p`` (dash-joined), ``value``."""
    for line in header_lines:
        stream.write(f"# {line}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["n", "p", "value"])
    for (n, p), value in sorted(table.items(), key=lambda kv: (kv[0][0] + sum(kv[0][1]),) + kv[0]):
        writer.writerow([n, "-".join(str(v) for v in p), value])


def fornberg_weights(order, offsets, at=0.0):
    """Finite-difference weights for the ``order``-th derivative on ``offsets``."""
    x = np.asarray(offsets, dtype=float)
    m = len(x)
    c = np.zeros((m, order + 1))
    c[0, 0] = 1.0
    c1, c4 = 1.0, x[0] - at
    for i in range(1, m):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, x[i] - at
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for q in range(mn, 0, -1):
                    c[i, q] = c1 * (q * c[i - 1, q - 1] - c5 * c[i - 1, q]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for q in range(mn, -1, -1):
                c[j, q] = (c4 * c[j, q] - (q * c[j, q - 1] if q else 0.0)) / c3
        c1 = c2
    return c[:, order]


def _central_offsets(order, accuracy):
    half = (order + 1) // 2 + accuracy // 2 - 1
    return np.arange(-half, half + 1)


def _time_derivatives(G, t, count, step, accuracy):
    """``[G(t), G'(t), ..., G^{(count-1)}(t)]`` by central differences."""
    if isinstance(G, SuperopTrajectory):
        k = G.index_of(t)
        out = [G.values[k]]
        for order in range(1, count):
            offs = _central_offsets(order, accuracy)
            if k + offs[0] < 0 or k + offs[-1] >= G.nodes or np.any(G.mask[k + offs]):
                raise ValueError(f"stencil for derivative {order} leaves the usable grid at t={t}")
            w = fornberg_weights(order, offs) / G.dt ** order
            out.append(np.tensordot(w, G.values[k + offs], axes=1))
        return out
    out = [np.asarray(G(t), dtype=complex)]
    for order in range(1, count):
        offs = _central_offsets(order, accuracy)
        w = fornberg_weights(order, offs) / step ** order
        samples = np.array([G(t + o * step) for o in offs], dtype=complex)
        out.append(np.tensordot(w, samples, axes=1))
    return out


def fk_from_derivatives(k, derivs):
    """``F^k`` from ``derivs[p] = d^p G``; sums the coefficient expansion."""
    dim = derivs[0].shape[0]
    if k == 0:
        return np.eye(dim, dtype=complex)
    factors = [-1j * d for d in derivs]
    total = np.zeros((dim, dim), dtype=complex)
    for n in range(1, k + 1):
        for p in _compositions(k - n, n):
            term = factors[p[0]]
            for v in p[1:]:
                term = term @ factors[v]
            total += fcoeff_recursive(n, p) * term
    return total


def fk_superop(k, G, t, step=1e-2, accuracy=4, cap=FK_CAP):
    """``F^k(t)``, the generator of the ``k``-th time derivative of ``Pi``.

    Parameters
    ----------
    k : int
    G : callable or SuperopTrajectory
        Time-local generator; derivatives up to order ``k - 1`` are taken by
        central differences (``step`` for callables, the grid spacing for
        trajectories).
    t : float
    accuracy : int
        Even order of accuracy of the difference stencils.
    cap : int
        Largest admissible ``k``.

    Raises
    ------
    DerivativeOrderTooHigh
        If ``k > cap``.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if k > cap:
        raise DerivativeOrderTooHigh(f"F^{k} needs derivative order {k - 1}; cap is {cap}")
    derivs = _time_derivatives(G, t, max(k, 1), step, accuracy)
    return fk_from_derivatives(k, derivs)


def truncated_divisor(k_max, G, s, t, **kwargs):
    """``sum_{k <= k_max} (-1)^k (t - s)^k / k! F^k(t)``, the memory-expanded divisor."""
    if k_max > kwargs.get("cap", FK_CAP):
        raise DerivativeOrderTooHigh(f"order {k_max} exceeds the cap")
    derivs = _time_derivatives(G, t, max(k_max, 1), kwargs.get("step", 1e-2), kwargs.get("accuracy", 4))
    return sum((-(t - s)) ** k / factorial(k) * fk_from_derivatives(k, derivs) for k in range(k_max + 1))


def energy_derivatives(khat, count, scale=1.0, steps=(1e-3, 5e-4)):
    """``[K_hat(0), K_hat'(0), ...]`` by central differences with one Richardson step.

    The two step sizes are multiplied by ``scale`` (a typical rate of the
    model); the second-order stencils are combined to cancel the ``h**2``
    error term.
    """
    k0 = np.asarray(khat(0.0), dtype=complex)
    out = [k0]
    for order in range(1, count):
        offs = _central_offsets(order, 2)
        estimates = []
        for h in steps:
            h = h * scale
            w = fornberg_weights(order, offs) / h ** order
            samples = np.array([khat(o * h) for o in offs], dtype=complex)
            estimates.append(np.tensordot(w, samples, axes=1))
        ratio = (steps[0] / steps[1]) ** 2
        out.append((ratio * estimates[1] - estimates[0]) / (ratio - 1))
    return out


def gradient_expansion_stationary(khat, K_order, scale=1.0, tol=1e-12, max_iter=2000,
                                  inner_steps=None, cap=GRADIENT_CAP):
    """Truncated stationary series ``G = sum_{k <= K_order} K_hat^{(k)}(0) G^k / k!``.

    The truncated equation is solved by fixed-point iteration from
    ``K_hat(0)``.

    Parameters
    ----------
    khat : callable
        ``E -> K_hat(E)``, analytic around zero.
    K_order : int
    scale : float
        Rate used to scale the difference steps.
    inner_steps : int, optional
        Perform exactly this many iteration steps instead of iterating to ``tol``.
    cap : int
        Largest admissible ``K_order``; higher derivatives drown in rounding noise.

    Raises
    ------
    DerivativeOrderTooHigh
        If ``K_order > cap``.
    NoConvergence
        If the inner iteration does not settle within ``max_iter`` steps.
    """
    if K_order < 0:
        raise ValueError("K_order must be non-negative")
    if K_order > cap:
        raise DerivativeOrderTooHigh(f"K_order {K_order} exceeds the cap {cap}")
    derivs = energy_derivatives(khat, K_order + 1, scale)
    coeffs = [d / factorial(k) for k, d in enumerate(derivs)]

    def series(g):
        total, power = coeffs[0].copy(), np.eye(g.shape[0], dtype=complex)
        for c in coeffs[1:]:
            power = power @ g
            total += c @ power
        return total

    g = coeffs[0].copy()
    if K_order == 0:
        return g
    if inner_steps is not None:
        for _ in range(inner_steps):
            g = series(g)
        return g
    for _ in range(max_iter):
        nxt = series(g)
        if not np.all(np.isfinite(nxt)):
            break
        if np.max(np.abs(nxt - g)) < tol:
            return nxt
        g = nxt
    raise NoConvergence(f"truncated gradient series of order {K_order} did not converge")


def _cumulative(values, dt):
    """Running integral ``int_0^t`` on the grid (Simpson, trapezoid for two nodes)."""
    if values.shape[0] < 3:
        return scipy.integrate.cumulative_trapezoid(values, dx=dt, axis=0, initial=0)
    # cumulative_simpson is real-only
    real = scipy.integrate.cumulative_simpson(values.real, dx=dt, axis=0, initial=0)
    imag = scipy.integrate.cumulative_simpson(values.imag, dx=dt, axis=0, initial=0)
    return real + 1j * imag


def perturbative_G(kernels, t_max, nodes=2000):
    """First two orders of the perturbative generator.

    ``G^(1)(t) = int_0^t K^(1)(t, s) ds`` and
    ``G^(2)(t) = int_0^t K^(2)(t, s) ds + i int_0^t ds int_s^t dtau K^(1)(t, s) G^(1)(tau)``.

    Parameters
    ----------
    kernels : sequence of KernelSplit or None
        ``K^(1)``, ``K^(2)``; a missing or ``None`` entry is zero. The local
        part sits at ``s = t`` with unit weight, so it adds ``K_l`` to the
        single integral and nothing to the nested one.
    t_max : float
    nodes : int

    Returns
    -------
    list of SuperopTrajectory
        ``[G^(1), G^(2)]``.
    """
    kernels = list(kernels) + [None] * (2 - len(kernels))
    times = np.linspace(0.0, t_max, nodes)
    dt = times[1] - times[0]
    dim = next(k.size for k in kernels if k is not None)

    def single(kernel):
        if kernel is None:
            return np.zeros((nodes, dim, dim), dtype=complex)
        kn = np.asarray(kernel.nonlocal_part(times), dtype=complex)
        return np.asarray(kernel.local, dtype=complex) + _cumulative(kn, dt)

    g1 = single(kernels[0])
    g2 = single(kernels[1])
    if kernels[0] is not None:
        kn1 = np.asarray(kernels[0].nonlocal_part(times), dtype=complex)
        big_c = _cumulative(g1, dt)
        nested = np.zeros_like(g2)
        # int_0^t ds K_n(t - s) [C(t) - C(s)] by the trapezoid rule in the lag m;
        # the lag-zero term vanishes and the s = 0 end (j = m) gets half weight
        for m in range(1, nodes):
            contrib = dt * (kn1[m] @ (big_c[m:] - big_c[:nodes - m]))
            contrib[0] *= 0.5
            nested[m:] += contrib
        g2 = g2 + 1j * nested
    return [SuperopTrajectory(t_max, g1), SuperopTrajectory(t_max, g2)]
