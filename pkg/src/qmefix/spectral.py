"""Poles, sampling and Markovian approximations built from ``K_hat(E)``.

The eigenvalue poles of the resolvent ``Pi_hat(E) = i / (E - K_hat(E))``
solve ``E = k_j(E)`` for an eigenvalue branch ``k_j`` of the kernel. The
stationary generator picks exactly one such pole per eigenvalue together
with the right eigenvector of ``K_hat`` there; these helpers find the poles,
check that sampling relation and assemble the resulting approximations.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (BranchSwitch, HigherOrderPole, NoConvergence, PoleHit, QmeError,
                     SamplingViolation, SingularResolvent, TransformZero)
from .liouville import biorthonormalize, spectral_decompose, superop_exp

OVERLAP_MIN = 0.7


@dataclass(frozen=True)
class PoleRecord:
    """A solution of ``E = k_j(E)``.

    ``right`` is the unit right eigenvector of ``K_hat(energy)`` on the branch
    and ``left`` its dual within that eigenbasis (``left @ right == 1``).
    ``slope`` is ``d k_j / d E`` at the pole.
    """

    energy: complex
    branch: int
    right: np.ndarray
    left: np.ndarray
    slope: complex
    sampled: bool = False

    def with_sampled(self, flag):
        return PoleRecord(self.energy, self.branch, self.right, self.left, self.slope, flag)


def _overlap(u, v):
    return abs(np.vdot(u, v)) / (np.linalg.norm(u) * np.linalg.norm(v))


def _decompose(khat, E):
    return spectral_decompose(np.asarray(khat(E), dtype=complex))


def _track(khat, E, ref_vec):
    """Eigenvalue, right vector, dual and index of the branch continuing ``ref_vec``."""
    dec = _decompose(khat, E)
    overlaps = np.abs(ref_vec.conj() @ dec.right) / np.linalg.norm(ref_vec)
    i = int(np.argmax(overlaps))
    if overlaps[i] < OVERLAP_MIN:
        raise BranchSwitch(f"eigenvector overlap {overlaps[i]:.3f} at E = {E}")
    return dec.eigenvalues[i], dec.right[:, i], dec.left[i, :], i


def _track_value(khat, E, ref_vec):
    # eigenvalue only; cheaper than a validated decomposition
    values, vecs = np.linalg.eig(np.asarray(khat(E), dtype=complex))
    overlaps = np.abs(ref_vec.conj() @ vecs) / (np.linalg.norm(vecs, axis=0) * np.linalg.norm(ref_vec))
    i = int(np.argmax(overlaps))
    if overlaps[i] < OVERLAP_MIN:
        raise BranchSwitch(f"eigenvector overlap {overlaps[i]:.3f} at E = {E}")
    return values[i], vecs[:, i] / np.linalg.norm(vecs[:, i])


def branch_slope(khat, E, ref_vec, step):
    """Central-difference ``d k_j / d E`` on the branch through ``ref_vec``."""
    kp = _track_value(khat, E + step, ref_vec)[0]
    km = _track_value(khat, E - step, ref_vec)[0]
    return (kp - km) / (2 * step)


def _newton(khat, seed, branch, tol, step, max_iter):
    values, vecs = np.linalg.eig(np.asarray(khat(seed), dtype=complex))
    E = complex(seed)
    k, vec = values[branch], vecs[:, branch]
    f = k - E
    for _ in range(max_iter):
        slope = branch_slope(khat, E, vec, step)
        if abs(slope - 1) < 1e-14:
            raise NoConvergence("branch slope equals one")
        delta = -f / (slope - 1)
        if abs(delta) < 0.01 * tol * max(1.0, abs(E)):
            return E, vec
        lam = 1.0
        for _ in range(30):
            trial = E + lam * delta
            try:
                k_new, v_new = _track_value(khat, trial, vec)
            except (TransformZero, PoleHit):
                lam *= 0.5
                continue
            if abs(k_new - trial) < abs(f) or abs(f) < tol or lam < 1e-6:
                break
            lam *= 0.5
        else:
            raise NoConvergence("line search failed")
        E, vec, f = trial, v_new, k_new - trial
    raise NoConvergence(f"Newton did not converge from seed {seed}")


def seed_grid(re_range, im_range, density=21):
    """Uniform ``density x density`` grid of complex seeds over a box."""
    re = np.linspace(*re_range, density)
    im = np.linspace(*im_range, density)
    return (re[None, :] + 1j * im[:, None]).ravel()


def classify(poles, g_decomp, tol=1e-6):
    """Mark poles matching an eigenvalue of ``G(inf)`` with a parallel right eigenvector."""
    out = []
    for rec in poles:
        hit = False
        for i, g in enumerate(g_decomp.eigenvalues):
            if abs(rec.energy - g) < tol and _overlap(rec.right, g_decomp.right[:, i]) > 1 - tol:
                hit = True
        out.append(rec.with_sampled(hit))
    return out


def find_poles(khat, seeds, tol=1e-10, step=1e-6, max_iter=60, reference=None,
               sample_tol=1e-6, on_branch_switch="skip"):
    """Solve ``E = k_j(E)`` by damped Newton from every seed on every branch.

    Parameters
    ----------
    khat : callable
        ``E -> K_hat(E)``.
    seeds : iterable of complex
    tol : float
        Pole tolerance on ``|k_j(E) - E|``.
    step : float
        Finite-difference step for the branch slope.
    reference : SpectralDecomp, optional
        Eigen-decomposition of ``G(inf)``; poles matching it are flagged sampled.
    on_branch_switch : {"skip", "raise"}
        A seed whose continuation loses its eigenvector is dropped or raises
        :class:`BranchSwitch`.

    Returns
    -------
    list of PoleRecord
        Merged within ``10 tol`` and sorted by imaginary part (descending),
        then real part.
    """
    found = []
    for seed in seeds:
        try:
            n_branch = np.asarray(khat(seed)).shape[0]
        except QmeError:
            continue
        for j in range(n_branch):
            try:
                E, vec = _newton(khat, seed, j, tol, step, max_iter)
            except BranchSwitch:
                if on_branch_switch == "raise":
                    raise
                continue
            except (NoConvergence, TransformZero, PoleHit, QmeError, np.linalg.LinAlgError):
                continue
            if any(abs(E - rec[0]) < 10 * tol * max(1.0, abs(E)) for rec in found):
                continue
            found.append((E, vec))
    records = []
    for E, vec in found:
        k, right, left, idx = _track(khat, E, vec)
        if abs(k - E) > tol * max(1.0, abs(E)):
            continue
        slope = branch_slope(khat, E, right, step)
        records.append(PoleRecord(complex(E), idx, right, left, complex(slope)))
    records.sort(key=lambda r: (-round(r.energy.imag, 8), round(r.energy.real, 8)))
    if reference is not None:
        records = classify(records, reference, sample_tol)
    return records


@dataclass
class SamplingReport:
    """Outcome of :func:`verify_sampling`."""

    branches: list = field(default_factory=list)
    eigenvalue_errors: list = field(default_factory=list)
    overlaps: list = field(default_factory=list)
    left_mismatch: list = field(default_factory=list)
    reconstruction_error: float = 0.0
    duals: np.ndarray = None
    rights: np.ndarray = None


def verify_sampling(g_decomp, khat, tol=1e-8):
    """Check that ``G(inf)`` samples one eigen-pair of ``K_hat`` at each eigenvalue.

    For each eigenvalue ``g_i`` the kernel ``K_hat(g_i)`` must have an
    eigenvalue ``g_i`` whose right eigenvector is parallel to ``|g_i>>``.
    The collected right vectors are biorthonormalized and the result must
    rebuild ``G(inf)``. ``left_mismatch[i]`` records how far the kernel's own
    left eigenvector at ``g_i`` is from the dual obtained this way; it need not
    vanish.

    Raises
    ------
    SamplingViolation
        Naming the first failing index.
    """
    report = SamplingReport()
    scale = max(1.0, float(np.max(np.abs(g_decomp.eigenvalues))))
    rights, naive_lefts = [], []
    for i, g in enumerate(g_decomp.eigenvalues):
        dec = _decompose(khat, g)
        errs = np.abs(dec.eigenvalues - g)
        overl = np.array([_overlap(dec.right[:, j], g_decomp.right[:, i]) for j in range(len(dec))])
        candidates = np.flatnonzero(errs < tol * scale)
        if candidates.size == 0:
            raise SamplingViolation(f"K_hat(g_{i}) has no eigenvalue g_{i} = {g}", index=i)
        j = int(candidates[np.argmax(overl[candidates])])
        if overl[j] < 1 - tol:
            raise SamplingViolation(
                f"right eigenvector at g_{i} not parallel (overlap {overl[j]:.3g})", index=i)
        report.branches.append(j)
        report.eigenvalue_errors.append(float(errs[j]))
        report.overlaps.append(float(overl[j]))
        rights.append(dec.right[:, j])
        naive_lefts.append(dec.left[j, :])
    rights = np.array(rights).T
    duals = biorthonormalize(rights)
    rebuilt = (rights * g_decomp.eigenvalues) @ duals
    g_matrix = g_decomp.reconstruct()
    report.reconstruction_error = float(np.max(np.abs(rebuilt - g_matrix)))
    report.left_mismatch = [float(np.linalg.norm(naive_lefts[i] - duals[i])) for i in range(len(duals))]
    report.duals, report.rights = duals, rights
    if report.reconstruction_error > tol * scale:
        raise SamplingViolation(f"reconstruction misses G(inf) by {report.reconstruction_error:.3g}")
    return report


def slippage(poles, min_gap=1e-8):
    """Slippage superoperator ``S = sum_i |g_i>> <<k_i| / (1 - k_i'(g_i))``.

    Raises
    ------
    HigherOrderPole
        If ``|1 - slope| < min_gap`` for a pole.
    """
    total = 0
    for rec in poles:
        gap = 1 - rec.slope
        if abs(gap) < min_gap:
            raise HigherOrderPole(f"pole {rec.energy} has slope {rec.slope}")
        total = total + np.outer(rec.right, rec.left) / gap
    return np.asarray(total, dtype=complex)


def resolvent(khat, E, cond_cap=1e14):
    """``Pi_hat(E) = i (E - K_hat(E))^{-1}``.

    Raises
    ------
    SingularResolvent
        At (or numerically at) an eigenvalue pole.
    """
    k = np.asarray(khat(E), dtype=complex)
    m = E * np.eye(k.shape[0]) - k
    if not np.isfinite(np.linalg.cond(m)) or np.linalg.cond(m) > cond_cap:
        raise SingularResolvent(f"E = {E} is an eigenvalue pole")
    return 1j * np.linalg.inv(m)


def semigroup_evolution(x, t):
    """``exp(-i t X)`` for scalar or array ``t`` (array gives a stack)."""
    x = np.asarray(x, dtype=complex)
    t = np.asarray(t, dtype=float)
    return superop_exp(x[None] * t.reshape(-1, 1, 1), -1.0).reshape(t.shape + x.shape)


def kernel_derivative(khat, E=0.0, step=1e-6):
    """Central difference ``d K_hat / d E``."""
    return (np.asarray(khat(E + step)) - np.asarray(khat(E - step))) / (2 * step)


def adiabatic_generator(khat, step=1e-6):
    """First memory correction ``K_hat(0) + K_hat'(0) K_hat(0)``."""
    k0 = np.asarray(khat(0.0), dtype=complex)
    return k0 + kernel_derivative(khat, 0.0, step) @ k0


POLE_CSV_HEADER = ["re(E)", "im(E)", "branch", "sampled", "re(slope)", "im(slope)"]


def write_pole_csv(poles, stream, header_lines=()):
    """Write a pole table; ``header_lines`` are emitted first, prefixed with ``#``."""
    for line in header_lines:
        stream.write(f"# {line}\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(POLE_CSV_HEADER)
    for rec in poles:
        writer.writerow([repr(rec.energy.real), repr(rec.energy.imag), rec.branch,
                         int(rec.sampled), repr(rec.slope.real), repr(rec.slope.imag)])
