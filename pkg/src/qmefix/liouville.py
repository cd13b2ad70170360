"""Superoperator algebra on Liouville space.

Operators on a d-dimensional Hilbert space are vectorized in the fixed
row-major basis ``|nu nu'>> = |nu><nu'|``, i.e. the entry ``A[nu, nu']`` lands
at position ``nu * d + nu'``. Superoperators are plain ``(d**2, d**2)``
complex ndarrays in that basis; covectors (``<<O| = Tr(O^dagger .)``) are
1-D arrays holding the functional's coefficients, so ``<<O|rho>>`` is
``covector @ vector``.
"""

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NonDiagonalizable, SingularBasis

BASIS_TAG = "rowmajor-nu-nuprime"
CONDITION_CAP = 1e8
# ||s X|| beyond this overflows double precision in e^{isX}
EXP_NORM_BUDGET = 700.0


def _dim_from_liouville(n):
    d = int(round(np.sqrt(n)))
    if d * d != n:
        raise ValueError(f"Liouville dimension {n} is not a perfect square")
    return d


def as_superop(matrix, dim=None):
    """Validate and return ``matrix`` as a complex superoperator array.

    Parameters
    ----------
    matrix : array_like, shape (d**2, d**2)
    dim : int, optional
        Expected Hilbert-space dimension ``d``.

    Raises
    ------
    ValueError
        If the matrix is not square with a perfect-square size, does not match
        ``dim``, or contains NaN/Inf entries.
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"superoperator must be square, got shape {m.shape}")
    d = _dim_from_liouville(m.shape[0])
    if dim is not None and d != dim:
        raise ValueError(f"expected Hilbert dimension {dim}, got {d}")
    if not np.all(np.isfinite(m)):
        raise ValueError("superoperator has non-finite entries")
    return m


def superop_dim(matrix):
    """Hilbert-space dimension ``d`` of a ``(d**2, d**2)`` superoperator."""
    return _dim_from_liouville(np.shape(matrix)[-1])


def vectorize(op):
    """Row-major vectorization ``|A>>`` of a ``d x d`` operator."""
    a = np.asarray(op, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"operator must be square, got shape {a.shape}")
    return a.reshape(-1).copy()


def devectorize(vec, dim=None):
    """Inverse of :func:`vectorize`."""
    v = np.asarray(vec, dtype=complex)
    if v.ndim != 1:
        raise ValueError("expected a 1-D Liouville vector")
    d = _dim_from_liouville(v.size)
    if dim is not None and d != dim:
        raise ValueError(f"expected Hilbert dimension {dim}, got {d}")
    return v.reshape(d, d).copy()


def covector(op):
    """Coefficients of the functional ``<<O| = Tr(O^dagger .)``."""
    return np.conj(vectorize(op))


def trace_covector(dim):
    """The trace functional ``<<1|``: ones on the diagonal basis elements."""
    return vectorize(np.eye(dim))


def sandwich(a, b):
    """Superoperator of the map ``rho -> a @ rho @ b``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return np.kron(a, b.T)


def commutator(h):
    """Superoperator of ``rho -> [h, rho]``."""
    h = np.asarray(h, dtype=complex)
    eye = np.eye(h.shape[0])
    return sandwich(h, eye) - sandwich(eye, h)


def ketbra(ket, bra):
    """Outer product ``|ket>> <<bra|`` of a Liouville vector and a covector."""
    return np.outer(np.asarray(ket, dtype=complex), np.asarray(bra, dtype=complex))


def _swap_permutation(dim):
    idx = np.arange(dim * dim)
    return (idx % dim) * dim + idx // dim


def adjoint_conjugate(x):
    """Return ``Y`` with ``-iY = H (-iX) H`` where ``H A = A^dagger``.

    ``X`` is hermicity preserving in the sense used throughout (``-iX``
    commutes with taking adjoints) exactly when ``adjoint_conjugate(X) == X``.
    """
    m = -1j * np.asarray(x, dtype=complex)
    perm = _swap_permutation(superop_dim(m))
    conj = np.conj(m)[np.ix_(perm, perm)]
    return 1j * conj


def hermicity_project(x):
    """Closest (in Frobenius norm) superoperator passing the hermicity check."""
    x = np.asarray(x, dtype=complex)
    return 0.5 * (x + adjoint_conjugate(x))


def check_trace_preserving(x, tol=1e-10):
    """True iff ``<<1| X = 0`` entrywise within ``tol``."""
    x = np.asarray(x, dtype=complex)
    row = trace_covector(superop_dim(x)) @ x
    return bool(np.max(np.abs(row), initial=0.0) <= tol)


def check_hermicity_preserving(x, tol=1e-10):
    """True iff ``(-iX) A^dagger = [(-iX) A]^dagger`` for every basis operator ``A``."""
    x = np.asarray(x, dtype=complex)
    return bool(np.max(np.abs(x - adjoint_conjugate(x)), initial=0.0) <= tol)


@dataclass(frozen=True)
class SpectralDecomp:
    """Biorthonormal eigen-decomposition ``S = sum_i g_i |g_i>> <<g_i|``.

    ``right[:, i]`` is the right eigenvector and ``left[i, :]`` the dual
    covector, so ``left @ right`` is the identity.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    condition: float

    def __len__(self):
        return self.eigenvalues.size

    def projector(self, i):
        return np.outer(self.right[:, i], self.left[i, :])

    def apply(self, func):
        """``sum_i func(g_i) |g_i>> <<g_i|``; ``func`` may return scalars or matrices."""
        out = 0
        for i, g in enumerate(self.eigenvalues):
            value = func(g)
            proj = self.projector(i)
            out = out + (value @ proj if np.ndim(value) == 2 else value * proj)
        return out

    def reconstruct(self):
        return (self.right * self.eigenvalues) @ self.left

    def biorthogonality_error(self):
        n = self.eigenvalues.size
        return float(np.max(np.abs(self.left @ self.right - np.eye(n))))


def _eigen_order(values, scale):
    # imaginary part descending, ties by real part ascending
    q = 1e-9 * max(scale, 1e-300)
    im = np.round(values.imag / q) * q
    re = np.round(values.real / q) * q
    return np.lexsort((re, -im))


def _normalize_columns(vecs):
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    # fix the phase: largest-magnitude component real and positive
    pivot = np.argmax(np.abs(vecs) > 0.5 * np.max(np.abs(vecs), axis=0), axis=0)
    phase = vecs[pivot, np.arange(vecs.shape[1])]
    return vecs * (np.abs(phase) / phase)


def biorthonormalize(rights, cond_cap=CONDITION_CAP):
    """Dual covectors of a basis of right vectors.

    Parameters
    ----------
    rights : array_like, shape (n, n)
        Basis vectors as *columns*.

    Returns
    -------
    ndarray, shape (n, n)
        Rows are the covectors ``<<l_i|`` with ``<<l_i|r_j>> = delta_ij``.

    Raises
    ------
    SingularBasis
        If the vectors are linearly dependent beyond ``cond_cap``.
    """
    r = np.asarray(rights, dtype=complex)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("need a square matrix of column vectors")
    norms = np.linalg.norm(r, axis=0)
    if np.any(norms == 0):
        raise SingularBasis("zero vector among the basis")
    cond = np.linalg.cond(r / norms)
    if not np.isfinite(cond) or cond > cond_cap:
        raise SingularBasis(f"basis condition number {cond:.3g} exceeds cap {cond_cap:.3g}")
    return np.linalg.inv(r)


def spectral_decompose(s, tol=1e-10, cond_cap=CONDITION_CAP):
    """Biorthonormal eigen-decomposition of a (non-Hermitian) superoperator.

    Left eigenvectors come from inverting the right-eigenvector matrix, which
    makes ``<<g_i|g_j>> = delta_ij`` hold by construction.

    Raises
    ------
    NonDiagonalizable
        If the eigenvector matrix is (numerically) singular or the
        reconstruction misses ``s`` by more than ``tol`` relative to its scale.
    """
    s = as_superop(s)
    try:
        values, vecs = np.linalg.eig(s)
    except np.linalg.LinAlgError as exc:
        raise NonDiagonalizable(f"eigenvalue solver failed: {exc}") from None
    scale = max(np.max(np.abs(s)), 1.0)
    order = _eigen_order(values, scale)
    values = values[order]
    vecs = _normalize_columns(vecs[:, order])
    cond = float(np.linalg.cond(vecs))
    if not np.isfinite(cond) or cond > cond_cap:
        raise NonDiagonalizable(
            f"eigenvector condition number {cond:.3g} exceeds cap {cond_cap:.3g}")
    left = np.linalg.inv(vecs)
    decomp = SpectralDecomp(values, vecs, left, cond)
    err = np.max(np.abs(decomp.reconstruct() - s))
    if err > tol * scale * max(cond, 1.0):
        raise NonDiagonalizable(f"reconstruction error {err:.3g}")
    return decomp


def superop_exp(x, s=1.0):
    """``exp(i s X)`` by scaling and squaring (Pade, via scipy).

    ``x`` may carry leading batch dimensions.
    """
    x = np.asarray(x, dtype=complex)
    arg = 1j * s * x
    norm = np.max(np.sum(np.abs(arg), axis=-1))
    if not np.isfinite(norm) or norm > EXP_NORM_BUDGET:
        raise OverflowError(f"|| i s X ||_inf = {norm:.3g} exceeds exponential budget")
    return scipy.linalg.expm(arg)


def to_json(x):
    """Serialize a superoperator; floats round-trip bit-exactly."""
    m = as_superop(x)
    data = [[float(z.real), float(z.imag)] for z in m.reshape(-1)]
    return json.dumps({"dim": superop_dim(m), "basis": BASIS_TAG, "data": data})


def from_json(text):
    obj = json.loads(text)
    if obj.get("basis") != BASIS_TAG:
        raise ValueError(f"unsupported basis {obj.get('basis')!r}")
    d = int(obj["dim"])
    pairs = np.asarray(obj["data"], dtype=float)
    if pairs.shape != (d ** 4, 2):
        raise ValueError(f"expected {d ** 4} [re, im] pairs, got shape {pairs.shape}")
    return as_superop((pairs[:, 0] + 1j * pairs[:, 1]).reshape(d * d, d * d), dim=d)
