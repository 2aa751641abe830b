"""Dense matrix kernels used by the factorization code."""

import warnings

import numpy as np
import scipy.linalg as spla

from .errors import InvalidInputError, NumericError

SYM_RTOL = 1e-10
KRON_MAX_SIZE = 4096


def _check_finite(a, name="a"):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


def _symmetrize(a, name="a"):
    a = _check_finite(a, name)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {a.shape}")
    scale = max(1.0, np.linalg.norm(a))
    if np.linalg.norm(a - a.T) > SYM_RTOL * scale:
        raise InvalidInputError(f"{name} is not symmetric")
    return (a + a.T) / 2


def pos_neg_split(a):
    """Return ``(A+, A-)`` with ``A+ = (|A|+A)/2`` and ``A- = (|A|-A)/2``."""
    a = _check_finite(a)
    abs_a = np.abs(a)
    return (abs_a + a) / 2, (abs_a - a) / 2


def sym_eig(a):
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    a = _symmetrize(a)
    try:
        w, q = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericError("symmetric eigendecomposition did not converge",
                           shape=a.shape, norm=float(np.linalg.norm(a))) from exc
    return w, q


def solve_spd(a, b):
    """Solve ``A X = B`` for symmetric positive definite ``A`` (Cholesky)."""
    a = _symmetrize(a)
    b = _check_finite(b, "b")
    vec = b.ndim == 1
    if vec:
        b = b[:, None]
    if b.shape[0] != a.shape[0]:
        raise InvalidInputError(
            f"row mismatch: a is {a.shape}, b is {b.shape}")
    try:
        c = spla.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        w = np.linalg.eigvalsh(a)
        raise NumericError("matrix is not positive definite",
                           min_eigenvalue=float(w[0])) from exc
    x = spla.cho_solve(c, b, check_finite=False)
    return x[:, 0] if vec else x


def sylvester_kron_oracle(a, b, c):
    """Solve ``A X + X B = C`` through the explicit Kronecker system.

    Builds ``[I_K (x) A + B^T (x) I_d] vec(X) = vec(C)`` densely, so only
    meant as a reference for small problems (``d*K <= 4096``).
    """
    a = _check_finite(a, "a")
    b = _check_finite(b, "b")
    c = _check_finite(c, "c")
    d, k = c.shape
    if a.shape != (d, d) or b.shape != (k, k):
        raise InvalidInputError(
            f"shape mismatch: a {a.shape}, b {b.shape}, c {c.shape}")
    if d * k > KRON_MAX_SIZE:
        raise InvalidInputError(f"d*K = {d * k} exceeds {KRON_MAX_SIZE}")
    system = np.kron(np.eye(k), a) + np.kron(b.T, np.eye(d))
    rhs = c.reshape(-1, order="F")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spla.LinAlgWarning)
        lu = spla.lu_factor(system, check_finite=False)
    pivots = np.abs(np.diag(lu[0]))
    if pivots.min() <= np.finfo(float).eps * max(pivots.max(), 1.0) * d * k:
        raise NumericError("Kronecker system is singular",
                           min_pivot=float(pivots.min()))
    x = spla.lu_solve(lu, rhs, check_finite=False)
    return x.reshape((d, k), order="F")
