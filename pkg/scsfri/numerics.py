"""Dense numerical kernels shared by the estimator, channel model and bounds.

Everything here is a pure function of its inputs. Matrices are promoted to
double-precision complex on entry.
"""

from __future__ import annotations

import logging

import numpy as np
import numpy.typing as npt
from scipy import linalg, special

from scsfri.errors import DegenerateGeometryError, InputError, NotPsdError

logger = logging.getLogger(__name__)

ComplexMatrix = npt.NDArray[np.complex128]
RealVector = npt.NDArray[np.float64]

MAX_BESSEL_ORDER = 60
PSD_TOLERANCE = 1e-10
CHOLESKY_JITTER = 1e-12
CHOLESKY_RETRIES = 6


def as_complex_matrix(value: npt.ArrayLike, name: str = "matrix") -> ComplexMatrix:
    matrix = np.asarray(value, dtype=np.complex128)
    if matrix.ndim == 1:
        matrix = matrix[:, np.newaxis]
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise InputError(f"{name} must be a non-empty 2-D array")
    if not np.all(np.isfinite(matrix)):
        raise InputError(f"{name} has non-finite entries")
    return matrix


def truncated_svd(a: npt.ArrayLike, k: int) -> tuple[ComplexMatrix, RealVector, ComplexMatrix]:
    """Rank-k SVD ``a ≈ U @ diag(S) @ V.conj().T`` with descending singular values."""
    matrix = as_complex_matrix(a, "a")
    if k < 1 or k > min(matrix.shape):
        raise InputError(f"k must be in [1, {min(matrix.shape)}], got {k}")

    u, s, vh = np.linalg.svd(matrix, full_matrices=False)
    return u[:, :k], s[:k], vh[:k].conj().T


def low_rank_approximation(a: npt.ArrayLike, k: int) -> ComplexMatrix:
    u, s, v = truncated_svd(a, k)
    return (u * s) @ v.conj().T


def tls_solve(a: npt.ArrayLike, b: npt.ArrayLike) -> ComplexMatrix:
    """Total-least-squares solution of ``a @ psi ≈ b``.

    Uses the right singular vectors of the stacked matrix ``[a b]``:
    ``psi = -V12 @ inv(V22)``.
    """
    lhs = as_complex_matrix(a, "a")
    rhs = as_complex_matrix(b, "b")
    if lhs.shape[0] != rhs.shape[0]:
        raise InputError("a and b must have the same number of rows")
    n = lhs.shape[1]
    if lhs.shape[0] < n:
        raise InputError("a must have at least as many rows as columns")

    _, _, vh = np.linalg.svd(np.hstack([lhs, rhs]), full_matrices=True)
    v = vh.conj().T
    v12 = v[:n, n:]
    v22 = v[n:, n:]

    if np.linalg.cond(v22) > 1e12:
        raise DegenerateGeometryError("TLS problem has no solution: V22 is singular")
    return -v12 @ np.linalg.inv(v22)


def polynomial_roots(coeffs: npt.ArrayLike) -> npt.NDArray[np.complex128]:
    """Roots of a polynomial given in descending-degree order.

    Eigenvalues of the balanced companion matrix.
    """
    poly = np.atleast_1d(np.asarray(coeffs, dtype=np.complex128))
    if poly.ndim != 1 or not np.all(np.isfinite(poly)):
        raise InputError("coefficients must be a finite 1-D sequence")
    nonzero = np.flatnonzero(poly)
    if nonzero.size == 0:
        raise InputError("zero polynomial has no roots")

    poly = poly[nonzero[0]:]
    degree = poly.size - 1
    if degree < 1:
        raise InputError("polynomial degree must be >= 1")

    # Trailing zeros are roots at the origin.
    trailing = poly.size - 1 - np.flatnonzero(poly)[-1]
    core = poly[: poly.size - trailing]

    roots = np.zeros(trailing, dtype=np.complex128)
    if core.size > 1:
        companion = np.zeros((core.size - 1, core.size - 1), dtype=np.complex128)
        companion[0, :] = -core[1:] / core[0]
        companion[1:, :-1] = np.eye(core.size - 2, dtype=np.complex128)
        balanced, _ = linalg.matrix_balance(companion)
        roots = np.concatenate([np.linalg.eigvals(balanced), roots])
    return roots


def bessel_j(order: int | npt.ArrayLike, x: float | npt.ArrayLike) -> float | RealVector:
    """Bessel function of the first kind."""
    _check_bessel_args(order, x)
    return special.jv(order, x)


def bessel_i(order: int | npt.ArrayLike, x: float | npt.ArrayLike) -> float | RealVector:
    """Modified Bessel function of the first kind."""
    _check_bessel_args(order, x)
    return special.iv(order, x)


def bessel_i_ratio(order: int | npt.ArrayLike, x: float) -> float | RealVector:
    """I_l(x) / I_0(x) without overflow for large x."""
    _check_bessel_args(order, x)
    return special.ive(order, x) / special.ive(0, x)


def _check_bessel_args(order: int | npt.ArrayLike, x: float | npt.ArrayLike) -> None:
    orders = np.asarray(order)
    if np.any(orders < 0) or np.any(orders > MAX_BESSEL_ORDER):
        raise InputError(f"Bessel order must be in [0, {MAX_BESSEL_ORDER}]")
    if not np.all(np.isfinite(np.asarray(x, dtype=float))):
        raise InputError("Bessel argument must be finite")


def cholesky(r: npt.ArrayLike) -> ComplexMatrix:
    """Lower Cholesky factor of a Hermitian PSD matrix.

    Singular but PSD inputs get a diagonal jitter of ``1e-12 * trace / P``,
    grown tenfold per retry.
    """
    matrix = as_complex_matrix(r, "r")
    if matrix.shape[0] != matrix.shape[1]:
        raise InputError("r must be square")
    matrix = 0.5 * (matrix + matrix.conj().T)

    try:
        return linalg.cholesky(matrix, lower=True)
    except linalg.LinAlgError:
        pass

    trace = float(np.real(np.trace(matrix)))
    smallest = float(np.linalg.eigvalsh(matrix)[0])
    if smallest < -PSD_TOLERANCE * max(trace, np.finfo(float).tiny):
        raise NotPsdError(f"matrix is not PSD: smallest eigenvalue {smallest:.3e}")

    size = matrix.shape[0]
    jitter = CHOLESKY_JITTER * trace / size
    for attempt in range(CHOLESKY_RETRIES):
        logger.debug("cholesky retry %d with jitter %.3e", attempt, jitter)
        try:
            return linalg.cholesky(matrix + jitter * np.eye(size), lower=True)
        except linalg.LinAlgError:
            jitter *= 10.0
    raise NotPsdError("cholesky failed after jitter retries")
