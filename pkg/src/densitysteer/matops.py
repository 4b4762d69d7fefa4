"""Dense matrix kernels used throughout the package.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The matrix
exponential is a self-contained scaling-and-squaring Pade implementation
(Higham 2005); everything else defers to LAPACK through numpy.
"""

import math

import numpy as np

from .config import DEFAULT_TOL, Tolerances


class NotPSDError(ValueError):
    """Raised when a matrix expected to be PSD has a clearly negative eigenvalue."""


# Pade coefficients b_0..b_m and the 1-norm thresholds theta_m below which the
# degree-m approximant reaches unit roundoff without scaling.
_PADE = {
    3: (1.495585217958292e-2, (120.0, 60.0, 12.0, 1.0)),
    5: (2.539398330063230e-1, (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0)),
    7: (9.504178996162932e-1,
        (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0)),
    9: (2.097847961257068,
        (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
         2162160.0, 110880.0, 3960.0, 90.0, 1.0)),
}
_THETA13 = 5.371920351148152
_B13 = (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0)


def as_matrix(M, name="matrix"):
    """Coerce to a finite 2-D float array."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def _as_square(M, name="matrix"):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def _pade_low(M, b, ident):
    # U = M * odd part, V = even part
    n_terms = len(b)
    powers = [ident, M @ M]
    while 2 * len(powers) < n_terms:
        powers.append(powers[-1] @ powers[1])
    U = sum(b[2 * k + 1] * powers[k] for k in range(n_terms // 2))
    V = sum(b[2 * k] * powers[k] for k in range(n_terms // 2))
    return M @ U, V


def _pade13(M, ident):
    b = _B13
    M2 = M @ M
    M4 = M2 @ M2
    M6 = M2 @ M4
    U = M @ (M6 @ (b[13] * M6 + b[11] * M4 + b[9] * M2)
             + b[7] * M6 + b[5] * M4 + b[3] * M2 + b[1] * ident)
    V = (M6 @ (b[12] * M6 + b[10] * M4 + b[8] * M2)
         + b[6] * M6 + b[4] * M4 + b[2] * M2 + b[0] * ident)
    return U, V


def expm(M):
    """Matrix exponential by scaling and squaring.

    Parameters
    ----------
    M : array_like, shape (n, n)

    Returns
    -------
    ndarray, shape (n, n)

    Raises
    ------
    ValueError
        Non-square or non-finite input.
    OverflowError
        The exponential is not representable in float64.
    """
    M = _as_square(M)
    n = M.shape[0]
    ident = np.eye(n)
    if n == 0:
        return ident
    norm1 = np.linalg.norm(M, 1)
    if norm1 == 0.0:
        return ident

    with np.errstate(over="ignore", invalid="ignore"):
        for m in (3, 5, 7, 9):
            theta, b = _PADE[m]
            if norm1 <= theta:
                U, V = _pade_low(M, b, ident)
                return np.linalg.solve(V - U, V + U)

        s = max(0, int(math.ceil(math.log2(norm1 / _THETA13))))
        Ms = M / 2.0 ** s
        U, V = _pade13(Ms, ident)
        R = np.linalg.solve(V - U, V + U)
        for _ in range(s):
            R = R @ R
    if not np.all(np.isfinite(R)):
        raise OverflowError(f"expm overflow (1-norm of input {norm1:.3g})")
    return R


def symmetrize(S):
    return 0.5 * (S + S.T)


def _check_symmetric(S, tol):
    scale = max(np.max(np.abs(S)), 1.0e-300)
    if np.max(np.abs(S - S.T)) > tol.symmetry * scale:
        raise ValueError("matrix is not symmetric")


def spd_sqrt(S, tol: Tolerances = DEFAULT_TOL, inverse=False):
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in ``[-psd_clip * lambda_max, 0)`` are clipped to zero; anything
    more negative raises :class:`NotPSDError`. With ``inverse=True`` the inverse
    square root is returned instead (requires a positive definite input).
    """
    S = _as_square(S, "SPD matrix")
    _check_symmetric(S, tol)
    w, Q = np.linalg.eigh(symmetrize(S))
    lam_max = max(w[-1], 0.0) if w.size else 0.0
    if w.size and w[0] < -tol.psd_clip * lam_max:
        raise NotPSDError(f"not PSD: min eigenvalue {w[0]:.3e}, max {lam_max:.3e}")
    w = np.clip(w, 0.0, None)
    if inverse:
        if w.size and w[0] <= tol.psd_clip * lam_max:
            raise np.linalg.LinAlgError("inverse square root of a singular matrix")
        r = 1.0 / np.sqrt(w)
    else:
        r = np.sqrt(w)
    return symmetrize((Q * r) @ Q.T)


def spd_inv(S):
    """Inverse of an SPD matrix, symmetrized."""
    S = _as_square(S, "SPD matrix")
    return symmetrize(np.linalg.solve(S, np.eye(S.shape[0])))


def min_eig(S):
    """Smallest eigenvalue of the symmetric part of ``S``."""
    S = _as_square(S)
    return float(np.linalg.eigvalsh(symmetrize(S))[0])


def norm_and_radius(M):
    """Return ``(operator 2-norm, spectral radius)`` of a square matrix."""
    M = _as_square(M)
    if M.shape[0] == 0:
        return 0.0, 0.0
    norm = float(np.linalg.norm(M, 2))
    radius = float(np.max(np.abs(np.linalg.eigvals(M))))
    return norm, radius


def min_singular_value(M):
    M = as_matrix(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[-1])
