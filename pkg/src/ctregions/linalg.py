"""Dense linear-algebra kernel: matrix exponential, guarded solves, least squares."""

import warnings

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .errors import DimensionError, DomainError, SingularityError

RCOND_MIN = 1e-12

# Pade(13) numerator coefficients and the scaling threshold of Higham (2005).
_B13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def _as_square(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DomainError("matrix has non-finite entries")
    return M


def mat_exp(M, t=1.0):
    """Return ``expm(M * t)`` by scaling and squaring with a degree-13 Pade approximant.

    ``t`` may be a scalar or a 1-D array of times; in the latter case a stack of
    shape ``(len(t), m, m)`` is returned and every member is evaluated at once.
    """
    M = _as_square(M)
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)):
        raise DomainError("time must be finite")
    scalar = t_arr.ndim == 0
    ts = np.atleast_1d(t_arr)
    if ts.ndim != 1:
        raise DimensionError("time must be a scalar or a 1-D array")

    m = M.shape[0]
    X = ts[:, None, None] * M[None, :, :]
    norms = np.abs(X).sum(axis=1).max(axis=1)
    s = np.zeros(len(ts), dtype=int)
    big = norms > _THETA13
    s[big] = np.ceil(np.log2(norms[big] / _THETA13)).astype(int)
    X = X / (2.0 ** s)[:, None, None]

    b = _B13
    eye = np.broadcast_to(np.eye(m), X.shape)
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X4 @ X2
    U = X @ (X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2)
             + b[7] * X6 + b[5] * X4 + b[3] * X2 + b[1] * eye)
    V = (X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2)
         + b[6] * X6 + b[4] * X4 + b[2] * X2 + b[0] * eye)
    R = np.linalg.solve(V - U, V + U)

    for k in range(int(s.max(initial=0))):
        sel = s > k
        R[sel] = R[sel] @ R[sel]
    R[ts == 0.0] = np.eye(m)
    return R[0] if scalar else R


def rcond_estimate(M):
    """Reciprocal 1-norm condition estimate from an LU factorization (LAPACK gecon)."""
    M = _as_square(M)
    with warnings.catch_warnings():
        # exact singularity shows up as rcond = 0 below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    anorm = np.abs(M).sum(axis=0).max()
    if anorm == 0.0:
        return 0.0, lu, piv
    rc, info = lapack.dgecon(lu, anorm, norm="1")
    return float(rc), lu, piv


def solve(M, rhs):
    """Solve ``M X = rhs`` by pivoted LU, refusing numerically singular ``M``."""
    M = _as_square(M)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != M.shape[0]:
        raise DimensionError(f"rhs has {rhs.shape[0]} rows, matrix has {M.shape[0]}")
    rc, lu, piv = rcond_estimate(M)
    if not rc >= RCOND_MIN:
        raise SingularityError(f"matrix is numerically singular (rcond={rc:.3e})", rcond=rc)
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def least_squares(design, targets):
    """Least-squares fit through a thin QR factorization.

    Returns ``(coefficients, r_squared)``. When the targets are constant the
    total sum of squares vanishes; a zero residual then reports ``r_squared = 1``.
    """
    D = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float).ravel()
    if D.ndim != 2 or D.shape[0] != y.shape[0]:
        raise DimensionError("design rows must match the number of targets")
    if D.shape[0] < D.shape[1]:
        raise DimensionError("need at least as many rows as columns")
    Q, R = np.linalg.qr(D, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.size and diag.min() <= RCOND_MIN * max(diag.max(), 1.0) * max(D.shape):
        raise SingularityError("design matrix is rank deficient",
                               rcond=float(diag.min() / max(diag.max(), 1e-300)))
    coef = scipy.linalg.solve_triangular(R, Q.T @ y)
    resid = y - D @ coef
    ss_res = float(resid @ resid)
    dev = y - y.mean()
    ss_tot = float(dev @ dev)
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-24 * max(1.0, float(y @ y)) else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return coef, r2
