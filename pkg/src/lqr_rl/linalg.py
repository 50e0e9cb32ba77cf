"""Small dense solvers used by the local model fit and the regulator."""
import numpy as np
import scipy.linalg

from .errors import SingularMatrixError, ValidationError

SVD_CUTOFF = 1e-10


def _finite(name, arr):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def solve_regularized_normal(inputs, outputs, ridge=0.0):
    """Ridge least squares via Cholesky on the normal equations.

    Solves ``(N_I^T N_I + ridge*I) X = N_I^T N_O`` and returns ``X`` with
    shape ``(inputs.shape[1], outputs.shape[1])``.
    """
    n_in = _finite("inputs", inputs)
    n_out = _finite("outputs", outputs)
    if n_in.ndim == 1:
        n_in = n_in[:, None]
    squeeze = n_out.ndim == 1
    if squeeze:
        n_out = n_out[:, None]
    if n_in.shape[0] != n_out.shape[0] or n_in.shape[0] < 1:
        raise ValidationError(
            f"row count mismatch: inputs {n_in.shape}, outputs {n_out.shape}")
    if not np.isfinite(ridge) or ridge < 0:
        raise ValidationError(f"ridge must be a finite nonnegative number, got {ridge}")

    gram = n_in.T @ n_in
    gram[np.diag_indices_from(gram)] += ridge
    rhs = n_in.T @ n_out
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(
            "normal equations are not positive definite; increase the ridge parameter") from exc
    x = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    return x[:, 0] if squeeze else x


def least_squares_min_norm(coeff, rhs, cutoff=SVD_CUTOFF):
    """Minimum-norm least-squares solution through a truncated SVD."""
    a = _finite("coeff", coeff)
    b = _finite("rhs", rhs)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError(f"coeff must be a non-empty matrix, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValidationError(f"rhs length {b.shape[0]} does not match {a.shape[0]} rows")
    u, sv, vt = np.linalg.svd(a, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        return np.zeros(a.shape[1])
    keep = sv > cutoff * sv[0]
    inv = np.zeros_like(sv)
    inv[keep] = 1.0 / sv[keep]
    return vt.T @ (inv * (u.T @ b))
