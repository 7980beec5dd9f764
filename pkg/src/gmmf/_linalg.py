from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from gmmf.core import SingularMatrixError

# pivot / diagonal ratio below which a column is treated as dependent
_RTOL = 1e-12


def spd_factor(
    A: np.ndarray,
    what: str,
    reference_diag: np.ndarray | None = None,
    labels: Sequence[str] | None = None,
):
    """Cholesky-factor a symmetric matrix that must be positive definite.

    ``reference_diag`` gives the scale against which a diagonal entry counts
    as zero (e.g. the uncentred second moments for a residual-based matrix);
    it lets a block of zero residuals be reported by name.
    """
    A = 0.5 * (A + A.T)
    k = A.shape[0]
    labels = list(labels) if labels is not None else [f"instrument {j + 1}" for j in range(k)]
    d = np.diag(A)
    if reference_diag is not None:
        bad = np.flatnonzero(d <= _RTOL * np.asarray(reference_diag))
        if bad.size:
            names = ", ".join(labels[j] for j in bad)
            raise SingularMatrixError(f"{what} is singular: zero-variance block at {names}")
    try:
        c = cho_factor(A, lower=True, check_finite=False)
    except LinAlgError:
        raise SingularMatrixError(f"{what} is not positive definite") from None
    piv = np.diag(c[0]) ** 2
    bad = np.flatnonzero(piv <= _RTOL * np.maximum(d, np.finfo(float).tiny))
    if bad.size:
        names = ", ".join(labels[j] for j in bad)
        raise SingularMatrixError(f"{what} is numerically singular at {names}")
    return c


def spd_solve(A, b, what, reference_diag=None, labels=None) -> np.ndarray:
    return cho_solve(spd_factor(A, what, reference_diag, labels), b, check_finite=False)


def cluster_sums(M: np.ndarray, cluster: np.ndarray) -> np.ndarray:
    """Column sums of ``M`` within each cluster code (0..G-1), in code order."""
    G = int(cluster.max()) + 1
    return np.column_stack(
        [np.bincount(cluster, weights=M[:, j], minlength=G) for j in range(M.shape[1])]
    )


def moment_covariance(
    Z: np.ndarray, e: np.ndarray, cluster: np.ndarray | None = None
) -> np.ndarray:
    """Sum of outer products of the moment contributions ``z_i e_i``.

    Without clusters this is ``sum_i e_i^2 z_i z_i'``; with clusters the
    contributions are first summed within each cluster.
    """
    if cluster is None:
        return (Z * (e * e)[:, None]).T @ Z
    g = cluster_sums(Z * e[:, None], cluster)
    return g.T @ g
