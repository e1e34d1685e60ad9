"""Dense complex linear algebra shared by the MPS and magic machinery.

Plain C-ordered numpy arrays serve as tensors throughout the package
(reshape never reorders data).  The helpers here add truncation
bookkeeping and a deterministic dominant-eigenvalue solver so that
repeated scans produce identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EigenPair",
    "EigenSolverError",
    "kron",
    "svd_truncate",
    "dominant_eigenpair",
    "hermitian_eigs",
]

# Dense eigendecomposition is affordable (and robust against degenerate
# dominant eigenvalues) below this dimension.
DENSE_FALLBACK_DIM = 512


class EigenSolverError(RuntimeError):
    """Eigen/SVD backend failure; carries the last residual if available."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalue together with a unit-norm eigenvector."""

    value: complex
    vector: np.ndarray


def kron(a, b):
    """Kronecker product of two matrices, standard block ordering."""
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("kron expects two matrices")
    return np.kron(a, b)


def svd_truncate(m, chi_max, tol=1e-12):
    """Truncated SVD: U, singular values, Vh and the discarded weight.

    At most `chi_max` singular values are kept and values below
    ``tol * s_max`` are dropped.  The discarded weight is the sum of the
    squared dropped singular values, i.e. the squared Frobenius error of
    the truncated reconstruction (Eckart-Young).
    """
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise ValueError("svd_truncate requires finite input")
    if chi_max < 1:
        raise ValueError("chi_max must be a positive integer")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - backend dependent
        raise EigenSolverError(f"SVD backend did not converge: {exc}") from exc
    keep = min(int(chi_max), s.size)
    if s.size and tol > 0:
        above = int(np.count_nonzero(s >= tol * s[0]))
        keep = min(keep, max(1, above))
    discarded = float(np.sum(s[keep:] ** 2))
    return u[:, :keep], s[:keep], vh[:keep], discarded


def _dense_dominant(matrix):
    """Largest-modulus eigenpair from a full dense decomposition.

    Among eigenvalues tied in modulus the one with the largest real part
    is returned, which selects the physical (positive) growth rate of the
    replica transfer matrices on the zero-magic lines.
    """
    vals, vecs = np.linalg.eig(matrix)
    mod = np.abs(vals)
    tied = np.where(mod >= mod.max() * (1.0 - 1e-9))[0]
    k = tied[np.argmax(vals[tied].real)]
    v = vecs[:, k]
    return EigenPair(complex(vals[k]), v / np.linalg.norm(v))


def dominant_eigenpair(op, dim=None, tol=1e-12, max_iter=5000):
    """Dominant (largest-modulus) eigenpair by power iteration.

    `op` may be a dense matrix or a callable implementing the matrix
    action.  The starting vector is the normalized all-ones vector for
    reproducible scans.  When the iteration stalls (degenerate dominant
    modulus, e.g. on the manifold boundary lines) a dense solve is used
    for matrices below ``DENSE_FALLBACK_DIM``.

    Convergence criterion: ``|op(v) - lam v| < tol * |lam|``.
    """
    matrix = None
    if callable(op):
        apply = op
        if dim is None:
            raise ValueError("dim is required when op is a callable")
    else:
        matrix = np.asarray(op)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("op must be square")
        dim = matrix.shape[0]
        apply = matrix.__matmul__

    v = np.full(dim, 1.0 / np.sqrt(dim), dtype=complex)
    residual = np.inf
    lam = 0.0j
    for it in range(int(max_iter)):
        w = apply(v)
        lam = np.vdot(v, w)  # Rayleigh quotient, v is unit norm
        residual = float(np.linalg.norm(w - lam * v))
        if residual <= tol * max(abs(lam), np.finfo(float).tiny):
            return EigenPair(complex(lam), v)
        nrm = np.linalg.norm(w)
        if nrm < np.finfo(float).tiny:
            # started orthogonal to the dominant space; deterministic restart
            v = np.arange(1.0, dim + 1.0, dtype=complex)
            v /= np.linalg.norm(v)
            continue
        v = w / nrm
    if matrix is not None and dim <= DENSE_FALLBACK_DIM:
        return _dense_dominant(matrix)
    raise EigenSolverError(
        f"power iteration did not converge in {max_iter} steps "
        f"(last residual {residual:.3e})",
        residual=residual,
    )


def hermitian_eigs(m, herm_tol=1e-12):
    """Eigendecomposition of a Hermitian matrix, values ascending.

    Rejects inputs whose anti-Hermitian part exceeds `herm_tol` relative
    to the matrix scale.
    """
    m = np.asarray(m)
    scale = max(1.0, float(np.abs(m).max()) if m.size else 1.0)
    dev = float(np.abs(m - m.conj().T).max()) if m.size else 0.0
    if dev > herm_tol * scale:
        raise ValueError(f"matrix is not Hermitian (deviation {dev:.3e})")
    vals, vecs = np.linalg.eigh(m)
    return vals, vecs
