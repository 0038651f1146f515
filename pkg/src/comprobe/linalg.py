"""Dense linear-algebra primitives: norms and SVD with a fixed sign convention.

All operations work on 2-D float64 arrays. Rectangular matrices are fully
supported here; squareness policies are enforced by callers that need them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, ShapeMismatch

__all__ = [
    "as_matrix",
    "frobenius_norm",
    "op_norm_inf",
    "op_norm_2",
    "op_norm_2_power",
    "svd",
    "SvdFactors",
]


def as_matrix(w) -> np.ndarray:
    """Validate and return `w` as a finite 2-D float64 array."""
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatch(f"expected a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeMismatch("matrix contains NaN or Inf entries")
    return arr


def frobenius_norm(w) -> float:
    """Square root of the sum of squared entries."""
    return float(np.sqrt(np.sum(np.square(as_matrix(w)))))


def op_norm_inf(w) -> float:
    """l-inf operator norm: maximum row l1 norm."""
    return float(np.max(np.sum(np.abs(as_matrix(w)), axis=1)))


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD of a matrix: W = U @ diag(s) @ V.T.

    `u` has orthonormal columns (m x r), `s` is non-increasing and
    non-negative (r,), `v` holds right singular vectors as columns (n x r),
    with r = min(m, n).
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T

    def truncate(self, k: int) -> "SvdFactors":
        """Keep only the k leading singular triplets."""
        return SvdFactors(self.u[:, :k], self.s[:k], self.v[:, :k])


def _fix_signs(u: np.ndarray, vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Sign convention: each right singular vector's first component with
    # magnitude above 1e-12 must be non-negative. Keeps factorizations
    # reproducible bit-for-bit across runs on the same platform.
    u = u.copy()
    vt = vt.copy()
    for i in range(vt.shape[0]):
        row = vt[i]
        nz = np.nonzero(np.abs(row) > 1e-12)[0]
        if nz.size and row[nz[0]] < 0.0:
            vt[i] = -row
            u[:, i] = -u[:, i]
    return u, vt


def svd(w) -> SvdFactors:
    """Thin SVD with the deterministic sign convention.

    Raises ConvergenceFailure if the underlying factorization does not
    converge.
    """
    arr = as_matrix(w)
    try:
        u, s, vt = np.linalg.svd(arr, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD did not converge: {exc}") from exc
    u, vt = _fix_signs(u, vt)
    return SvdFactors(u=u, s=s, v=vt.T)


def op_norm_2(w) -> float:
    """Spectral norm: the largest singular value."""
    arr = as_matrix(w)
    try:
        s = np.linalg.svd(arr, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD did not converge: {exc}") from exc
    return float(s[0])


def op_norm_2_power(w, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Spectral norm by power iteration on W.T @ W.

    Kept as an independent route for cross-checking `op_norm_2`. Stops when
    the Rayleigh estimate is stable to relative tolerance `tol`; raises
    ConvergenceFailure at the iteration cap.
    """
    arr = as_matrix(w)
    n = arr.shape[1]
    # deterministic, not axis-aligned start so no single direction is missed
    v = np.cos(np.arange(1, n + 1, dtype=np.float64))
    v /= np.linalg.norm(v)
    gram = arr.T @ arr
    prev = 0.0
    settle = -1  # extra iterations after the tolerance first triggers
    for _ in range(max_iter):
        z = gram @ v
        norm_z = np.linalg.norm(z)
        if norm_z == 0.0:
            return 0.0
        v = z / norm_z
        est = float(np.sqrt(norm_z))
        if settle < 0 and abs(est - prev) <= tol * max(est, 1e-300):
            # successive estimates contract slowly near-degenerate spectra;
            # polish a little past the trigger point before reporting
            settle = 100
        if settle == 0:
            return est
        if settle > 0:
            settle -= 1
        prev = est
    raise ConvergenceFailure(
        f"power iteration did not reach tol={tol} within {max_iter} iterations"
    )
