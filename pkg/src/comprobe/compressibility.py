"""Top-k compressibility metrics, spread, PQ index and structure vectors.

A vector is (q, k, eps)-compressible when dropping all but its k
largest-magnitude entries loses at most a relative fraction eps of its
q-norm. Profiles computed here always report the achieved (equality) eps,
so downstream norm identities hold by construction. The spread beta
measures the decay from the largest to the k-th largest magnitude:
|theta_(k)| = (1 - beta) * |theta_(1)|.

Magnitude ties are broken toward the lower original index everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadK, BadOrders, ZeroLeader, ZeroVector
from .linalg import as_matrix, svd

__all__ = [
    "CompressibilityProfile",
    "StructureVectors",
    "PROFILE_KINDS",
    "compressed_topk",
    "residual_ratio",
    "strict_norm_identity_check",
    "spread",
    "structure_vectors",
    "pq_index",
    "profile",
    "default_k",
]

PROFILE_KINDS = ("row", "spectral", "within-row", "unstructured")


@dataclass(frozen=True)
class CompressibilityProfile:
    """Achieved compressibility statistics of one structure vector."""

    q: float
    k: int
    epsilon: float
    beta: float
    kind: str


@dataclass(frozen=True)
class StructureVectors:
    """Row l1 norms (descending), matching row l2 norms, singular values."""

    nu: np.ndarray
    nu_hat: np.ndarray
    sigma: np.ndarray


def default_k(h: int) -> int:
    """Shared retained-count default: ceil(0.1 * h), at least 1."""
    return max(1, int(np.ceil(0.1 * h)))


def _as_vector(theta) -> np.ndarray:
    arr = np.asarray(theta, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ZeroVector("empty vector")
    if not np.all(np.isfinite(arr)):
        raise ZeroVector("vector contains NaN or Inf entries")
    return arr


def _topk_indices(theta: np.ndarray, k: int) -> np.ndarray:
    # stable sort on negated magnitudes = ties broken by lower index
    order = np.argsort(-np.abs(theta), kind="stable")
    return order[:k]


def _vec_norm(theta: np.ndarray, q: float) -> float:
    if q == 1:
        return float(np.sum(np.abs(theta)))
    if q == 2:
        return float(np.linalg.norm(theta))
    return float(np.sum(np.abs(theta) ** q) ** (1.0 / q))


def compressed_topk(theta, k: int) -> np.ndarray:
    """Keep the k largest-magnitude entries in place, zero the rest."""
    arr = _as_vector(theta)
    if not 0 <= k <= arr.size:
        raise BadK(f"k={k} outside [0, {arr.size}]")
    out = np.zeros_like(arr)
    idx = _topk_indices(arr, k)
    out[idx] = arr[idx]
    return out


def residual_ratio(theta, q: float, k: int) -> float:
    """Relative q-norm error of the top-k approximation, in [0, 1]."""
    arr = _as_vector(theta)
    if not 0 <= k <= arr.size:
        raise BadK(f"k={k} outside [0, {arr.size}]")
    total = _vec_norm(arr, q)
    if total == 0.0:
        raise ZeroVector("cannot form a residual ratio of the zero vector")
    tail = arr.copy()
    tail[_topk_indices(arr, k)] = 0.0
    return min(1.0, _vec_norm(tail, q) / total)


def strict_norm_identity_check(theta, q: float, k: int) -> float:
    """Residual of the identity  ||theta_k||_q = (1 - eps^q)^(1/q) ||theta||_q.

    Returns the absolute defect; it is at most 1e-10 * ||theta||_q for any
    finite vector because the achieved eps is used.
    """
    arr = _as_vector(theta)
    eps = residual_ratio(arr, q, k)
    kept = _vec_norm(compressed_topk(arr, k), q)
    predicted = (max(0.0, 1.0 - eps**q)) ** (1.0 / q) * _vec_norm(arr, q)
    return abs(kept - predicted)


def spread(theta, k: int) -> float:
    """Relative decay 1 - |theta_(k)| / |theta_(1)| of sorted magnitudes."""
    arr = _as_vector(theta)
    if not 1 <= k <= arr.size:
        raise BadK(f"k={k} outside [1, {arr.size}]")
    mags = np.sort(np.abs(arr))[::-1]
    if mags[0] == 0.0:
        raise ZeroLeader("largest-magnitude entry is zero")
    return float(1.0 - mags[k - 1] / mags[0])


def structure_vectors(w) -> StructureVectors:
    """Row l1 norms sorted descending, row l2 norms in the same row order,
    and singular values descending."""
    arr = as_matrix(w)
    nu = np.sum(np.abs(arr), axis=1)
    nu_hat = np.sqrt(np.sum(np.square(arr), axis=1))
    order = np.argsort(-nu, kind="stable")
    sigma = svd(arr).s
    return StructureVectors(nu=nu[order], nu_hat=nu_hat[order], sigma=sigma)


def pq_index(w, p: float, q: float) -> float:
    """Scale-invariant sparsity index 1 - d^(1/q - 1/p) ||w||_p / ||w||_q."""
    if not 0 < p < q:
        raise BadOrders(f"need 0 < p < q, got p={p}, q={q}")
    arr = _as_vector(w)
    norm_q = _vec_norm(arr, q)
    if norm_q == 0.0:
        raise ZeroVector("PQ index undefined for the zero vector")
    d = arr.size
    return float(1.0 - d ** (1.0 / q - 1.0 / p) * _vec_norm(arr, p) / norm_q)


def profile(w, kind: str, k: int) -> CompressibilityProfile:
    """Compressibility profile of one structure vector of a matrix.

    kind selects the vector and its norm order: "row" uses the row l1 norms
    with q=1, "spectral" the singular values with q=1, "within-row" the row
    l2 norms with q=2, and "unstructured" the flattened matrix with q=1.
    """
    if kind not in PROFILE_KINDS:
        raise BadK(f"unknown profile kind {kind!r}; expected one of {PROFILE_KINDS}")
    arr = as_matrix(w)
    if kind == "unstructured":
        theta, q = np.abs(arr).ravel(), 1.0
    else:
        vecs = structure_vectors(arr)
        if kind == "row":
            theta, q = vecs.nu, 1.0
        elif kind == "spectral":
            theta, q = vecs.sigma, 1.0
        else:
            theta, q = np.sort(vecs.nu_hat)[::-1], 2.0
    if not 1 <= k <= theta.size:
        raise BadK(f"k={k} outside [1, {theta.size}] for kind {kind!r}")
    beta = spread(theta, k)  # raises ZeroLeader before epsilon is reported
    eps = residual_ratio(theta, q, k)
    return CompressibilityProfile(q=q, k=k, epsilon=eps, beta=beta, kind=kind)
