"""Operator-norm and Lipschitz upper bounds driven by compressibility.

The per-layer bounds decompose an operator norm into a scale-free
compressibility factor times the Frobenius norm:

  row route:       (1-eps_nu)/(1-beta_nu) * (sqrt(h*k_r) + h*eps_r)/k_nu * ||W||_F
  spectral route:  (1-eps_sig)/(1-beta_sig) * sqrt(h)/k_sig * ||W||_F

where eps/beta are the achieved residual and spread of the row-l1-norm
vector (with a within-row l2 residual eps_r) or of the singular-value
vector. Whole-network bounds multiply the per-layer bounds with interlayer
alignment factors: the worst-case normalized amplification of two
consecutive compressed layers over all binary ReLU activation patterns,
plus a tail remainder. For the l-inf route the alignment factors act only
on a non-adjacent subset of layer interfaces chosen to minimize the
product (a maximum-weight independent set on a path graph); the l2 route
uses every consecutive pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compressibility import default_k
from .errors import (
    BadK,
    DegenerateSpread,
    DimensionMismatch,
    NonBinaryLabels,
    NotSquare,
    ZeroLeader,
)
from .linalg import as_matrix, frobenius_norm, op_norm_2, op_norm_inf, svd
from .network import Network, forward, to_pm_one

__all__ = [
    "SearchConfig",
    "KConfig",
    "AlignmentFactor",
    "LayerBound",
    "BoundReport",
    "bound_opnorm_inf",
    "bound_opnorm_2",
    "remainder_inf",
    "remainder_2",
    "alignment_inf",
    "alignment_2",
    "optimal_parsing_set",
    "lipschitz_bound_inf",
    "lipschitz_bound_2",
    "adversarial_risk_bound",
]

_ENUM_CHUNK = 4096


@dataclass(frozen=True)
class SearchConfig:
    """Controls the activation-pattern search inside alignment factors.

    Dimensions up to `exact_threshold` are enumerated exhaustively
    (2^h patterns); larger ones use coordinate-flip hill climbing from
    `restarts` random starts plus the all-ones start.
    """

    exact_threshold: int = 14
    restarts: int = 16
    seed: int = 0


@dataclass(frozen=True)
class KConfig:
    """Retained-count configuration; None fields fall back to ceil(0.1*h)."""

    k_nu: object = None
    k_r: object = None
    k_sigma: object = None
    k_align: object = None

    def get(self, name: str, h: int, layer_idx: int) -> int:
        value = getattr(self, name)
        if value is None:
            return default_k(h)
        if np.isscalar(value):
            return int(value)
        return int(value[layer_idx])


def _as_kconfig(k_cfg) -> KConfig:
    if k_cfg is None:
        return KConfig()
    if isinstance(k_cfg, KConfig):
        return k_cfg
    if np.isscalar(k_cfg):
        k = int(k_cfg)
        return KConfig(k_nu=k, k_r=k, k_sigma=k, k_align=k)
    raise BadK(f"cannot interpret k configuration {k_cfg!r}")


@dataclass(frozen=True)
class AlignmentFactor:
    """Worst-case normalized interlayer amplification plus tail remainder."""

    value: float
    remainder: float
    raw_max: float
    method: str  # "exact-enumeration" | "greedy"
    evaluations: int
    pattern: tuple = ()


@dataclass(frozen=True)
class LayerBound:
    index: int
    bound: float
    actual: float
    epsilon: float
    beta: float
    k: int


@dataclass
class BoundReport:
    norm_kind: str
    per_layer: list
    alignment_factors: list
    s_opt: set
    alignment_product: float
    lipschitz_bound: float
    risk_bound: float | None = None
    conservative_extension: bool = False


def _effective_h(arr: np.ndarray, square_policy: str) -> tuple[int, bool]:
    rows, cols = arr.shape
    if rows == cols:
        return rows, False
    if square_policy == "strict":
        raise NotSquare(f"matrix is {rows}x{cols}; square layers required")
    if square_policy != "permissive":
        raise BadK(f"unknown square policy {square_policy!r}")
    return max(rows, cols), True


def _eps_beta_desc(sorted_desc: np.ndarray, k: int, q: float) -> tuple[float, float]:
    # sorted_desc: magnitudes sorted non-increasing
    if sorted_desc[0] == 0.0:
        raise ZeroLeader("all-zero structure vector")
    beta = 1.0 - sorted_desc[k - 1] / sorted_desc[0]
    if beta >= 1.0:
        raise DegenerateSpread(
            f"entry {k} of the structure vector is zero; pick a smaller k"
        )
    if q == 1:
        total = float(np.sum(sorted_desc))
        eps = float(np.sum(sorted_desc[k:])) / total
    else:
        total = float(np.sum(np.square(sorted_desc)))
        eps = float(np.sqrt(np.sum(np.square(sorted_desc[k:])) / total))
    return min(1.0, eps), float(beta)


def bound_opnorm_inf(w, k_nu: int, k_r: int, square_policy: str = "strict"):
    """Row-compressibility upper bound on the l-inf operator norm."""
    arr = as_matrix(w)
    h, _ = _effective_h(arr, square_policy)
    nu = np.sort(np.sum(np.abs(arr), axis=1))[::-1]
    nu_hat = np.sort(np.sqrt(np.sum(np.square(arr), axis=1)))[::-1]
    if not 1 <= k_nu <= nu.size:
        raise BadK(f"k_nu={k_nu} outside [1, {nu.size}]")
    if not 1 <= k_r <= nu_hat.size:
        raise BadK(f"k_r={k_r} outside [1, {nu_hat.size}]")
    eps_nu, beta_nu = _eps_beta_desc(nu, k_nu, q=1)
    if nu_hat[0] == 0.0:
        raise ZeroLeader("all rows are zero")
    total_sq = float(np.sum(np.square(nu_hat)))
    eps_r = float(np.sqrt(np.sum(np.square(nu_hat[k_r:])) / total_sq))
    value = (
        (1.0 - eps_nu)
        / (1.0 - beta_nu)
        * (np.sqrt(h * k_r) + h * eps_r)
        / k_nu
        * frobenius_norm(arr)
    )
    return float(value)


def bound_opnorm_2(w, k_sigma: int, square_policy: str = "strict"):
    """Spectral-compressibility upper bound on the spectral norm."""
    arr = as_matrix(w)
    h, _ = _effective_h(arr, square_policy)
    sigma = svd(arr).s
    if not 1 <= k_sigma <= sigma.size:
        raise BadK(f"k_sigma={k_sigma} outside [1, {sigma.size}]")
    eps_s, beta_s = _eps_beta_desc(sigma, k_sigma, q=1)
    value = (1.0 - eps_s) / (1.0 - beta_s) * np.sqrt(h) / k_sigma * frobenius_norm(arr)
    return float(value)


def _check_descending(vec: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64).ravel()
    if arr.size == 0:
        raise BadK(f"{name} must be nonempty")
    if np.any(np.diff(arr) > 0):
        raise BadK(f"{name} must be sorted non-increasing")
    if arr[0] <= 0.0:
        raise ZeroLeader(f"{name} has a non-positive leader")
    return arr


def remainder_inf(nu_l, nu_next, k: int) -> float:
    """Tail correction r1 + r2 + r1*r2 with r = (k+1)-th / 1st row-l1 norm."""
    a = _check_descending(nu_l, "nu_l")
    b = _check_descending(nu_next, "nu_next")
    r1 = a[k] / a[0] if k < a.size else 0.0
    r2 = b[k] / b[0] if k < b.size else 0.0
    return float(r1 + r2 + r1 * r2)


def remainder_2(sigma_l, sigma_next, k: int) -> float:
    """Tail correction sqrt(s1) + sqrt(s2) + sqrt(s1*s2) on singular values.

    The (k+1)-th singular value is used uniformly in all three terms.
    """
    a = _check_descending(sigma_l, "sigma_l")
    b = _check_descending(sigma_next, "sigma_next")
    s1 = a[k] / a[0] if k < a.size else 0.0
    s2 = b[k] / b[0] if k < b.size else 0.0
    return float(np.sqrt(s1) + np.sqrt(s2) + np.sqrt(s1 * s2))


def _row_compress(arr: np.ndarray, k: int) -> np.ndarray:
    nu = np.sum(np.abs(arr), axis=1)
    keep = np.argsort(-nu, kind="stable")[:k]
    out = np.zeros_like(arr)
    out[keep] = arr[keep]
    return out


def _pattern_blocks(h: int):
    total = 1 << h
    cols = np.arange(h, dtype=np.uint64)
    for start in range(0, total, _ENUM_CHUNK):
        idx = np.arange(start, min(start + _ENUM_CHUNK, total), dtype=np.uint64)
        yield ((idx[:, None] >> cols[None, :]) & np.uint64(1)).astype(np.float64)


def _search_patterns(objective, h: int, cfg: SearchConfig, batch_objective=None):
    """Maximize `objective` over binary patterns; exact or greedy per cfg."""
    if h <= cfg.exact_threshold:
        best_val = -np.inf
        best_pat = np.zeros(h)
        evaluations = 0
        for block in _pattern_blocks(h):
            vals = batch_objective(block)
            evaluations += block.shape[0]
            i = int(np.argmax(vals))
            if vals[i] > best_val:
                best_val = float(vals[i])
                best_pat = block[i]
        return best_val, best_pat, "exact-enumeration", evaluations

    rng = np.random.default_rng(cfg.seed)
    starts = [np.ones(h)] + [
        rng.integers(0, 2, size=h).astype(np.float64) for _ in range(cfg.restarts)
    ]
    best_val = -np.inf
    best_pat = np.ones(h)
    evaluations = 0
    for pat in starts:
        pat = pat.copy()
        val = objective(pat)
        evaluations += 1
        improved = True
        while improved:
            improved = False
            flip_best, flip_val = -1, val
            for j in range(h):
                pat[j] = 1.0 - pat[j]
                cand = objective(pat)
                evaluations += 1
                pat[j] = 1.0 - pat[j]
                if cand > flip_val:
                    flip_best, flip_val = j, cand
            if flip_best >= 0:
                pat[flip_best] = 1.0 - pat[flip_best]
                val = flip_val
                improved = True
        if val > best_val:
            best_val = val
            best_pat = pat.copy()
    return float(best_val), best_pat, "greedy", evaluations


def alignment_inf(w_next, w, k: int, cfg: SearchConfig | None = None) -> AlignmentFactor:
    """Worst-case normalized l-inf amplification of two row-compressed layers.

    raw_max maximizes ||A_k D B_k||_inf / (||A||_inf ||B||_inf) over binary
    diagonal D; the returned value adds the row-norm tail remainder.
    """
    cfg = cfg or SearchConfig()
    a = as_matrix(w_next)
    b = as_matrix(w)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"{a.shape} does not compose with {b.shape}")
    if not 1 <= k <= min(a.shape[0], b.shape[0]):
        raise BadK(f"k={k} invalid for shapes {a.shape}, {b.shape}")
    norm_a, norm_b = op_norm_inf(a), op_norm_inf(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroLeader("alignment undefined for a zero layer")
    ak, bk = _row_compress(a, k), _row_compress(b, k)
    denom = norm_a * norm_b
    h = a.shape[1]

    def objective(pattern):
        return np.max(np.sum(np.abs(ak @ (pattern[:, None] * bk)), axis=1)) / denom

    def batch_objective(block):
        prods = np.einsum("im,nm,mj->nij", ak, block, bk, optimize=True)
        return np.abs(prods).sum(axis=2).max(axis=1) / denom

    raw, pattern, method, evals = _search_patterns(objective, h, cfg, batch_objective)
    nu_b = np.sort(np.sum(np.abs(b), axis=1))[::-1]
    nu_a = np.sort(np.sum(np.abs(a), axis=1))[::-1]
    rem = remainder_inf(nu_b, nu_a, k)
    return AlignmentFactor(
        value=raw + rem,
        remainder=rem,
        raw_max=raw,
        method=method,
        evaluations=evals,
        pattern=tuple(int(p) for p in pattern),
    )


def alignment_2(w_next, w, k: int, cfg: SearchConfig | None = None) -> AlignmentFactor:
    """Worst-case normalized spectral amplification of truncated SVD factors.

    raw_max maximizes ||sqrt(S_k') V_k'^T D U_k sqrt(S_k)||_2 divided by
    sqrt(||W'||_2 ||W||_2) over binary diagonal D; the value adds the
    singular-value tail remainder.
    """
    cfg = cfg or SearchConfig()
    a = as_matrix(w_next)
    b = as_matrix(w)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"{a.shape} does not compose with {b.shape}")
    fa, fb = svd(a), svd(b)
    if not 1 <= k <= min(fa.s.size, fb.s.size):
        raise BadK(f"k={k} invalid for shapes {a.shape}, {b.shape}")
    if fa.s[0] == 0.0 or fb.s[0] == 0.0:
        raise ZeroLeader("alignment undefined for a zero layer")
    denom = float(np.sqrt(fa.s[0] * fb.s[0]))
    left = np.sqrt(fa.s[:k])[:, None] * fa.v[:, :k].T  # k x h
    right = fb.u[:, :k] * np.sqrt(fb.s[:k])[None, :]  # h x k
    h = a.shape[1]

    def objective(pattern):
        return float(
            np.linalg.svd(left @ (pattern[:, None] * right), compute_uv=False)[0]
        ) / denom

    def batch_objective(block):
        prods = np.einsum("im,nm,mj->nij", left, block, right, optimize=True)
        return np.linalg.svd(prods, compute_uv=False)[:, 0] / denom

    raw, pattern, method, evals = _search_patterns(objective, h, cfg, batch_objective)
    rem = remainder_2(fb.s, fa.s, k)
    return AlignmentFactor(
        value=raw + rem,
        remainder=rem,
        raw_max=raw,
        method=method,
        evaluations=evals,
        pattern=tuple(int(p) for p in pattern),
    )


def optimal_parsing_set(factors) -> tuple[set, float]:
    """Non-adjacent interface subset minimizing the product of its factors.

    Indices are 1-based. Solved by the standard path-graph independent-set
    dynamic program; only factors < 1 are candidates, a zero factor drives
    the product to zero, and exact ties prefer the lexicographically
    smallest set. Products multiply in ascending index order.
    """
    vals = [float(a) for a in factors]
    for a in vals:
        if not np.isfinite(a) or a < 0:
            raise BadK(f"alignment factors must be finite and >= 0, got {a}")
    best_prev2 = (1.0, ())  # best over the first i-2 indices
    best_prev1 = (1.0, ())  # best over the first i-1 indices
    for i, a in enumerate(vals, start=1):
        cand = best_prev1
        if a < 1.0:
            inc = (best_prev2[0] * a, best_prev2[1] + (i,))
            if inc < cand:
                cand = inc
        best_prev2, best_prev1 = best_prev1, cand
    return set(best_prev1[1]), float(best_prev1[0])


def _per_layer_bounds(net: Network, norm_kind: str, k_cfg: KConfig, square_policy: str):
    rows = []
    product = 1.0
    for idx, w in enumerate(net.layers):
        h, _ = _effective_h(w, square_policy)
        try:
            if norm_kind == "inf":
                k = k_cfg.get("k_nu", h, idx)
                k_r = k_cfg.get("k_r", h, idx)
                value = bound_opnorm_inf(w, k, k_r, square_policy)
                nu = np.sort(np.sum(np.abs(w), axis=1))[::-1]
                eps, beta = _eps_beta_desc(nu, k, q=1)
                actual = op_norm_inf(w)
            else:
                k = k_cfg.get("k_sigma", h, idx)
                value = bound_opnorm_2(w, k, square_policy)
                sigma = svd(w).s
                eps, beta = _eps_beta_desc(sigma, k, q=1)
                actual = op_norm_2(w)
        except DegenerateSpread as exc:
            raise DegenerateSpread(f"layer {idx + 1}: {exc}") from exc
        rows.append(LayerBound(idx + 1, value, actual, eps, beta, k))
        product *= value
    return rows, product


def lipschitz_bound_inf(
    net: Network,
    k_cfg=None,
    search_cfg: SearchConfig | None = None,
    square_policy: str = "strict",
) -> BoundReport:
    """l-inf Lipschitz bound of the encoder: per-layer bounds times the
    alignment product over the optimal non-adjacent interface set."""
    cfg = _as_kconfig(k_cfg)
    search = search_cfg or SearchConfig()
    per_layer, prod = _per_layer_bounds(net, "inf", cfg, square_policy)
    factors = []
    for l in range(1, net.depth):
        h = net.layers[l - 1].shape[0]
        k = cfg.get("k_align", h, l - 1)
        factors.append(alignment_inf(net.layers[l], net.layers[l - 1], k, search))
    s_opt, align_prod = optimal_parsing_set([f.value for f in factors])
    return BoundReport(
        norm_kind="inf",
        per_layer=per_layer,
        alignment_factors=factors,
        s_opt=s_opt,
        alignment_product=align_prod,
        lipschitz_bound=prod * align_prod,
        conservative_extension=any(w.shape[0] != w.shape[1] for w in net.layers),
    )


def lipschitz_bound_2(
    net: Network,
    k_cfg=None,
    search_cfg: SearchConfig | None = None,
    square_policy: str = "strict",
) -> BoundReport:
    """l2 Lipschitz bound of the encoder: per-layer bounds times the
    alignment factors of every consecutive pair (no interface selection)."""
    cfg = _as_kconfig(k_cfg)
    search = search_cfg or SearchConfig()
    per_layer, prod = _per_layer_bounds(net, "two", cfg, square_policy)
    factors = []
    for l in range(1, net.depth):
        h = net.layers[l - 1].shape[0]
        k = cfg.get("k_align", h, l - 1)
        factors.append(alignment_2(net.layers[l], net.layers[l - 1], k, search))
    align_prod = 1.0
    for f in factors:
        align_prod *= f.value
    return BoundReport(
        norm_kind="two",
        per_layer=per_layer,
        alignment_factors=factors,
        s_opt=set(range(1, net.depth)),
        alignment_product=align_prod,
        lipschitz_bound=prod * align_prod,
        conservative_extension=any(w.shape[0] != w.shape[1] for w in net.layers),
    )


def adversarial_risk_bound(
    net: Network,
    head,
    x,
    y,
    delta: float,
    norm_kind: str,
    k_cfg=None,
    search_cfg: SearchConfig | None = None,
    lipschitz_report: BoundReport | None = None,
) -> float:
    """Upper bound on binary adversarial risk at attack budget delta.

    Returns clean empirical risk + delta * encoder Lipschitz bound * dual
    norm of the head (l1 dual for l-inf attacks, l2 for l2 attacks). When a
    precomputed report is supplied its bound is reused and the risk value
    is stored on it.
    """
    if delta < 0:
        raise BadK("attack budget must be >= 0")
    if norm_kind not in ("inf", "two"):
        raise BadK(f"norm_kind must be 'inf' or 'two', got {norm_kind!r}")
    head_vec = np.asarray(net.head if head is None else head, dtype=np.float64)
    if head_vec.ndim != 1:
        raise NonBinaryLabels("risk bound requires a binary task with a vector head")
    y_pm = to_pm_one(y)
    batch = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _, acts = forward(net, batch)
    feats = acts[-1] if acts else batch
    logits = feats @ head_vec
    clean_risk = float(np.mean(np.logaddexp(0.0, -y_pm * logits)))
    report = lipschitz_report
    if report is None:
        builder = lipschitz_bound_inf if norm_kind == "inf" else lipschitz_bound_2
        report = builder(net, k_cfg, search_cfg)
    dual = float(np.sum(np.abs(head_vec))) if norm_kind == "inf" else float(
        np.linalg.norm(head_vec)
    )
    value = clean_risk + delta * report.lipschitz_bound * dual
    report.risk_bound = value
    return value
