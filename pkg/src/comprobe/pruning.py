"""Row/neuron and spectral pruning with ratio- and residual-targeted plans.

Parameter accounting: a layer with k retained rows counts k*h of its h^2
parameters; a rank-k spectral layer counts min(h^2, k*(2h+1)) since the
factorized storage is only used when it is actually smaller than dense.
The classifier head is never pruned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attacks import AttackConfig, evaluate_robustness
from .compressibility import structure_vectors
from .errors import BadK, EmptyDataset, EmptyGrid
from .linalg import as_matrix, svd
from .network import Network, accuracy

__all__ = [
    "PruningPlan",
    "RetentionPoint",
    "prune_rows",
    "prune_spectral",
    "apply_plan",
    "layerwise_prune",
    "eps_targeted_global_prune",
    "retention_eval",
    "retention_curve",
]


@dataclass(frozen=True)
class PruningPlan:
    per_layer_k: dict
    kind: str  # "row" | "spectral"
    target_kind: str  # "ratio" | "epsilon"
    target_value: float
    achieved_ratio: float
    selected_epsilon: float | None = None
    ratio_gap: float | None = None


@dataclass(frozen=True)
class RetentionPoint:
    ratio: float
    clean_accuracy: float
    robust_accuracy: float | None = None


def prune_rows(w, k: int) -> np.ndarray:
    """Keep the k rows with largest l1 norm (ties by lower index), zero the rest."""
    arr = as_matrix(w)
    if not 1 <= k <= arr.shape[0]:
        raise BadK(f"k={k} outside [1, {arr.shape[0]}]")
    if k == arr.shape[0]:
        return arr.copy()
    nu = np.sum(np.abs(arr), axis=1)
    keep = np.argsort(-nu, kind="stable")[:k]
    out = np.zeros_like(arr)
    out[keep] = arr[keep]
    return out


def prune_spectral(w, k: int) -> np.ndarray:
    """Best rank-k approximation via truncated SVD.

    When the truncated tail is already negligible (sigma_{k+1} <= 1e-12 *
    sigma_1) the input is returned unchanged, which keeps re-pruning a
    bitwise no-op.
    """
    arr = as_matrix(w)
    r = min(arr.shape)
    if not 1 <= k <= r:
        raise BadK(f"k={k} outside [1, {r}]")
    factors = svd(arr)
    if k == r or factors.s[0] == 0.0 or factors.s[k] <= 1e-12 * factors.s[0]:
        return arr.copy()
    return factors.truncate(k).reconstruct()


def _retained_params(kind: str, k: int, shape: tuple) -> int:
    rows, cols = shape
    if kind == "row":
        return k * cols
    dense = rows * cols
    return min(dense, k * (rows + cols + 1))


def _layer_dim(kind: str, w: np.ndarray) -> int:
    return w.shape[0] if kind == "row" else min(w.shape)


def _achieved_ratio(net: Network, kind: str, per_layer_k: dict) -> float:
    total = sum(w.size for w in net.layers)
    kept = sum(
        _retained_params(kind, per_layer_k[i], net.layers[i].shape)
        for i in range(net.depth)
    )
    return kept / total if total else 1.0


def apply_plan(net: Network, plan: PruningPlan) -> Network:
    """Return a new network with the plan applied; the head is untouched."""
    pruner = prune_rows if plan.kind == "row" else prune_spectral
    layers = [pruner(w, plan.per_layer_k[i]) for i, w in enumerate(net.layers)]
    return Network(layers, net.head.copy())


def layerwise_prune(net: Network, kind: str, ratio: float):
    """Uniform per-layer pruning: every layer keeps k = max(1, round(ratio*dim))."""
    if not 0 < ratio <= 1:
        raise BadK(f"ratio={ratio} outside (0, 1]")
    _check_kind(kind)
    per_layer_k = {
        i: max(1, int(np.floor(ratio * _layer_dim(kind, w) + 0.5)))
        for i, w in enumerate(net.layers)
    }
    plan = PruningPlan(
        per_layer_k=per_layer_k,
        kind=kind,
        target_kind="ratio",
        target_value=ratio,
        achieved_ratio=_achieved_ratio(net, kind, per_layer_k),
    )
    return apply_plan(net, plan), plan


def _check_kind(kind: str):
    if kind not in ("row", "spectral"):
        raise BadK(f"pruning kind must be 'row' or 'spectral', got {kind!r}")


def _min_k_for_eps(vec_desc: np.ndarray, eps: float) -> int:
    # smallest k with sum(tail after k) <= eps * sum(all), at least 1
    total = float(np.sum(vec_desc))
    if total == 0.0:
        return 1
    tails = total - np.cumsum(vec_desc)  # tails[k-1] = residual mass after k
    ok = np.nonzero(tails <= eps * total)[0]
    k = int(ok[0]) + 1 if ok.size else vec_desc.size
    return max(1, k)


def eps_targeted_global_prune(net: Network, kind: str, target_ratio: float, eps_grid=None):
    """Pick one residual level for all layers whose induced per-layer
    retained counts give the global parameter ratio closest to the target.

    For each candidate eps, layer l keeps the minimal k whose top-k
    l1-residual of its structure vector (row norms or singular values) is
    at most eps. Ties between candidates prefer more retention.
    """
    if not 0 < target_ratio <= 1:
        raise BadK(f"target_ratio={target_ratio} outside (0, 1]")
    _check_kind(kind)
    if eps_grid is None:
        eps_grid = np.geomspace(1e-6, 1.0, 200)
    eps_grid = np.asarray(eps_grid, dtype=np.float64)
    if eps_grid.size == 0:
        raise EmptyGrid("eps grid is empty")

    vecs = []
    for w in net.layers:
        sv = structure_vectors(w)
        vecs.append(sv.nu if kind == "row" else sv.sigma)

    best = None  # (gap, -achieved, eps, per_layer_k)
    for eps in eps_grid:
        per_layer_k = {i: _min_k_for_eps(vecs[i], float(eps)) for i in range(net.depth)}
        achieved = _achieved_ratio(net, kind, per_layer_k)
        key = (abs(achieved - target_ratio), -achieved)
        if best is None or key < best[0]:
            best = (key, float(eps), per_layer_k, achieved)

    _, eps_sel, per_layer_k, achieved = best
    plan = PruningPlan(
        per_layer_k=per_layer_k,
        kind=kind,
        target_kind="ratio",
        target_value=target_ratio,
        achieved_ratio=achieved,
        selected_epsilon=eps_sel,
        ratio_gap=achieved - target_ratio,
    )
    return apply_plan(net, plan), plan


def retention_eval(net: Network, pruned, dataset, attack_cfg: AttackConfig | None = None):
    """Accuracy of each (pruned net, plan) pair, optionally under attack."""
    x = np.asarray(dataset.x if hasattr(dataset, "x") else dataset[0], dtype=np.float64)
    y = np.asarray(dataset.y if hasattr(dataset, "y") else dataset[1])
    if x.shape[0] == 0:
        raise EmptyDataset("no examples for retention evaluation")
    points = []
    for pruned_net, plan in pruned:
        robust = None
        if attack_cfg is not None:
            robust = evaluate_robustness(pruned_net, (x, y), attack_cfg).robust_accuracy
        points.append(
            RetentionPoint(
                ratio=plan.achieved_ratio,
                clean_accuracy=accuracy(pruned_net, x, y),
                robust_accuracy=robust,
            )
        )
    return points


def retention_curve(
    net: Network,
    dataset,
    ratios,
    kind: str,
    method: str = "global",
    attack_cfg: AttackConfig | None = None,
    eps_grid=None,
):
    """Prune at each requested ratio with the chosen method and evaluate."""
    if method not in ("global", "layerwise"):
        raise BadK(f"method must be 'global' or 'layerwise', got {method!r}")
    pruned = []
    for ratio in ratios:
        if method == "global":
            pruned.append(eps_targeted_global_prune(net, kind, ratio, eps_grid))
        else:
            pruned.append(layerwise_prune(net, kind, ratio))
    return retention_eval(net, pruned, dataset, attack_cfg), [p for _, p in pruned]
