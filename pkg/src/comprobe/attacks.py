"""Budget-bounded input attacks and robustness diagnostics.

FGSM takes one normalized gradient step of size delta; PGD runs projected
gradient ascent with restarts (an FGSM warm start is always one of them)
and keeps, per example, the best feasible perturbation seen anywhere in
the search, with the zero perturbation always included as a candidate.
The universal-perturbation routine accumulates batch-mean gradient
directions into a single budget-projected vector shared by all inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadK, EmptyDataset, ShapeMismatch
from .linalg import svd
from .compressibility import default_k
from .network import Network, accuracy, example_losses, forward, loss_and_grads, predictions

__all__ = [
    "AttackConfig",
    "AttackOutcome",
    "UaeResult",
    "fgsm",
    "pgd",
    "evaluate_robustness",
    "sv_alignment",
    "uae_fgsm",
]

_NORM_KINDS = ("inf", "two")


@dataclass(frozen=True)
class AttackConfig:
    norm_kind: str
    delta: float
    steps: int = 40
    step_size: float | None = None
    restarts: int = 5
    seed: int = 0
    clip_box: tuple | None = None  # optional (lo, hi) data box

    def __post_init__(self):
        if self.norm_kind not in _NORM_KINDS:
            raise BadK(f"norm_kind must be one of {_NORM_KINDS}")
        if self.delta <= 0:
            raise BadK("attack budget delta must be > 0")
        if self.steps < 1:
            raise BadK("steps must be >= 1")

    @property
    def resolved_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 2.5 * self.delta / self.steps


@dataclass
class AttackOutcome:
    perturbations: np.ndarray
    adversarial_loss: float
    robust_accuracy: float
    gap: float
    secants: np.ndarray
    amplification: np.ndarray
    sv_alignment: np.ndarray
    sv_topk_mass: np.ndarray
    clean_loss: float
    clean_accuracy: float


@dataclass
class UaeResult:
    perturbation: np.ndarray
    fooling_rate: float
    n_correct: int
    n_fooled: int


def _vec_norms(a: np.ndarray, norm_kind: str) -> np.ndarray:
    if norm_kind == "inf":
        return np.max(np.abs(a), axis=-1)
    return np.sqrt(np.sum(np.square(a), axis=-1))


def _direction(grads: np.ndarray, norm_kind: str) -> np.ndarray:
    if norm_kind == "inf":
        return np.sign(grads)
    norms = np.linalg.norm(grads, axis=-1, keepdims=True)
    return grads / np.maximum(norms, 1e-12)


def _project(a: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    if cfg.norm_kind == "inf":
        return np.clip(a, -cfg.delta, cfg.delta)
    norms = np.linalg.norm(a, axis=-1, keepdims=True)
    scale = np.where(norms > cfg.delta, cfg.delta / np.maximum(norms, 1e-300), 1.0)
    return a * scale


def _apply_box(x: np.ndarray, a: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    if cfg.clip_box is None:
        return a
    lo, hi = cfg.clip_box
    return np.clip(x + a, lo, hi) - x


def fgsm(net: Network, x, y, cfg: AttackConfig) -> np.ndarray:
    """Single-step attack: delta * sign(grad) for l-inf, delta * unit grad
    for l2; a zero gradient yields a zero perturbation."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = np.atleast_2d(arr)
    labels = np.atleast_1d(np.asarray(y))
    _, _, grads = loss_and_grads(net, batch, labels)
    a = np.zeros_like(batch)
    if cfg.norm_kind == "inf":
        a = cfg.delta * np.sign(grads)
    else:
        norms = np.linalg.norm(grads, axis=-1, keepdims=True)
        nz = norms[:, 0] > 0
        a[nz] = cfg.delta * grads[nz] / norms[nz]
    a = _apply_box(batch, a, cfg)
    return a[0] if single else a


def pgd(net: Network, x, y, cfg: AttackConfig) -> np.ndarray:
    """Multi-restart projected gradient ascent on the per-example loss."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = np.atleast_2d(arr)
    labels = np.atleast_1d(np.asarray(y))
    n, h = batch.shape
    if n == 0:
        return arr.copy()
    rng = np.random.default_rng(cfg.seed)
    step = cfg.resolved_step_size

    best_a = np.zeros_like(batch)
    best_loss = example_losses(net, batch, labels)  # zero perturbation candidate

    def consider(a):
        nonlocal best_a, best_loss
        losses = example_losses(net, batch + a, labels)
        better = losses > best_loss
        if np.any(better):
            best_a[better] = a[better]
            best_loss[better] = losses[better]

    starts = [fgsm(net, batch, labels, cfg)]
    for _ in range(max(0, cfg.restarts - 1)):
        if cfg.norm_kind == "inf":
            a0 = rng.uniform(-cfg.delta, cfg.delta, size=(n, h))
        else:
            raw = rng.normal(size=(n, h))
            raw /= np.maximum(np.linalg.norm(raw, axis=1, keepdims=True), 1e-300)
            radii = cfg.delta * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / h)
            a0 = raw * radii
        starts.append(_apply_box(batch, a0, cfg))

    for a0 in starts:
        a = a0.copy()
        consider(a)
        for _ in range(cfg.steps):
            _, _, grads = loss_and_grads(net, batch + a, labels)
            a = _project(a + step * _direction(grads, cfg.norm_kind), cfg)
            a = _apply_box(batch, a, cfg)
            consider(a)

    return best_a[0] if single else best_a


def sv_alignment(layer_w, a, k: int | None = None):
    """Magnitudes of the perturbation's projections onto the layer's right
    singular vectors, plus the fraction of squared mass in the top k."""
    factors = svd(layer_w)
    vec = np.asarray(a, dtype=np.float64).ravel()
    if vec.size != factors.v.shape[0]:
        raise ShapeMismatch(
            f"perturbation dim {vec.size} does not match layer cols {factors.v.shape[0]}"
        )
    proj = np.abs(factors.v.T @ vec)
    k = default_k(factors.s.size) if k is None else k
    total = float(np.sum(np.square(vec)))
    mass = float(np.sum(np.square(proj[:k])) / total) if total > 0 else 0.0
    return proj, mass


def evaluate_robustness(
    net: Network,
    dataset,
    cfg: AttackConfig,
    alignment_layer: int = 0,
    k: int | None = None,
) -> AttackOutcome:
    """Attack every example with PGD and collect robustness diagnostics.

    Secants are ||Phi(x+a) - Phi(x)||_p / ||a||_p in the attack norm;
    amplification is the l2 representation growth ||z_adv - z|| / ||z||.
    Entries with vanishing denominators are skipped (NaN).
    """
    x = np.asarray(dataset.x if hasattr(dataset, "x") else dataset[0], dtype=np.float64)
    y = np.asarray(dataset.y if hasattr(dataset, "y") else dataset[1])
    if x.shape[0] == 0:
        raise EmptyDataset("no examples to attack")

    a = pgd(net, x, y, cfg)
    clean_losses = example_losses(net, x, y)
    adv_losses = example_losses(net, x + a, y)
    clean_acc = accuracy(net, x, y)
    robust_acc = accuracy(net, x + a, y)

    _, acts = forward(net, x)
    _, acts_adv = forward(net, x + a)
    z = acts[-1] if acts else x
    z_adv = acts_adv[-1] if acts_adv else x + a

    a_norms = _vec_norms(a, cfg.norm_kind)
    dz_norms = _vec_norms(z_adv - z, cfg.norm_kind)
    secants = np.where(a_norms > 1e-12, dz_norms / np.maximum(a_norms, 1e-300), np.nan)

    z_l2 = np.linalg.norm(z, axis=1)
    dz_l2 = np.linalg.norm(z_adv - z, axis=1)
    amplification = np.where(z_l2 > 1e-12, dz_l2 / np.maximum(z_l2, 1e-300), np.nan)

    if net.depth > 0:
        layer = net.layers[alignment_layer]
        factors = svd(layer)
        proj = np.abs(a @ factors.v)  # (n, r)
        kk = default_k(factors.s.size) if k is None else k
        sq = np.sum(np.square(a), axis=1)
        mass = np.where(
            sq > 0, np.sum(np.square(proj[:, :kk]), axis=1) / np.maximum(sq, 1e-300), np.nan
        )
    else:
        proj = np.abs(a)
        mass = np.full(x.shape[0], np.nan)

    return AttackOutcome(
        perturbations=a,
        adversarial_loss=float(np.mean(adv_losses)),
        robust_accuracy=robust_acc,
        gap=float(np.mean(adv_losses) - np.mean(clean_losses)),
        secants=secants,
        amplification=amplification,
        sv_alignment=proj,
        sv_topk_mass=mass,
        clean_loss=float(np.mean(clean_losses)),
        clean_accuracy=clean_acc,
    )


def uae_fgsm(
    net: Network,
    dataset,
    cfg: AttackConfig,
    epochs: int,
    batch_size: int = 64,
) -> UaeResult:
    """Universal perturbation by accumulating batch-mean gradient directions.

    Per batch: u <- project(u + step * aggregate), where aggregate is the
    sign of the mean input gradient at x + u for l-inf, or the normalized
    mean gradient for l2. The fooling rate counts correctly-classified
    examples that become misclassified at x + u.
    """
    if epochs < 1:
        raise BadK("epochs must be >= 1")
    x = np.asarray(dataset.x if hasattr(dataset, "x") else dataset[0], dtype=np.float64)
    y = np.asarray(dataset.y if hasattr(dataset, "y") else dataset[1])
    if x.shape[0] == 0:
        raise EmptyDataset("no examples for universal perturbation")
    rng = np.random.default_rng(cfg.seed)
    step = cfg.resolved_step_size
    u = np.zeros(x.shape[1])

    for _ in range(epochs):
        order = rng.permutation(x.shape[0])
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            _, _, grads = loss_and_grads(net, x[idx] + u, y[idx])
            mean_grad = np.mean(grads, axis=0)
            if cfg.norm_kind == "inf":
                aggregate = np.sign(mean_grad)
            else:
                norm = np.linalg.norm(mean_grad)
                aggregate = mean_grad / norm if norm > 1e-12 else np.zeros_like(mean_grad)
            u = _project(u + step * aggregate, cfg)

    labels = y
    if net.is_binary and set(np.unique(labels).tolist()) <= {-1, 1}:
        labels = ((labels + 1) // 2).astype(np.int64)
    clean_pred = predictions(net, x)
    correct = clean_pred == labels
    adv_pred = predictions(net, x + u)
    fooled = correct & (adv_pred != labels)
    n_correct = int(np.sum(correct))
    n_fooled = int(np.sum(fooled))
    rate = n_fooled / n_correct if n_correct else 0.0
    return UaeResult(perturbation=u, fooling_rate=rate, n_correct=n_correct, n_fooled=n_fooled)
