"""Fully connected ReLU network with hand-written differentiation.

The model is ``logits = C phi(W_L phi(... W_1 x))`` with elementwise ReLU
``phi``, square hidden layers and no bias terms. Binary tasks use a length-h
head vector with the logistic loss ``log(1 + exp(-y * logit))`` on labels in
{-1, +1}; multiclass tasks use a (K x h) head with softmax cross-entropy.

Gradients are exact reverse-mode accumulations; the ReLU subgradient at 0
is taken to be 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .compressibility import default_k, profile
from .errors import NonBinaryLabels, ShapeMismatch, ZeroMatrix
from .linalg import as_matrix, frobenius_norm, svd

__all__ = [
    "Network",
    "Grads",
    "TrainConfig",
    "RegularizerSpec",
    "AdversarialTraining",
    "AdamWState",
    "EpochStats",
    "init_network",
    "forward",
    "predictions",
    "example_losses",
    "loss_and_grads",
    "regularizer_value_grad",
    "frobenius_project",
    "init_adamw",
    "adamw_step",
    "train",
]

REGULARIZER_KINDS = ("group_lasso", "ratio_lasso", "nuclear", "spread_variance", "l1")


@dataclass
class Network:
    """Ordered hidden layers plus a linear head; binary heads are 1-D."""

    layers: list
    head: np.ndarray

    def __post_init__(self):
        self.layers = [as_matrix(w) for w in self.layers]
        head = np.asarray(self.head, dtype=np.float64)
        if head.ndim not in (1, 2) or not np.all(np.isfinite(head)):
            raise ShapeMismatch("head must be a finite vector or matrix")
        self.head = head
        dims = [w.shape for w in self.layers]
        for (r_prev, _), (_, c_next) in zip(dims[:-1], dims[1:]):
            if c_next != r_prev:
                raise ShapeMismatch(f"layer shapes do not compose: {dims}")
        feat = dims[-1][0] if dims else self.head_width
        if self.head_width != feat:
            raise ShapeMismatch(
                f"head width {self.head_width} does not match feature dim {feat}"
            )

    @property
    def head_width(self) -> int:
        return self.head.shape[-1]

    @property
    def input_dim(self) -> int:
        return self.layers[0].shape[1] if self.layers else self.head_width

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def is_binary(self) -> bool:
        return self.head.ndim == 1

    def copy(self) -> "Network":
        return Network([w.copy() for w in self.layers], self.head.copy())


@dataclass
class Grads:
    """Parameter gradients matching Network.layers / Network.head."""

    layers: list
    head: np.ndarray


def init_network(input_dim: int, depth: int, head_classes: int, seed: int = 0) -> Network:
    """Uniform init in [-1/sqrt(h), 1/sqrt(h)]; binary tasks get a vector head."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(input_dim)
    layers = [
        rng.uniform(-bound, bound, size=(input_dim, input_dim)) for _ in range(depth)
    ]
    if head_classes <= 2:
        head = rng.uniform(-bound, bound, size=input_dim)
    else:
        head = rng.uniform(-bound, bound, size=(head_classes, input_dim))
    return Network(layers, head)


def _as_batch(net: Network, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = np.atleast_2d(arr)
    if batch.shape[1] != net.input_dim:
        raise ShapeMismatch(
            f"input dim {batch.shape[1]} does not match network dim {net.input_dim}"
        )
    return batch, single


def forward(net: Network, x):
    """Return (logits, post-ReLU activations per hidden layer).

    Accepts a single vector (h,) or a batch (n, h); outputs follow suit.
    """
    batch, single = _as_batch(net, x)
    acts = []
    z = batch
    for w in net.layers:
        z = np.maximum(z @ w.T, 0.0)
        acts.append(z)
    logits = z @ net.head.T
    if single:
        return logits[0], [a[0] for a in acts]
    return logits, acts


def to_pm_one(y) -> np.ndarray:
    """Map binary labels to {-1, +1}; accepts {0, 1} or {-1, +1} input."""
    arr = np.asarray(y)
    values = set(np.unique(arr).tolist())
    if values <= {0, 1}:
        return arr.astype(np.float64) * 2.0 - 1.0
    if values <= {-1, 1}:
        return arr.astype(np.float64)
    raise NonBinaryLabels(f"binary task got labels {sorted(values)}")


def _sigmoid(t: np.ndarray) -> np.ndarray:
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def resolve_loss_kind(net: Network, loss_kind: str | None) -> str:
    if loss_kind is None:
        return "binary_ce" if net.is_binary else "softmax_ce"
    if loss_kind not in ("binary_ce", "softmax_ce"):
        raise ShapeMismatch(f"unknown loss kind {loss_kind!r}")
    return loss_kind


def example_losses(net: Network, x, y, loss_kind: str | None = None) -> np.ndarray:
    """Per-example loss vector (natural log)."""
    kind = resolve_loss_kind(net, loss_kind)
    batch, _ = _as_batch(net, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    logits, _ = forward(net, batch)
    if kind == "binary_ce":
        y_pm = to_pm_one(y)
        return np.logaddexp(0.0, -y_pm * logits)
    labels = np.asarray(y, dtype=np.int64)
    p = _softmax(logits)
    picked = np.clip(p[np.arange(len(labels)), labels], 1e-300, None)
    return -np.log(picked)


def predictions(net: Network, x) -> np.ndarray:
    """Predicted class ids: sign threshold for binary, argmax otherwise."""
    logits, _ = forward(net, np.atleast_2d(np.asarray(x, dtype=np.float64)))
    if net.is_binary:
        return (logits > 0).astype(np.int64)
    return np.argmax(logits, axis=1)


def accuracy(net: Network, x, y) -> float:
    labels = np.asarray(y)
    if net.is_binary and set(np.unique(labels).tolist()) <= {-1, 1}:
        labels = ((labels + 1) // 2).astype(np.int64)
    return float(np.mean(predictions(net, x) == labels))


def loss_and_grads(net: Network, x, y, loss_kind: str | None = None):
    """Mean loss, parameter gradients of the mean, per-example input grads.

    Input gradients are for each example's own loss (no 1/n factor) so they
    can be used directly by attack routines.
    """
    kind = resolve_loss_kind(net, loss_kind)
    batch, single = _as_batch(net, x)
    n = batch.shape[0]

    acts = []
    z = batch
    for w in net.layers:
        z = np.maximum(z @ w.T, 0.0)
        acts.append(z)
    logits = z @ net.head.T

    if kind == "binary_ce":
        y_pm = to_pm_one(y)
        losses = np.logaddexp(0.0, -y_pm * logits)
        dlogits = -y_pm * _sigmoid(-y_pm * logits)  # (n,)
        g_z = dlogits[:, None] * net.head[None, :]
        head_grad = (dlogits @ z) / n
    else:
        labels = np.asarray(y, dtype=np.int64)
        p = _softmax(logits)
        picked = np.clip(p[np.arange(n), labels], 1e-300, None)
        losses = -np.log(picked)
        dlogits = p.copy()
        dlogits[np.arange(n), labels] -= 1.0  # (n, K)
        g_z = dlogits @ net.head
        head_grad = (dlogits.T @ z) / n

    layer_grads: list = [None] * len(net.layers)
    for idx in range(len(net.layers) - 1, -1, -1):
        z_prev = acts[idx - 1] if idx > 0 else batch
        g_pre = g_z * (acts[idx] > 0.0)
        layer_grads[idx] = (g_pre.T @ z_prev) / n
        g_z = g_pre @ net.layers[idx]

    input_grads = g_z[0] if single else g_z
    return float(np.mean(losses)), Grads(layer_grads, head_grad), input_grads


@dataclass(frozen=True)
class RegularizerSpec:
    """One penalty term: value = strength * penalty(layers)."""

    kind: str
    strength: float
    top_fraction: float = 0.05

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise ShapeMismatch(f"unknown regularizer {self.kind!r}")
        if self.strength < 0:
            raise ShapeMismatch("regularizer strength must be >= 0")


def _row_norms(w: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.square(w), axis=1))


def regularizer_value_grad(spec: RegularizerSpec, net: Network):
    """Penalty value and per-hidden-layer gradients (head is never penalized)."""
    value = 0.0
    grads = [np.zeros_like(w) for w in net.layers]
    if spec.strength == 0.0:
        return 0.0, grads

    for i, w in enumerate(net.layers):
        if spec.kind == "l1":
            value += float(np.sum(np.abs(w)))
            grads[i] = np.sign(w)
        elif spec.kind == "group_lasso":
            r = _row_norms(w)
            value += float(np.sum(r))
            nz = r > 0
            grads[i][nz] = w[nz] / r[nz, None]
        elif spec.kind == "ratio_lasso":
            r = _row_norms(w)
            s2 = float(np.linalg.norm(r))
            if s2 == 0.0:
                continue
            s1 = float(np.sum(r))
            value += s1 / s2
            coef = 1.0 / s2 - s1 * r / s2**3  # d(ratio)/d r_i
            nz = r > 0
            grads[i][nz] = (coef[nz] / r[nz])[:, None] * w[nz]
        elif spec.kind == "nuclear":
            f = svd(w)
            value += float(np.sum(f.s))
            grads[i] = f.u @ f.v.T
        else:  # spread_variance
            r = _row_norms(w)
            m = max(1, int(np.ceil(spec.top_fraction * w.shape[0])))
            members = np.argsort(-r, kind="stable")[:m]
            top = r[members]
            mean = float(np.mean(top))
            value += float(np.mean((top - mean) ** 2))
            dvar = 2.0 * (top - mean) / m
            nz = top > 0
            rows = members[nz]
            grads[i][rows] = (dvar[nz] / top[nz])[:, None] * w[rows]

    return spec.strength * value, [spec.strength * g for g in grads]


def frobenius_project(w, c: float) -> np.ndarray:
    """Rescale so the Frobenius norm equals c exactly."""
    arr = as_matrix(w)
    norm = frobenius_norm(arr)
    if norm == 0.0:
        raise ZeroMatrix("cannot project a zero matrix to a positive norm")
    if c <= 0.0:
        raise ZeroMatrix("projection target must be positive")
    return arr * (c / norm)


@dataclass
class AdamWState:
    m: list
    v: list
    t: int = 0


def init_adamw(params: list) -> AdamWState:
    return AdamWState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adamw_step(
    state: AdamWState,
    params: list,
    grads: list,
    learning_rate: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One decoupled-weight-decay Adam update, in place on `params`."""
    state.t += 1
    b1t = 1.0 - beta1**state.t
    b2t = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        step = (m / b1t) / (np.sqrt(v / b2t) + eps)
        p -= learning_rate * step
        if weight_decay:
            p -= learning_rate * weight_decay * p
    return params, state


@dataclass(frozen=True)
class AdversarialTraining:
    """Replace a fraction of each minibatch with current-parameter attacks."""

    attack: object  # attacks.AttackConfig
    ratio: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ShapeMismatch("adversarial minibatch ratio must be in [0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    weight_decay: float = 0.01
    batch_size: int = 32
    max_epochs: int = 100
    seed: int = 0
    regularizers: tuple = ()
    frobenius_targets: object = None  # None | float | sequence | "init"
    adversarial: AdversarialTraining | None = None
    early_stopping_patience: int = 10
    validation_fraction: float = 0.05
    loss_kind: str | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ShapeMismatch("learning_rate must be positive")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    clean_acc: float
    robust_acc: float
    eps_sigma: float
    eps_nu: float
    fro_norms: tuple


def _resolve_targets(cfg: TrainConfig, net: Network):
    targets = cfg.frobenius_targets
    if targets is None:
        return None
    if isinstance(targets, str):
        if targets != "init":
            raise ShapeMismatch(f"unknown frobenius target spec {targets!r}")
        return [frobenius_norm(w) for w in net.layers]
    if np.isscalar(targets):
        return [float(targets)] * net.depth
    vals = [float(t) for t in targets]
    if len(vals) != net.depth:
        raise ShapeMismatch("need one Frobenius target per hidden layer")
    return vals


def _mean_profile_eps(net: Network, kind: str) -> float:
    vals = []
    for w in net.layers:
        try:
            vals.append(profile(w, kind, default_k(min(w.shape))).epsilon)
        except Exception:
            vals.append(np.nan)
    return float(np.mean(vals)) if vals else np.nan


def train(net: Network, dataset, cfg: TrainConfig):
    """Train in place and return (net, per-epoch history).

    Deterministic given cfg.seed: data order, adversarial example seeds and
    the validation split all derive from it. Validation-loss early stopping
    restores the best parameters seen.
    """
    from .attacks import pgd  # local import: attacks module builds on this one

    x = np.asarray(dataset.x if hasattr(dataset, "x") else dataset[0], dtype=np.float64)
    y = np.asarray(dataset.y if hasattr(dataset, "y") else dataset[1])
    n = x.shape[0]
    rng = np.random.default_rng(cfg.seed)

    n_val = max(1, int(round(cfg.validation_fraction * n)))
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    x_tr, y_tr = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    params = list(net.layers) + [net.head]
    state = init_adamw(params)
    targets = _resolve_targets(cfg, net)
    loss_kind = resolve_loss_kind(net, cfg.loss_kind)

    best_val = np.inf
    best_params = [p.copy() for p in params]
    patience_left = cfg.early_stopping_patience
    history: list[EpochStats] = []

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(x_tr))
        batch_losses = []
        for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            xb = x_tr[idx].copy()
            yb = y_tr[idx]
            if cfg.adversarial is not None and cfg.adversarial.ratio > 0:
                n_adv = int(np.ceil(cfg.adversarial.ratio * len(idx)))
                atk = replace(
                    cfg.adversarial.attack,
                    seed=(cfg.seed * 1_000_003 + epoch * 8191 + bi) & 0x7FFFFFFF,
                )
                xb[:n_adv] = xb[:n_adv] + pgd(net, xb[:n_adv], yb[:n_adv], atk)
            loss, grads, _ = loss_and_grads(net, xb, yb, loss_kind)
            full = list(grads.layers) + [grads.head]
            for spec in cfg.regularizers:
                _, reg_grads = regularizer_value_grad(spec, net)
                for i, g in enumerate(reg_grads):
                    full[i] = full[i] + g
            adamw_step(state, params, full, cfg.learning_rate, cfg.weight_decay)
            if targets is not None:
                for i, c in enumerate(targets):
                    net.layers[i][...] = frobenius_project(net.layers[i], c)
            batch_losses.append(loss)

        val_loss = float(np.mean(example_losses(net, x_val, y_val, loss_kind)))
        robust = np.nan
        if cfg.adversarial is not None:
            atk = replace(cfg.adversarial.attack, seed=cfg.seed ^ 0x5EED)
            x_adv = x_val + pgd(net, x_val, y_val, atk)
            robust = accuracy(net, x_adv, y_val)
        history.append(
            EpochStats(
                epoch=epoch,
                train_loss=float(np.mean(batch_losses)),
                val_loss=val_loss,
                clean_acc=accuracy(net, x_val, y_val),
                robust_acc=robust,
                eps_sigma=_mean_profile_eps(net, "spectral"),
                eps_nu=_mean_profile_eps(net, "row"),
                fro_norms=tuple(frobenius_norm(w) for w in net.layers),
            )
        )

        if val_loss < best_val:
            best_val = val_loss
            best_params = [p.copy() for p in params]
            patience_left = cfg.early_stopping_patience
        else:
            patience_left -= 1
            if patience_left <= 0:
                break

    for p, b in zip(params, best_params):
        p[...] = b
    return net, history
