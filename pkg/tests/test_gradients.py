"""Finite-difference oracle for every analytic gradient in the package."""

import numpy as np
import pytest

from comprobe import (
    Network,
    RegularizerSpec,
    example_losses,
    init_network,
    loss_and_grads,
    regularizer_value_grad,
)

STEP = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-6


def _central_diff(fn, arr, i, j=None):
    idx = (i,) if j is None else (i, j)
    old = arr[idx]
    arr[idx] = old + STEP
    up = fn()
    arr[idx] = old - STEP
    down = fn()
    arr[idx] = old
    return (up - down) / (2 * STEP)


def _close(analytic, numeric):
    return abs(analytic - numeric) <= max(ABS_FLOOR, REL_TOL * abs(numeric))


def _generic_case(rng, depth, h, classes):
    # regenerate until no pre-activation sits near the ReLU kink
    for _ in range(50):
        net = init_network(h, depth, classes, seed=int(rng.integers(1 << 30)))
        for w in net.layers:
            w += rng.normal(size=w.shape) * 0.3
        n = 6
        x = rng.normal(size=(n, h)) * 1.5
        y = rng.integers(0, min(classes, 2) if classes <= 2 else classes, size=n)
        ok = True
        z = x
        for w in net.layers:
            pre = z @ w.T
            if np.min(np.abs(pre)) < 1e-3:
                ok = False
                break
            z = np.maximum(pre, 0.0)
        if ok:
            return net, x, y
    raise RuntimeError("could not build a kink-free test case")


@pytest.mark.parametrize("depth,classes", [(0, 2), (1, 2), (2, 2), (3, 2), (1, 4), (2, 5)])
def test_parameter_and_input_gradients_match_fd(depth, classes):
    rng = np.random.default_rng(depth * 31 + classes)
    for _ in range(3):
        net, x, y = _generic_case(rng, depth, h=7, classes=classes)
        _, grads, gin = loss_and_grads(net, x, y)

        def mean_loss():
            return float(np.mean(example_losses(net, x, y)))

        for li, w in enumerate(net.layers):
            for _ in range(4):
                i = int(rng.integers(w.shape[0]))
                j = int(rng.integers(w.shape[1]))
                fd = _central_diff(mean_loss, w, i, j)
                assert _close(grads.layers[li][i, j], fd)

        head = net.head
        flat = head.reshape(-1)
        for _ in range(4):
            i = int(rng.integers(flat.size))
            fd = _central_diff(mean_loss, flat, i)
            assert _close(grads.head.reshape(-1)[i], fd)

        # input gradients are per-example (no 1/n): probe one example's loss
        ei = int(rng.integers(x.shape[0]))

        def one_loss():
            return float(example_losses(net, x, y)[ei])

        for _ in range(4):
            j = int(rng.integers(x.shape[1]))
            fd = _central_diff(one_loss, x, ei, j)
            assert _close(gin[ei, j], fd)


@pytest.mark.parametrize(
    "kind", ["group_lasso", "ratio_lasso", "nuclear", "spread_variance", "l1"]
)
def test_regularizer_gradients_match_fd(kind):
    rng = np.random.default_rng(hash(kind) % (1 << 30))
    for trial in range(3):
        h = 6
        net = init_network(h, 2, 2, seed=trial)
        # keep test points generic: no zero rows, distinct singular values,
        # entries away from zero for the l1 kink
        for w in net.layers:
            w += rng.normal(size=w.shape)
            w[np.abs(w) < 0.05] += 0.1
        spec = RegularizerSpec(kind, strength=0.7, top_fraction=0.4)
        _, grads = regularizer_value_grad(spec, net)

        def value():
            return regularizer_value_grad(spec, net)[0]

        for li, w in enumerate(net.layers):
            for _ in range(6):
                i = int(rng.integers(h))
                j = int(rng.integers(h))
                fd = _central_diff(value, w, i, j)
                assert _close(grads[li][i, j], fd), (kind, li, i, j)
