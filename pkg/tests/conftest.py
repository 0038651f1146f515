"""Session-scoped experiment fixtures shared by the acceptance suite."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

import _experiments as ex  # noqa: E402
import comprobe as cp  # noqa: E402


@pytest.fixture(scope="session")
def blob_data():
    return ex.make_data()


@pytest.fixture(scope="session")
def nuclear_grid(blob_data):
    train_ds, _ = blob_data
    return ex.train_grid(train_ds, "nuclear", ex.NUCLEAR_GRID)


@pytest.fixture(scope="session")
def nuclear_eval(blob_data, nuclear_grid):
    """Per-cell metrics of the nuclear grid under the l2 PGD attack."""
    _, test_ds = blob_data
    k = cp.default_k(ex.DIM)
    rows = []
    for cell in nuclear_grid:
        out = cp.evaluate_robustness(cell.net, test_ds, ex.l2_attack_config(seed=cell.seed))
        report = cp.lipschitz_bound_2(cell.net)
        rhs = cp.adversarial_risk_bound(
            cell.net, None, test_ds.x, test_ds.y, ex.PGD_L2_DELTA, "two",
            lipschitz_report=report,
        )
        rows.append(
            dict(
                strength=cell.strength,
                seed=cell.seed,
                net=cell.net,
                eps_sigma=cp.profile(cell.net.layers[0], "spectral", k).epsilon,
                clean=out.clean_accuracy,
                robust=out.robust_accuracy,
                amplification=float(np.nanmean(out.amplification)),
                sv_mass=float(np.nanmean(out.sv_topk_mass)),
                max_secant=float(np.nanmax(out.secants)),
                adv_risk=out.adversarial_loss,
                gap=out.gap,
                lipschitz=report.lipschitz_bound,
                risk_rhs=rhs,
                uae_fooling=ex.uae_fooling(cell.net, test_ds, cell.seed),
            )
        )
    return rows


@pytest.fixture(scope="session")
def group_lasso_eval(blob_data):
    """Row-sparsity grid evaluated under the scaled l-inf PGD attack."""
    train_ds, test_ds = blob_data
    delta = ex.linf_delta(train_ds)
    cells = ex.train_grid(train_ds, "group_lasso", ex.GROUP_LASSO_GRID)
    k = cp.default_k(ex.DIM)
    rows = []
    for cell in cells:
        out = cp.evaluate_robustness(cell.net, test_ds, ex.linf_attack_config(delta, seed=cell.seed))
        report = cp.lipschitz_bound_inf(cell.net)
        rows.append(
            dict(
                strength=cell.strength,
                seed=cell.seed,
                eps_nu=cp.profile(cell.net.layers[0], "row", k).epsilon,
                clean=out.clean_accuracy,
                robust=out.robust_accuracy,
                max_secant=float(np.nanmax(out.secants)),
                lipschitz=report.lipschitz_bound,
                delta=delta,
            )
        )
    return rows


@pytest.fixture(scope="session")
def frobenius_eval(blob_data):
    """Norm-scale grid (no compressibility regularizer) under l2 attacks."""
    train_ds, test_ds = blob_data
    cells = ex.train_frobenius_grid(train_ds)
    rows = []
    for cell in cells:
        out = cp.evaluate_robustness(cell.net, test_ds, ex.l2_attack_config(seed=cell.seed))
        rows.append(
            dict(
                strength=cell.strength,
                seed=cell.seed,
                robust=out.robust_accuracy,
                uae_fooling=ex.uae_fooling(cell.net, test_ds, cell.seed),
            )
        )
    return rows


@pytest.fixture(scope="session")
def two_layer_compressible(blob_data):
    train_ds, _ = blob_data
    net, _ = ex.train_model(
        train_ds, (cp.RegularizerSpec("nuclear", 1e-2),), seed=0, depth=2
    )
    return net
