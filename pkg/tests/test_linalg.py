import numpy as np
import pytest

from comprobe import (
    SvdFactors,
    frobenius_norm,
    op_norm_2,
    op_norm_2_power,
    op_norm_inf,
    svd,
)
from comprobe.errors import ShapeMismatch


def test_frobenius_identity():
    assert frobenius_norm(np.eye(3)) == pytest.approx(np.sqrt(3.0), abs=1e-12)


def test_frobenius_zero():
    assert frobenius_norm(np.zeros((2, 5))) == 0.0


def test_frobenius_hand_case():
    assert frobenius_norm([[3.0, 4.0]]) == pytest.approx(5.0, abs=1e-12)


def test_op_norm_inf_identity_and_zero():
    assert op_norm_inf(np.eye(7)) == 1.0
    assert op_norm_inf(np.zeros((3, 3))) == 0.0


def test_op_norm_inf_hand_case():
    assert op_norm_inf([[10.0, 2.0], [1.0, 1.0]]) == 12.0


def test_svd_diagonal():
    f = svd(np.diag([3.0, 1.0]))
    assert np.allclose(f.s, [3.0, 1.0])


def test_svd_rank_one_closed_form():
    rng = np.random.default_rng(0)
    u = rng.normal(size=6)
    v = rng.normal(size=4)
    f = svd(np.outer(u, v))
    expected = np.linalg.norm(u) * np.linalg.norm(v)
    assert f.s[0] == pytest.approx(expected, rel=1e-12)
    assert np.all(f.s[1:] < 1e-12 * expected)


def test_svd_matches_eigensolver_oracle():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(8, 8))
    f = svd(w)
    eigs = np.sort(np.linalg.eigvalsh(w.T @ w))[::-1]
    assert np.allclose(np.square(f.s), eigs, atol=1e-8)


def test_svd_invariants_random():
    rng = np.random.default_rng(2)
    for rows, cols in [(5, 5), (7, 3), (3, 7)]:
        w = rng.normal(size=(rows, cols))
        f = svd(w)
        r = min(rows, cols)
        assert np.max(np.abs(f.u.T @ f.u - np.eye(r))) <= 1e-10
        assert np.max(np.abs(f.v.T @ f.v - np.eye(r))) <= 1e-10
        assert np.all(np.diff(f.s) <= 0) and np.all(f.s >= 0)
        err = frobenius_norm(f.reconstruct() - w)
        assert err <= 1e-8 * max(1.0, frobenius_norm(w))


def test_svd_sign_convention_deterministic():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(6, 6))
    f1, f2 = svd(w), svd(w)
    assert np.array_equal(f1.u, f2.u) and np.array_equal(f1.v, f2.v)
    for i in range(f1.v.shape[1]):
        col = f1.v[:, i]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        assert col[nz[0]] >= 0


def test_op_norm_2_examples():
    assert op_norm_2(np.eye(4)) == pytest.approx(1.0, abs=1e-12)
    assert op_norm_2(np.diag([3.0, 0.0, 0.0, 0.0])) == pytest.approx(3.0, abs=1e-12)


def test_op_norm_2_routes_agree():
    rng = np.random.default_rng(4)
    for _ in range(25):
        w = rng.normal(size=(6, 6))
        via_svd = svd(w).s[0]
        assert op_norm_2(w) == pytest.approx(via_svd, abs=1e-8)
        assert op_norm_2_power(w) == pytest.approx(via_svd, rel=1e-8)


def test_norm_inequality_chain_many_random():
    # op2 <= fro <= sqrt(min(r,c)) * op2
    rng = np.random.default_rng(5)
    for i in range(1000):
        rows, cols = rng.integers(1, 9, size=2)
        w = rng.normal(size=(rows, cols)) * rng.lognormal()
        two = op_norm_2(w)
        fro = frobenius_norm(w)
        assert two <= fro + 1e-9 * max(1.0, fro)
        assert fro <= np.sqrt(min(rows, cols)) * two + 1e-9 * max(1.0, fro)


def test_op_norm_inf_absolute_homogeneity():
    rng = np.random.default_rng(6)
    for _ in range(50):
        w = rng.normal(size=(5, 5))
        alpha = rng.normal() * 10
        lhs = op_norm_inf(alpha * w)
        rhs = abs(alpha) * op_norm_inf(w)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_rejects_bad_inputs():
    with pytest.raises(ShapeMismatch):
        frobenius_norm(np.array([1.0, 2.0]))
    with pytest.raises(ShapeMismatch):
        op_norm_inf(np.array([[np.nan, 1.0], [0.0, 1.0]]))


def test_truncate_helper():
    f = svd(np.diag([4.0, 2.0, 1.0]))
    t = f.truncate(2)
    assert isinstance(t, SvdFactors)
    assert t.s.shape == (2,) and t.u.shape == (3, 2) and t.v.shape == (3, 2)
