"""Acceptance gate: every release criterion at its stated tolerance.

Each test prints one PASS line after its assertions; trend checks run on
the session-scoped experiment grids from conftest.
"""

import time

import numpy as np
import pytest

import _experiments as ex
import comprobe as cp


RHO_TOL = 1e-9  # rank correlations of small grids land exactly on the
# threshold; the slack only absorbs float representation error


def _avg_by_strength(rows, key):
    strengths = sorted({r["strength"] for r in rows})
    return strengths, [
        float(np.mean([r[key] for r in rows if r["strength"] == s])) for s in strengths
    ]


def _report(criterion, detail):
    print(f"\n[criterion {criterion}] PASS: {detail}")


def test_criterion_01_opnorm_bound_soundness():
    """Both operator-norm bounds dominate the true norms for every k on
    >=1000 random matrices across three entry distributions."""
    t0 = time.time()
    rng = np.random.default_rng(11)
    sizes = (4, 8, 16, 32)
    dists = ("gauss", "lognormal", "pareto")
    per_combo = 84  # 84 * 4 * 3 = 1008 matrices
    checked = 0
    violations = 0
    for h in sizes:
        for dist in dists:
            for _ in range(per_combo):
                if dist == "gauss":
                    w = rng.normal(size=(h, h))
                elif dist == "lognormal":
                    w = rng.lognormal(sigma=1.5, size=(h, h)) * rng.choice([-1.0, 1.0], size=(h, h))
                else:
                    w = rng.pareto(1.5, size=(h, h)) * rng.choice([-1.0, 1.0], size=(h, h))
                ninf = cp.op_norm_inf(w)
                n2 = cp.op_norm_2(w)
                fro = cp.frobenius_norm(w)
                tol = 1e-9 * max(1.0, fro)
                for k_nu in range(1, h + 1):
                    for k_r in range(1, h + 1):
                        if cp.bound_opnorm_inf(w, k_nu, k_r) < ninf - tol:
                            violations += 1
                for k in range(1, h + 1):
                    if cp.bound_opnorm_2(w, k) < n2 - tol:
                        violations += 1
                checked += 1
    assert checked >= 1000
    assert violations == 0
    elapsed = time.time() - t0
    assert elapsed < 60
    _report(1, f"{checked} matrices, all k, zero violations ({elapsed:.1f}s)")


def test_criterion_02_lemma_identities():
    """Strict-compressibility norm identity and the sparsity-index lower
    bound hold over 10^4 random draws each."""
    t0 = time.time()
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(10_000):
        d = int(rng.integers(1, 40))
        theta = rng.standard_t(df=1.8, size=d)
        if not np.any(theta):
            continue
        q = float(rng.choice([1.0, 2.0]))
        k = int(rng.integers(0, d + 1))
        norm = np.sum(np.abs(theta)) if q == 1 else float(np.linalg.norm(theta))
        defect = cp.strict_norm_identity_check(theta, q, k)
        assert defect <= 1e-10 * norm
        worst = max(worst, defect / norm if norm else 0.0)

    pq_violations = 0
    for _ in range(10_000):
        d = int(rng.integers(2, 40))
        theta = rng.standard_t(df=1.8, size=d)
        if not np.any(theta):
            continue
        p = float(rng.uniform(1.0, 2.5))
        q = p + float(rng.uniform(0.1, 2.5))
        k = int(rng.integers(1, d + 1))
        eps = cp.residual_ratio(theta, q, k)
        lower = 1.0 - eps - (k / d) ** (1.0 / p - 1.0 / q)
        if lower > cp.pq_index(theta, p, q) + 1e-9:
            pq_violations += 1
    assert pq_violations == 0
    elapsed = time.time() - t0
    assert elapsed < 30
    _report(2, f"identity defect <= {worst:.2e}, sparsity-index bound zero violations ({elapsed:.1f}s)")


def test_criterion_03_alignment_correctness():
    """Greedy alignment never beats exhaustive enumeration, stays within
    0.9x of it in >=95% of pairs, and the normalized max never exceeds 1."""
    t0 = time.time()
    rng = np.random.default_rng(13)
    for align in (cp.alignment_inf, cp.alignment_2):
        competitive = 0
        n_pairs = 200
        for i in range(n_pairs):
            h = int(rng.integers(4, 11))
            a = rng.normal(size=(h, h)) * rng.lognormal(sigma=0.5)
            b = rng.normal(size=(h, h))
            k = int(rng.integers(1, h + 1))
            exact = align(a, b, k, cp.SearchConfig(exact_threshold=10))
            greedy = align(a, b, k, cp.SearchConfig(exact_threshold=0, restarts=16, seed=i))
            assert exact.raw_max <= 1 + 1e-9
            assert greedy.raw_max <= 1 + 1e-9
            assert greedy.raw_max <= exact.raw_max + 1e-12
            if greedy.raw_max >= 0.9 * exact.raw_max:
                competitive += 1
        assert competitive >= 0.95 * n_pairs
    elapsed = time.time() - t0
    assert elapsed < 300
    _report(3, f"2x200 pairs, greedy <= exact, >=95% within 0.9x ({elapsed:.1f}s)")


def test_criterion_04_parsing_set_exactness():
    """The interface-selection product equals a brute-force enumeration of
    every independent set, with identical floating-point values."""
    t0 = time.time()
    rng = np.random.default_rng(14)
    for _ in range(500):
        n = int(rng.integers(0, 12))
        factors = list(rng.uniform(0.0, 1.4, size=n))
        if n and rng.uniform() < 0.25:
            factors[int(rng.integers(0, n))] = 0.0
        best = 1.0
        for mask in range(1 << n):
            if mask & (mask << 1):
                continue
            prod = 1.0
            for i in range(n):
                if mask >> i & 1:
                    prod = prod * factors[i]
            best = min(best, prod)
        _, product = cp.optimal_parsing_set(factors)
        assert product == best
    elapsed = time.time() - t0
    assert elapsed < 10
    _report(4, f"500 chains up to length 11, exact equality ({elapsed:.1f}s)")


def test_criterion_05_remainder_convergence():
    """Tail remainders shrink monotonically and drop below 1e-3 once the
    tail/leader ratio is under 1e-6."""
    t0 = time.time()
    k = 2
    head = np.array([5.0, 3.0, 0.0, 0.0, 0.0, 0.0])
    tail = np.array([0.0, 0.0, 1.0, 0.7, 0.4, 0.2])
    partner = np.array([8.0, 6.0, 0.0, 0.0, 0.0, 0.0])
    prev_inf, prev_two = np.inf, np.inf
    hit_threshold = False
    for t in np.geomspace(1e-1, 1e-8, 22):
        vec = head + t * tail
        r_inf = cp.remainder_inf(vec, partner, k)
        r_two = cp.remainder_2(vec, partner, k)
        assert r_inf <= prev_inf + 1e-15
        assert r_two <= prev_two + 1e-15
        prev_inf, prev_two = r_inf, r_two
        if vec[k] / vec[0] < 1e-6:
            hit_threshold = True
            assert r_inf < 1e-3
            assert r_two < 1e-3
    assert hit_threshold
    elapsed = time.time() - t0
    assert elapsed < 10
    _report(5, f"monotone, below 1e-3 past the 1e-6 tail ratio ({elapsed:.1f}s)")


def test_criterion_06_lipschitz_and_risk_soundness(nuclear_eval):
    """On every trained grid model the worst PGD secant stays below the
    network bound and the PGD risk below the certified risk bound."""
    secant_viol = sum(
        1 for r in nuclear_eval if r["max_secant"] > r["lipschitz"] * (1 + 1e-9)
    )
    risk_viol = sum(1 for r in nuclear_eval if r["adv_risk"] > r["risk_rhs"] + 1e-9)
    assert secant_viol == 0
    assert risk_viol == 0
    _report(6, f"{len(nuclear_eval)} models, zero secant / risk violations")


def test_criterion_07_gradient_oracle():
    """Analytic gradients of the loss and of every penalty match central
    finite differences on 20 random networks."""
    t0 = time.time()
    rng = np.random.default_rng(15)
    step, rel_tol, abs_floor = 1e-5, 1e-4, 1e-6
    reg_kinds = ("group_lasso", "ratio_lasso", "nuclear", "spread_variance", "l1")

    def central(fn, arr, idx):
        old = arr[idx]
        arr[idx] = old + step
        up = fn()
        arr[idx] = old - step
        down = fn()
        arr[idx] = old
        return (up - down) / (2 * step)

    def close(analytic, numeric):
        return abs(analytic - numeric) <= max(abs_floor, rel_tol * abs(numeric))

    for trial in range(20):
        depth = int(rng.integers(0, 4))
        h = int(rng.integers(4, 17))
        classes = int(rng.choice([2, 2, 4]))
        net = None
        for _ in range(60):  # regenerate until away from ReLU kinks
            cand = cp.init_network(h, depth, classes, seed=int(rng.integers(1 << 30)))
            for w in cand.layers:
                w += rng.normal(size=w.shape) * 0.3
            x = rng.normal(size=(5, h)) * 1.5
            y = rng.integers(0, classes, size=5)
            z, ok = x, True
            for w in cand.layers:
                pre = z @ w.T
                if np.min(np.abs(pre)) < 1e-3:
                    ok = False
                    break
                z = np.maximum(pre, 0.0)
            if ok:
                net = cand
                break
        assert net is not None
        _, grads, gin = cp.loss_and_grads(net, x, y)

        def mean_loss():
            return float(np.mean(cp.example_losses(net, x, y)))

        for li, w in enumerate(net.layers):
            i, j = int(rng.integers(h)), int(rng.integers(h))
            assert close(grads.layers[li][i, j], central(mean_loss, w, (i, j)))
        flat = net.head.reshape(-1)
        i = int(rng.integers(flat.size))
        assert close(grads.head.reshape(-1)[i], central(mean_loss, flat, (i,)))
        ei, j = int(rng.integers(x.shape[0])), int(rng.integers(h))

        def one_loss():
            return float(cp.example_losses(net, x, y)[ei])

        assert close(gin[ei, j], central(one_loss, x, (ei, j)))

        if depth > 0:
            kind = reg_kinds[trial % len(reg_kinds)]
            for w in net.layers:
                w[np.abs(w) < 0.05] += 0.1
            spec = cp.RegularizerSpec(kind, 0.7, top_fraction=0.4)
            _, rgrads = cp.regularizer_value_grad(spec, net)

            def reg_value():
                return cp.regularizer_value_grad(spec, net)[0]

            li = int(rng.integers(depth))
            i, j = int(rng.integers(h)), int(rng.integers(h))
            assert close(rgrads[li][i, j], central(reg_value, net.layers[li], (i, j))), kind
    elapsed = time.time() - t0
    assert elapsed < 60
    _report(7, f"20 networks, losses and all penalties match finite differences ({elapsed:.1f}s)")


def test_criterion_08_compressibility_robustness_trends(nuclear_eval):
    """Across the nuclear grid (seed-averaged): spectral residual falls,
    l2-PGD robust accuracy falls, representation amplification and top-k
    singular mass of the attack direction rise."""
    strengths, eps = _avg_by_strength(nuclear_eval, "eps_sigma")
    _, robust = _avg_by_strength(nuclear_eval, "robust")
    _, amp = _avg_by_strength(nuclear_eval, "amplification")
    _, mass = _avg_by_strength(nuclear_eval, "sv_mass")
    rho_eps = ex.spearman(strengths, eps)
    rho_rob = ex.spearman(strengths, robust)
    rho_amp = ex.spearman(strengths, amp)
    rho_mass = ex.spearman(strengths, mass)
    assert rho_eps <= -0.8 + RHO_TOL
    assert rho_rob <= -0.8 + RHO_TOL
    assert rho_amp >= 0.8 - RHO_TOL
    assert rho_mass >= 0.8 - RHO_TOL
    _report(
        8,
        f"eps {rho_eps:+.2f}, robust {rho_rob:+.2f}, amplification {rho_amp:+.2f}, "
        f"top-k mass {rho_mass:+.2f} over grid {strengths}",
    )


def test_criterion_09_row_sparsity_counterpart(group_lasso_eval):
    """Row-sparsity regularization degrades l-inf robustness monotonically."""
    strengths, robust = _avg_by_strength(group_lasso_eval, "robust")
    _, eps_nu = _avg_by_strength(group_lasso_eval, "eps_nu")
    rho_rob = ex.spearman(strengths, robust)
    rho_eps = ex.spearman(strengths, eps_nu)
    assert rho_rob <= -0.8 + RHO_TOL
    assert rho_eps <= -0.8  # the intervention does induce row compressibility
    secant_viol = sum(
        1 for r in group_lasso_eval if r["max_secant"] > r["lipschitz"] * (1 + 1e-9)
    )
    assert secant_viol == 0
    _report(
        9,
        f"robust {rho_rob:+.2f}, row residual {rho_eps:+.2f} at delta={group_lasso_eval[0]['delta']:.4f}",
    )


def test_criterion_10_bound_tracks_gap(nuclear_eval):
    """The certified risk bound rank-correlates with the measured
    adversarial robustness gap across all grid models."""
    rhs = [r["risk_rhs"] for r in nuclear_eval]
    gap = [r["gap"] for r in nuclear_eval]
    rho = ex.spearman(rhs, gap)
    assert rho >= 0.6 - RHO_TOL
    _report(10, f"bound-vs-gap spearman {rho:+.2f} over {len(rhs)} models")


def test_criterion_11_uae_dissociation(nuclear_eval, frobenius_eval):
    """Universal-attack fooling grows with spectral compressibility but
    stays flat when only the weight scale grows, even though plain
    robustness still degrades on the scale grid."""
    strengths, uae = _avg_by_strength(nuclear_eval, "uae_fooling")
    rho_uae = ex.spearman(strengths, uae)
    assert rho_uae >= 0.8 - RHO_TOL

    scales, frob_uae = _avg_by_strength(frobenius_eval, "uae_fooling")
    _, frob_rob = _avg_by_strength(frobenius_eval, "robust")
    band = max(frob_uae) - min(frob_uae)
    assert band <= 0.05
    assert frob_rob[-1] < frob_rob[0]
    _report(
        11,
        f"nuclear uae {rho_uae:+.2f}; scale-grid uae band {band:.3f} <= 0.05 while "
        f"robustness fell {frob_rob[0]:.3f} -> {frob_rob[-1]:.3f}",
    )


def test_criterion_12_pruning_retention(blob_data, nuclear_eval, two_layer_compressible):
    """Compressible models prune gracefully: at 30% retention their clean
    drop is at most half the baseline's, and residual-targeted global
    pruning matches or beats uniform layerwise pruning (one crossing
    allowed) at matched parameter ratios."""
    _, test_ds = blob_data

    def mean_drop(strength):
        drops = []
        for r in nuclear_eval:
            if r["strength"] != strength:
                continue
            pruned, _ = cp.eps_targeted_global_prune(r["net"], "spectral", 0.3)
            before = cp.accuracy(r["net"], test_ds.x, test_ds.y)
            after = cp.accuracy(pruned, test_ds.x, test_ds.y)
            drops.append(before - after)
        return float(np.mean(drops))

    base_drop = mean_drop(0.0)
    comp_drop = mean_drop(1e-2)
    assert comp_drop <= 0.5 * base_drop

    net = two_layer_compressible
    crossings = 0
    pairs = []
    for ratio in (0.1, 0.2, 0.3, 0.45):
        lw_net, lw_plan = cp.layerwise_prune(net, "spectral", ratio)
        g_net, _ = cp.eps_targeted_global_prune(
            net, "spectral", min(1.0, lw_plan.achieved_ratio)
        )
        acc_l = cp.accuracy(lw_net, test_ds.x, test_ds.y)
        acc_g = cp.accuracy(g_net, test_ds.x, test_ds.y)
        pairs.append((ratio, acc_l, acc_g))
        if acc_g < acc_l - 1e-12:
            crossings += 1
    assert crossings <= 1
    _report(
        12,
        f"drop {comp_drop:+.4f} <= half of {base_drop:+.4f}; global-vs-layerwise "
        f"crossings {crossings} over {[(r, round(l, 3), round(g, 3)) for r, l, g in pairs]}",
    )
