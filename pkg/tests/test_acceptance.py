"""Acceptance criteria, one test per criterion.

Each test evaluates every clause of its criterion at the stated tolerance,
prints one PASS/FAIL line and then asserts. Trial counts marked DESK are
reduced from the stated counts to fit a single-core run; the thresholds
are not changed.
"""

import itertools
import math
import warnings

import numpy as np
import pytest

from bsskit.bench import ExperimentSpec, accuracy_surface, available_cores, measure_speedup, repro_protocol
from bsskit.ica import (
    IcaConfig,
    SparseConfig,
    decouple_h,
    emk_row_gradient,
    row_cost,
    run_ica_emk,
    run_sparse_ica,
    sparse_row_gradient,
    whiten,
    whitening_matrix,
)
from bsskit.iva import IvaConfig, IvaState, estimates, iva_row_gradient, run_iva_aggd, scv_extract
from bsskit.maxent import MaxEntDensity, MeasuringFunctionSet, entropy, fit_emk, solve_lagrange
from bsskit.metrics import assign, gini, isi, isi_avg, isi_jnt, isr
from bsskit.mggd import (
    MggdParams,
    estimate_joint,
    estimate_scatter_fp_eps,
    estimate_scatter_mlfp,
    estimate_scatter_rafp,
    fp_map,
    mggd_logpdf,
    nonexpansivity_probe,
    riem_average,
    riem_distance,
    strong_convexity_check,
)
from bsskit.mggd.estimators import sample_scatter, trace_normalize
from bsskit.mggd.spd import random_spd
from bsskit.sources import derive_seed, ggd_mixture_problem, ggd_problem, make_ar1_scatter, mggd_scv_stack, sample_mggd

from conftest import ACCEPTANCE_LINES

# DESK trial counts (stated count in the comment)
C7_TRIALS = 50  # 50
C8_WIN_TRIALS = 16  # 100
C8_TREND_TRIALS = 3
C10_TRIALS = 10  # 50
C10_K1_TRIALS = 3
C11_SUBJECTS = 2


def report(num, title, checks, detail=""):
    ok = all(bool(v) for v in checks.values())
    parts = ", ".join(f"{k}={'ok' if v else 'NO'}" for k, v in checks.items())
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {title} [{parts}]" + (f" {detail}" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def mggd_data(beta, t=10_000, k=3, sigma=0.5, seed=0):
    return sample_mggd(MggdParams(make_ar1_scatter(k, sigma), beta, 1.0), t, seed)


def frob(scatter, k=3, sigma=0.5):
    return float(np.linalg.norm(trace_normalize(scatter) - trace_normalize(make_ar1_scatter(k, sigma))))


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def fd_gradient(f, w, h=1e-6):
    return np.array([(f(w + e) - f(w - e)) / (2 * h) for e in h * np.eye(w.size)])


def isr_of(w_white, dw, mixing):
    return isr(w_white @ whitening_matrix(dw) @ mixing, normalized=True)


# ---------------------------------------------------------------------------


def test_c01_gaussian_closure():
    y = mggd_data(1.0, 2000, seed=3)
    c = sample_scatter(y)
    ra = estimate_scatter_rafp(y, 1.0, init=np.eye(3))
    logp0 = float(mggd_logpdf(np.zeros((2, 1)), MggdParams(np.eye(2), 1.0, 1.0))[0])
    gauss = MeasuringFunctionSet(globals=("1", "x", "x2"))
    lam = solve_lagrange(gauss, [1.0, 0.0, 1.0])
    dens = MaxEntDensity(gauss, lam, [1.0, 0.0, 1.0], (-10.0, 10.0))
    report(
        1,
        "Gaussian closure chain",
        {
            "fp_map_fixes_cov": np.max(np.abs(fp_map(c, y, 1.0) - c)) < 1e-10,
            # the second step only confirms the first
            "rafp_one_iteration": ra.converged and ra.iterations == 2,
            "logpdf_origin": abs(logp0 + math.log(2 * math.pi)) < 1e-12,
            "maxent_lambda": np.max(np.abs(lam - [1 - 0.5 * math.log(2 * math.pi), 0.0, -0.5])) < 1e-6,
            "entropy": abs(entropy(dens) - 0.5 * math.log(2 * math.pi * math.e)) < 1e-5,
        },
    )


@pytest.mark.slow
def test_c02_rafp_vs_mlfp():
    checks, detail = {}, []
    for beta in (2.0, 4.0, 8.0):
        conv, wins = 0, 0
        for t in range(100):
            y = mggd_data(beta, seed=derive_seed(2, beta, t))
            ra = estimate_scatter_rafp(y, beta)
            ml = estimate_scatter_mlfp(y, beta)
            conv += ra.converged
            wins += frob(ra.params.scatter) < frob(ml.params.scatter)
        checks[f"conv_b{beta:g}"] = conv >= 95
        checks[f"win_b{beta:g}"] = wins >= 90
        detail.append(f"b={beta:g}: conv {conv}/100 wins {wins}/100")
    both, ratios = 0, []
    for t in range(100):
        y = mggd_data(0.5, seed=derive_seed(2, 0.5, t))
        ra = estimate_scatter_rafp(y, 0.5)
        ml = estimate_scatter_mlfp(y, 0.5)
        both += ra.converged and ml.converged
        ratios.append(frob(ra.params.scatter) / frob(ml.params.scatter))
    lo, hi = float(np.min(ratios)), float(np.max(ratios))
    checks["b0.5_both_converge"] = both == 100
    checks["b0.5_ratio_in_[0.5,2]"] = 0.5 <= lo and hi <= 2.0
    detail.append(f"b=0.5: both {both}/100 ratio [{lo:.3f}, {hi:.3f}]")
    report(2, "RA-FP vs ML-FP at large shape", checks, "; ".join(detail))


def test_c03_fp_eps_non_fix():
    wins = 0
    for t in range(50):
        y = mggd_data(4.0, seed=derive_seed(3, t))
        ra = estimate_scatter_rafp(y, 4.0)
        fe = estimate_scatter_fp_eps(y, 4.0, 0.01)
        wins += frob(fe.params.scatter) > frob(ra.params.scatter)
    report(3, "eps-perturbation does not fix ML-FP", {"win_rate>=0.9": wins >= 45}, f"fp-eps worse in {wins}/50")


@pytest.mark.slow
def test_c04_shape_consistency():
    checks, detail = {}, []
    for beta in (0.5, 1.0, 2.0, 4.0):
        hat = {}
        for t_len in (1000, 10_000):
            hat[t_len] = np.array(
                [estimate_joint(mggd_data(beta, t_len, seed=derive_seed(4, beta, t_len, t))).params.shape for t in range(100)]
            )
        within = int(np.sum(np.abs(hat[10_000] - beta) <= 0.15 * beta))
        v1, v2 = float(np.var(hat[1000])), float(np.var(hat[10_000]))
        checks[f"within15_b{beta:g}"] = within >= 80
        checks[f"var_drops_b{beta:g}"] = v2 < v1
        detail.append(f"b={beta:g}: {within}/100 var {v1:.2e}->{v2:.2e}")
    report(4, "shape estimator consistency", checks, "; ".join(detail))


def test_c05_riemannian_suite():
    rng = np.random.default_rng(5)
    sym = tri = ident = cong = geo = True
    for _ in range(200):
        p, q, r = (random_spd(3, rng) for _ in range(3))
        dpq = riem_distance(p, q)
        sym &= abs(dpq - riem_distance(q, p)) < 1e-10
        tri &= riem_distance(p, r) <= dpq + riem_distance(q, r) + 1e-9
        ident &= riem_distance(p, p) < 1e-12 and dpq > 0
        a = rng.standard_normal((3, 3)) + 3 * np.eye(3)
        cong &= abs(riem_distance(a @ p @ a.T, a @ q @ a.T) - dpq) < 1e-8
        t = rng.uniform()
        geo &= abs(riem_distance(p, riem_average(p, q, t)) - t * dpq) < 1e-8
    violations = sum(
        not strong_convexity_check(random_spd(3, rng), random_spd(3, rng), random_spd(3, rng), rng.uniform(), slack=1e-9)
        for _ in range(1000)
    )
    probe = {b: float(nonexpansivity_probe(mggd_data(b, 1000, seed=31), b, [0.45, 0.5, 0.55]).max()) for b in (4.0, 8.0)}
    report(
        5,
        "Riemannian geometry suite",
        {
            "metric_axioms": sym and tri and ident,
            "congruence": cong,
            "geodesic_length": geo,
            "strong_convexity": violations == 0,
            "nonexpansive_b4": probe[4.0] <= 0.0,
            "nonexpansive_b8": probe[8.0] <= 0.0,
        },
        f"convexity violations {violations}/1000, probe max b=4 {probe[4.0]:.3g} b=8 {probe[8.0]:.3g}",
    )


def test_c06_gradient_oracles():
    rng = np.random.default_rng(6)
    errs = {"ica_emk": [], "sparse": [], "iva": []}
    for _ in range(10):
        x = rng.laplace(size=(4, 3000))
        w = rng.standard_normal((4, 4))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        n = int(rng.integers(4))
        dens = fit_emk(w[n] @ x)
        h = decouple_h(w, n)
        fd = fd_gradient(lambda v: row_cost(x, v, h, dens), w[n].copy())
        errs["ica_emk"].append(rel_err(emk_row_gradient(x, w, n, dens), fd))
        lam, eps = 10 ** rng.uniform(-3, 1), 10 ** rng.uniform(-3, 0)
        fd = fd_gradient(lambda v: row_cost(x, v, h, dens, lam, eps), w[n].copy(), h=1e-7)
        errs["sparse"].append(rel_err(sparse_row_gradient(x, w, n, dens, lam, eps), fd))

        kd = 3
        stack = rng.laplace(size=(kd, 3, 2000))
        wv = rng.standard_normal((kd, 3, 3))
        wv /= np.linalg.norm(wv, axis=2, keepdims=True)
        params = [MggdParams(make_ar1_scatter(kd, rng.uniform(0.1, 0.7)), rng.uniform(0.4, 3.0), rng.uniform(0.5, 2.0)) for _ in range(3)]
        state = IvaState(wv, params)
        i, k = int(rng.integers(3)), int(rng.integers(kd))
        p = params[i]
        hk = decouple_h(wv[k], i)
        si = np.linalg.inv(p.scatter)

        def iva_row(v):
            y = scv_extract(estimates(stack, wv), i).copy()
            y[k] = v @ stack[k]
            u = np.einsum("iv,ij,jv->v", y, si, y)
            return 0.5 * np.mean((u / p.scale) ** p.shape) - math.log(abs(hk @ v))

        fd = fd_gradient(iva_row, wv[k][i].copy())
        errs["iva"].append(rel_err(iva_row_gradient(stack, state, i, k), fd))
    worst = {k: max(v) for k, v in errs.items()}
    report(6, "gradient oracles", {k: v < 1e-4 for k, v in worst.items()}, " ".join(f"{k} {v:.1e}" for k, v in worst.items()))


@pytest.mark.slow
def test_c07_ica_trends():
    means, wins = {}, 0
    for t_len in (1000, 10_000):
        vals = []
        for tr in range(C7_TRIALS):
            p = ggd_mixture_problem(8, t_len, seed=derive_seed(7, tr))
            z, dw = whiten(p.observations)
            e = isr_of(run_ica_emk(z, IcaConfig(density="emk", seed=tr)).w, dw, p.mixing)
            vals.append(e)
            if t_len == 10_000:
                q = isr_of(run_ica_emk(z, IcaConfig(density="fixed_tanh", seed=tr)).w, dw, p.mixing)
                wins += e < q
        means[t_len] = float(np.mean(vals))
    report(
        7,
        "ICA separation trends",
        {"isr_decreasing_in_T": means[10_000] < means[1000], "emk_beats_tanh>=0.75": wins >= 0.75 * C7_TRIALS},
        f"mean ISR {means[1000]:.3g} -> {means[10_000]:.3g}, EMK wins {wins}/{C7_TRIALS}",
    )


def _sparse_isr(n, t_len, beta, tr, lams=(0.0, 1e4)):
    p = ggd_problem(n, t_len, beta, seed=derive_seed(8, n, t_len, beta, tr))
    z, dw = whiten(p.observations)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return [isr_of(run_sparse_ica(z, SparseConfig(IcaConfig(seed=tr), lam=lam, eps=1e-2)).w, dw, p.mixing) for lam in lams]


@pytest.mark.slow
def test_c08_sparse_synergy():
    pairs = {}
    for beta in (0.1, 0.5):
        pairs[beta] = np.array([_sparse_isr(20, 1000, beta, tr) for tr in range(C8_WIN_TRIALS)])
    win = {b: float(np.mean(v[:, 1] < v[:, 0])) for b, v in pairs.items()}
    t10k = np.array([_sparse_isr(20, 10_000, 0.1, tr, (1e4,))[0] for tr in range(C8_TREND_TRIALS)])
    t1k = pairs[0.1][:C8_TREND_TRIALS, 1]
    n10 = np.array([_sparse_isr(10, 1000, 0.1, tr, (1e4,))[0] for tr in range(C8_WIN_TRIALS)])
    n20 = pairs[0.1][:, 1]
    report(
        8,
        "SparseICA synergy",
        {
            "win_b0.1>=0.75": win[0.1] >= 0.75,
            "win_b0.5<win_b0.1": win[0.5] < win[0.1],
            "isr_decreasing_in_T": t10k.mean() < t1k.mean(),
            "no_gain_N10_to_N20": n20.mean() >= n10.mean(),
        },
        f"win b=0.1 {win[0.1]:.2f} b=0.5 {win[0.5]:.2f} ({C8_WIN_TRIALS} trials); "
        f"ISR T=1e3 {t1k.mean():.3g} T=1e4 {t10k.mean():.3g}; N=10 {n10.mean():.3g} N=20 {n20.mean():.3g}",
    )


def test_c09_metric_identities():
    rng = np.random.default_rng(9)
    pd = np.eye(5)[rng.permutation(5)] @ np.diag(rng.uniform(0.5, 2.0, 5))
    g1, g2 = np.diag([1.0, 2.0, 3.0]), np.eye(3)[[1, 0, 2]]
    one_hot = np.zeros(4)
    one_hot[1] = 3.0
    optimal = True
    for n in range(2, 7):
        for _ in range(100):
            s = rng.random((n, n))
            best = max(sum(s[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
            optimal &= abs(s[np.arange(n), assign(s)].sum() - best) < 1e-12
    report(
        9,
        "metric unit identities",
        {
            "isi_perm_diag": isi(pd) == 0.0,
            "isi_all_ones": abs(isi(np.ones((4, 4))) - 1.0) < 1e-15,
            "misaligned_avg0": isi_avg([g1, g2]) == 0.0,
            "misaligned_jnt>0": isi_jnt([g1, g2]) > 0,
            "gini_const": abs(gini(np.full(9, 2.0))) < 1e-15,
            "gini_one_hot": abs(gini(one_hot) - 0.75) < 1e-15,
            "assignment_optimal": optimal,
        },
    )


def _iva_jisi(n, kd, t_len, method, tr):
    d = mggd_scv_stack(n, kd, t_len, seed=derive_seed(10, n, kd, t_len, tr))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        st = run_iva_aggd(d.observations, IvaConfig(method=method, seed=tr, init="fastica"))
    return isi_jnt([st.w[k] @ d.mixing[k] for k in range(kd)])


@pytest.mark.slow
def test_c10_iva_trend():
    res = {(t, m): np.array([_iva_jisi(10, 3, t, m, tr) for tr in range(C10_TRIALS)]) for t in (1000, 10_000) for m in ("mom", "rafp")}
    wins = int(np.sum(res[(10_000, "rafp")] < res[(10_000, "mom")]))
    gaps = []
    for tr in range(C10_K1_TRIALS):
        # both runs are taken to convergence so the comparison is between fixed points
        d = mggd_scv_stack(10, 1, 10_000, seed=derive_seed(10, "k1", tr))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            st = run_iva_aggd(d.observations, IvaConfig(method="rafp", seed=tr, tol=1e-7, max_iter=1000))
            z, dw = whiten(d.observations[0])
            ic = run_ica_emk(z, IcaConfig(density="ggd", seed=tr, tol=1e-10, max_iter=1000), w0=np.eye(10))
        a = isr(st.w[0] @ d.mixing[0], normalized=True)
        b = isr_of(ic.w, dw, d.mixing[0])
        gaps.append(abs(a - b) / b)
    m = {k: float(v.mean()) for k, v in res.items()}
    report(
        10,
        "IVA trend",
        {
            "jisi_decreasing_mom": m[(10_000, "mom")] < m[(1000, "mom")],
            "jisi_decreasing_rafp": m[(10_000, "rafp")] < m[(1000, "rafp")],
            "rafp_beats_mom>=0.7": wins >= 0.7 * C10_TRIALS,
            "k1_within_10pct": max(gaps) <= 0.10,
        },
        f"joint ISI mom {m[(1000, 'mom')]:.3g}->{m[(10_000, 'mom')]:.3g} rafp {m[(1000, 'rafp')]:.3g}->{m[(10_000, 'rafp')]:.3g}; "
        f"rafp wins {wins}/{C10_TRIALS}; K=1 max gap {max(gaps):.3%}",
    )


def _fmri_spec(scenario, lams):
    return ExperimentSpec(
        name=f"c11-{scenario}",
        generator={"op": "fmri", "params": {"scenario_id": scenario, "image_side": 50, "n_subjects": C11_SUBJECTS}},
        algorithm={"op": "repro", "params": {}},
        trials=1,
        master_seed=11,
        sweep={"lam": list(lams), "eps": [1.0]},
    )


@pytest.mark.slow
def test_c11_reproducibility_protocol():
    lams = [1e-8, 1e-4, 1.0, 1e4]
    out = {}
    for sc, grid in (("all_sparse_no_overlap", lams), ("mixed_sparsity_overlap", [1e-8, 1e4])):
        spec = _fmri_spec(sc, grid)
        _, rep = repro_protocol(spec)
        _, acc = accuracy_surface(spec)
        out[sc] = (rep, acc)

    def cell(res, metric, lam):
        return res.mean(metric, {"lam": lam, "eps": 1.0})

    rep1, acc1 = out["all_sparse_no_overlap"]
    rep3, acc3 = out["mixed_sparsity_overlap"]
    adv1 = cell(acc1, "corr", 1e4) - cell(acc1, "corr", 1e-8)
    adv3 = cell(acc3, "corr", 1e4) - cell(acc3, "corr", 1e-8)
    r1 = [cell(rep1, "r1", lam) for lam in lams]
    r2 = [cell(rep1, "r2", lam) for lam in lams]
    steps = np.diff(r1)
    monotone = bool(np.all(steps > 0) or np.all(steps < 0))
    close = all(abs(a - b) <= 0.1 * max(abs(a), abs(b)) for a, b in zip(r1, r2))
    report(
        11,
        "reproducibility protocol",
        {
            "s1_accuracy_high_lambda": cell(acc1, "corr", 1e4) > cell(acc1, "corr", 1e-8),
            "s1_repro_high_lambda": cell(rep1, "repro_corr", 1e4) > cell(rep1, "repro_corr", 1e-8),
            "s3_advantage_contracts": adv3 < adv1,
            "r_monotone_in_lambda": monotone,
            "r1_r2_within_10pct": close,
        },
        f"accuracy gain s1 {adv1:.3g} s3 {adv3:.3g}; r1 {['%.4g' % v for v in r1]} r2 {['%.4g' % v for v in r2]}",
    )


def test_c12_parallel_speedup():
    cores = available_cores()
    if cores < 4:
        line = f"SKIP criterion 12: parallel speedup [needs >= 4 cores, {cores} available]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        pytest.skip(line)
    counts = [1, 2, 4] + ([cores] if cores > 4 else [])
    rows = measure_speedup(counts)
    by = {(r["n_sources"], r["cores"]): r for r in rows}
    top = max(counts)
    report(
        12,
        "parallel speedup",
        {
            "speedup<=cores": all(r["speedup"] <= r["cores"] for r in rows),
            "N32>=2xN2": by[(32, top)]["speedup"] >= 2 * by[(2, top)]["speedup"],
            "identical": all(r["identical"] for r in rows),
        },
        f"N=2 {by[(2, top)]['speedup']:.2f} N=32 {by[(32, top)]['speedup']:.2f} at {top} cores",
    )
