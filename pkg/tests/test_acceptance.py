"""Acceptance criteria at full size.

Each test records a pass/fail line in ``conftest.ACCEPTANCE``; the terminal
summary prints them in order.  Criteria 2 and 6 fail on the literal
algorithms and are marked strict xfail; the analysis is in the decisions
ledger.
"""

import json
import math
import time
import warnings

import numpy as np
import pytest
from conftest import ACCEPTANCE
from oracles import (
    eps_gauge,
    freegrad_bound,
    hedge_bound,
    lp_gauge,
    psi_reference,
    square_eps_support,
    square_gauge,
    support_scan,
)
from scipy.optimize import minimize_scalar

from pfoco.approx_set import EpsBody, golden_section, sandwich_check, theta_eval, theta_grad, weak_loo
from pfoco.geometry import EuclideanBall, LpBall, cube, verify_strong_convexity
from pfoco.harness import PRESETS, ExperimentConfig, emit, make_adversary, run, sweep, trace_csv
from pfoco.learners import FTL, FreeGrad1D, SleepingExperts, psi
from pfoco.oracles import CountingOracle
from pfoco.rng import Xoshiro256
from pfoco.verify import weakloo_bound

pytestmark = pytest.mark.acceptance


def record(n, passed, detail):
    ACCEPTANCE[n] = (bool(passed), detail)


def bases():
    return {
        "square": (cube(1.0), lambda U: square_gauge(U, 1.0)),
        "l1.5": (LpBall(1.5), lambda U: lp_gauge(U, 1.5, 1.0)),
    }


def reference_support(name, eb, w):
    if name == "square":
        return square_eps_support(w, eb.eps)
    base_g = bases()[name][1]
    return support_scan(lambda U: eps_gauge(U, base_g, eb.eps, eb.base_r), w)[0]


def test_criterion_01_freegrad_formula():
    start = time.perf_counter()
    rel = abs(psi(1, 1, 1) / psi_reference(1, 1, 1) - 1)
    rng = np.random.default_rng(0)
    sym = 0.0
    for s, v, L in zip(rng.uniform(-20, 20, 1000), rng.uniform(1e-3, 50, 1000), rng.uniform(0.1, 5, 1000)):
        sym = max(sym, abs(psi(s, v, L) - psi(-s, v, L)) / psi(s, v, L))
    elapsed = time.perf_counter() - start
    ok = rel <= 1e-12 and sym == 0.0 and elapsed < 1
    record(1, ok, f"psi(1,1,1)={psi(1, 1, 1):.9f} rel err {rel:.1e}, symmetry err {sym:.1e}, {elapsed:.2f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="regret against the origin is unbounded with zero starting variance; see ledger")
def test_criterion_02_freegrad_per_trace_bound():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    L, T = 1.0, 10_000
    violations, worst = 0, math.inf
    for _ in range(100):
        g = rng.uniform(-L, L, T)
        fg = FreeGrad1D(L)
        z_play = np.empty(T)
        for t in range(T):
            z_play[t] = fg.next()
            fg.feed(g[t])
        loss, G, V = float(g @ z_play), float(g.sum()), float(g @ g)
        for z in (0.0, 0.25, -0.25, 1.0, -1.0):
            slack = freegrad_bound(z, V, L) - (loss - z * G)
            worst = min(worst, slack)
            violations += slack < 0
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 10
    record(2, ok, f"{violations} violations of 500, min slack {worst:.3g}, {elapsed:.1f}s")
    assert ok


def test_criterion_03_ftl_bound_on_ball():
    start = time.perf_counter()
    violations, worst, mismatch = 0, math.inf, 0.0
    for i in range(100):
        learner = FTL(CountingOracle(EuclideanBall(1.0)))
        adv = make_adversary("biased-drift", 2, 1.0, Xoshiro256(i))
        T = 1000
        W, Gs = np.empty((T, 2)), np.empty((T, 2))
        for t in range(T):
            W[t] = learner.next()
            Gs[t] = adv.next(W[t])
            learner.feed(Gs[t])
        prefix = np.cumsum(Gs, axis=0)
        norms = np.linalg.norm(prefix, axis=1)
        assert norms.min() > 0
        # FTL on the unit ball in closed form: w_1 = 0, w_t = -G_{t-1}/|G_{t-1}|.
        ref = np.vstack([np.zeros(2), -prefix[:-1] / norms[:-1, None]])
        mismatch = max(mismatch, float(np.abs(ref - W).max()))
        lhs = float(np.sum(Gs * ref)) + norms[-1]
        rhs = float(np.sum(2 * np.sum(Gs**2, axis=1) / norms))
        worst = min(worst, rhs - lhs)
        violations += lhs > rhs
    elapsed = time.perf_counter() - start
    ok = violations == 0 and mismatch <= 1e-12 and elapsed < 30
    record(3, ok, f"{violations} violations, min slack {worst:.3g}, play mismatch {mismatch:.1e}, {elapsed:.1f}s")
    assert ok


def test_criterion_04_sleeping_experts_bound():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    T = 500
    violations, worst = 0, math.inf
    for _ in range(100):
        N = int(rng.integers(2, 33))
        eta = float(rng.uniform(0.05, 1.0))
        starts = rng.integers(0, T, N)
        ends = np.array([rng.integers(s, T) for s in starts])
        starts[0], ends[0] = 0, T - 1
        awake = (np.arange(T)[:, None] >= starts) & (np.arange(T)[:, None] <= ends)
        losses = rng.uniform(0, 1, (T, N))
        hedge = SleepingExperts(N, eta)
        regret = np.zeros(N)
        sq = 0.0
        for t in range(T):
            p = hedge.weights(awake[t])
            assert abs(p.sum() - 1) <= 1e-12 and np.all(p[~awake[t]] == 0)
            mix = float(p @ losses[t])
            sur = hedge.update(awake[t], losses[t], p)
            # A sleeping expert's surrogate loss is the mixture loss.
            assert np.allclose(sur[~awake[t]], mix)
            regret += awake[t] * (mix - losses[t])
            sq += float(np.max(np.abs(sur))) ** 2
            slack = hedge_bound(N, eta, sq) - regret
            worst = min(worst, float(slack.min()))
            violations += int(np.sum(slack < 0))
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 30
    record(4, ok, f"{violations} violations, min slack {worst:.3g}, {elapsed:.1f}s")
    assert ok


def test_criterion_05_restart_algorithm_scaling_on_ball():
    start = time.perf_counter()
    rep = sweep("thm1-ball", seeds=10)
    elapsed = time.perf_counter() - start
    consts = [r["loo_calls_total"] - 2 * r["T"] for r in rep["runs"]]
    fits = rep["fits"]
    ok = all(f["slope"] <= 0.60 and f["r2"] >= 0.9 for f in fits.values())
    ok &= 0 <= min(consts) and max(consts) <= 2 and elapsed < 300
    detail = ", ".join(f"{a} slope {f['slope']:.3f} r2 {f['r2']:.3f}" for a, f in fits.items())
    record(5, ok, f"{detail}, LOO calls 2T+{sorted(set(consts))}, {elapsed:.0f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="the declared modulus is twice what the set supports; see ledger")
def test_criterion_06_sandwich_and_modulus():
    start = time.perf_counter()
    sandwich_ok, modulus_fail = True, []
    for name, (base, _) in bases().items():
        for eps in (0.05, 0.2, 0.5):
            eb = EpsBody(base, eps)
            sandwich_ok &= sandwich_check(eb, 10_000, 0)
            if not verify_strong_convexity(eb, eb.mu_eps, 10_000, 0):
                modulus_fail.append(f"{name}/{eps}")
    elapsed = time.perf_counter() - start
    ok = sandwich_ok and not modulus_fail and elapsed < 60
    record(6, ok, f"sandwich {'ok' if sandwich_ok else 'FAILED'}, modulus rejected at {modulus_fail or 'none'}, {elapsed:.1f}s")
    assert ok


def test_criterion_07_theta_pipeline():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    delta, fine = 1e-8, 1e-12
    names = list(bases())
    worst_support, worst_golden = 0.0, -math.inf
    ok = True
    for _ in range(50):
        name = names[int(rng.integers(2))]
        eb = EpsBody(bases()[name][0], float(rng.uniform(0.05, 0.5)))
        w = rng.standard_normal(2)
        w /= np.linalg.norm(w)
        r2d = eb.base_r**2 * delta

        def theta(g):
            return theta_eval(eb, g, w, fine)[0]

        t_hat = theta(golden_section(eb, w, delta))
        err = abs(math.sqrt(t_hat) - reference_support(name, eb, w))
        gs = np.linspace(0, eb.base.R, 201)
        vals = [theta(g) for g in gs]
        j = int(np.argmin(vals))
        res = minimize_scalar(theta, bounds=(gs[max(j - 1, 0)], gs[min(j + 1, 200)]), method="bounded", options={"xatol": 1e-12})
        excess = t_hat - min(vals[j], res.fun)
        worst_support = max(worst_support, err / (2 * r2d))
        worst_golden = max(worst_golden, excess / r2d)
        ok &= err <= 2 * r2d and excess <= r2d
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    record(7, ok, f"support err / 2r^2 delta {worst_support:.2g}, golden excess / r^2 delta {worst_golden:.2g}, {elapsed:.0f}s")
    assert ok


def test_criterion_08_theta_gradient():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    delta, h = 1e-12, 1e-6
    bodies = [EuclideanBall(1.0), cube(1.0), LpBall(1.5)]
    worst = 0.0
    for _ in range(1000):
        eb = EpsBody(bodies[int(rng.integers(3))], float(rng.uniform(0.05, 0.5)))
        w = rng.standard_normal(2)
        w /= np.linalg.norm(w)
        gamma = float(rng.uniform(10 * h, eb.base.R))
        fd = (theta_eval(eb, gamma + h, w, delta)[0] - theta_eval(eb, gamma - h, w, delta)[0]) / (2 * h)
        tol = max(1e-4, 10 * eb.base_r**2 * delta)
        worst = max(worst, abs(theta_grad(eb, gamma, w, delta) - fd) / tol)
    elapsed = time.perf_counter() - start
    ok = worst <= 1 and elapsed < 60
    record(8, ok, f"max |grad - fd| / tol {worst:.2g}, {elapsed:.1f}s")
    assert ok


def test_criterion_09_weak_loo_accuracy():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    names = list(bases())
    worst_gap, worst_gauge = -math.inf, 0.0
    reported = {}
    for i in range(50):
        name = names[i % 2]
        eps = (0.1, 0.3)[(i // 2) % 2]
        base, base_g = bases()[name]
        eb = EpsBody(base, eps)
        w = rng.standard_normal(2) * rng.uniform(0.1, 10)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            v = weak_loo(eb, w, 1e-8).v_tilde
        gap = (reference_support(name, eb, w) - float(v @ w)) / (eb.base.R * np.linalg.norm(w))
        worst_gap = max(worst_gap, gap)
        worst_gauge = max(worst_gauge, float(eps_gauge(v[None], base_g, eps, eb.base_r)[0]))
        reported[f"{name}/{eps}"] = weakloo_bound(eps, 1e-8, eb.base_kappa, eb.base.R)
    elapsed = time.perf_counter() - start
    ok = worst_gap <= 1e-2 and worst_gauge <= 1 + 1e-6 and elapsed < 180
    bound = min(reported.values())
    record(9, ok, f"max gap / R|w| {worst_gap:.2g}, max gauge {worst_gauge:.12f}, worst-case bound {bound:.2g} (reported), {elapsed:.0f}s")
    assert ok


def test_criterion_10_ftal_trend_on_square():
    # run() asserts membership of every play, so finishing the sweep is the membership check.
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = sweep("thm2-square", seeds=10)
    elapsed = time.perf_counter() - start
    fit = rep["fits"]["biased-drift"]
    ok = fit["slope"] <= 0.75 and elapsed < 900
    record(10, ok, f"slope {fit['slope']:.3f} (r2 {fit['r2']:.3f}), all plays inside, {elapsed:.0f}s")
    assert ok


def test_criterion_11_reproducibility(tmp_path):
    start = time.perf_counter()
    same = True
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for name, spec in PRESETS.items():
            outs = []
            for k in range(2):
                cfg = ExperimentConfig(body=spec["body"], learner=spec["learner"], adversary=spec["adversaries"][0], T=128, seed=5)
                trace = run(cfg)
                path = tmp_path / f"{name}-{k}.json"
                emit(trace, "json", path)
                report = sweep(name, seeds=2, max_T=512)
                outs.append((trace_csv(trace), path.read_bytes(), json.dumps(report, sort_keys=True)))
            same &= outs[0] == outs[1]
    elapsed = time.perf_counter() - start
    ok = same and elapsed < 60
    record(11, ok, f"{len(PRESETS)} presets byte-identical: {same}, {elapsed:.0f}s")
    assert ok
