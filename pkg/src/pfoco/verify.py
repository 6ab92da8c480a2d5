"""Invariant suites: per-trace regret bounds and numerical checks of the
approximate linear optimization pipeline.

Each suite returns a :class:`SuiteResult` whose ``details`` hold the worst
observed slack, so a pass can be judged by how close it came.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .approx_set import (
    EpsBody,
    gauge_eps,
    golden_section,
    sandwich_check,
    theta_eval,
    theta_grad,
    theta_lipschitz,
    weak_loo,
)
from .geometry import EuclideanBall, LpBall, cube, strong_convexity_margin
from .harness import make_adversary
from .learners import FTL, ComparatorAdaptive, FreeGrad1D, SleepingExperts
from .oracles import CountingOracle
from .rng import Xoshiro256


@dataclass
class SuiteResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)


def _bodies():
    return {"square": cube(1.0, 2), "l1.5": LpBall(1.5, 1.0, 2)}


def support_bruteforce(eb: EpsBody, w, n_angles: int = 100_000) -> tuple[float, np.ndarray]:
    """Support function of a planar approximating set by an angular scan.

    Boundary points are ``d / gauge_eps(d)``; the best grid angle is refined
    by a bounded scalar search over its neighbouring cell.
    """
    w = np.asarray(w, dtype=float)
    if eb.dim != 2:
        raise ValueError("the angular scan is planar only")
    base, eps, r2 = eb.base, eb.eps, eb.base_r**2

    def boundary(angles):
        D = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        g = np.sqrt((1.0 - eps) * base.gauge_many(D) ** 2 + eps / r2)
        return D / g[:, None]

    angles = np.linspace(0.0, 2.0 * math.pi, n_angles, endpoint=False)
    vals = boundary(angles) @ w
    i = int(np.argmax(vals))
    cell = 2.0 * math.pi / n_angles
    res = minimize_scalar(
        lambda a: -float(boundary(np.array([a]))[0] @ w),
        bounds=(angles[i] - cell, angles[i] + cell),
        method="bounded",
        options={"xatol": 1e-13},
    )
    if -res.fun > vals[i]:
        return float(-res.fun), boundary(np.array([res.x]))[0]
    return float(vals[i]), boundary(angles[i : i + 1])[0]


def lemma2(n_traces: int = 100, T: int = 1000, seed: int = 0) -> SuiteResult:
    """FTL on the unit ball against the biased-drift adversary."""
    worst = math.inf
    violations = 0
    for i in range(n_traces):
        body = EuclideanBall(1.0, 2)
        learner = FTL(CountingOracle(body))
        adv = make_adversary("biased-drift", 2, 1.0, Xoshiro256(seed + i))
        W = np.empty((T, 2))
        Gs = np.empty((T, 2))
        for t in range(T):
            W[t] = learner.next()
            Gs[t] = adv.next(W[t])
            learner.feed(Gs[t])
        prefix = np.cumsum(Gs, axis=0)
        pn = np.linalg.norm(prefix, axis=1)
        if pn.min() == 0.0:
            raise RuntimeError(f"trace {i} has a zero prefix sum")
        u = body.lin_min(prefix[-1])
        lhs = float(np.sum(Gs * W) - prefix[-1] @ u)
        rhs = float(np.sum(2.0 * np.sum(Gs**2, axis=1) / (body.mu * pn)))
        worst = min(worst, rhs - lhs)
        violations += lhs > rhs
    return SuiteResult("lemma2", violations == 0, {"violations": violations, "min_slack": worst})


def freegrad_bound(z: float, V: float, L: float) -> float:
    """Per-trace regret bound of 1-d FreeGrad against comparator ``z``."""
    a = abs(z)
    if a == 0.0:
        return L
    return (
        2.0 * a * math.sqrt(V * math.log(1.0 + 2.0 * a * V / L**2))
        + 4.0 * L * a * math.log(4.0 * a * math.sqrt(V) / L)
        + L
    )


def lemma3(
    n_traces: int = 100, T: int = 10_000, seed: int = 0, comparators=(0.0, 0.25, -0.25, 1.0, -1.0), v0: float = 0.0
) -> SuiteResult:
    """1-d FreeGrad on gradients uniform in [-1, 1]; ``v0`` is its starting variance."""
    rng = np.random.default_rng(seed)
    L = 1.0
    worst = math.inf
    violations = 0
    for _ in range(n_traces):
        g = rng.uniform(-L, L, T)
        learner = FreeGrad1D(L, v0=v0)
        zs = np.empty(T)
        for t in range(T):
            zs[t] = learner.next()
            learner.feed(g[t])
        loss = float(g @ zs)
        G, V = float(g.sum()), float(g @ g)
        for z in comparators:
            slack = freegrad_bound(z, V, L) - (loss - z * G)
            worst = min(worst, slack)
            violations += slack < 0
    return SuiteResult("lemma3", violations == 0, {"violations": violations, "min_slack": worst})


def lemma4(n_traces: int = 20, T: int = 500, n_comparators: int = 20, seed: int = 0) -> SuiteResult:
    """Regret of the scaled play splits into the 1-d part plus gamma times the base part."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_traces):
        body = EuclideanBall(1.0, 2) if i % 2 == 0 else cube(1.0, 2)
        ca = ComparatorAdaptive(FTL(CountingOracle(body)), 1.0, body.R, clip=False)
        Gs = rng.standard_normal((T, 2))
        Gs /= np.maximum(1.0, np.linalg.norm(Gs, axis=1))[:, None]
        U = np.empty((T, 2))
        Wb = np.empty((T, 2))
        Z = np.empty(T)
        for t in range(T):
            U[t] = ca.next()
            Wb[t] = ca.last_w
            Z[t] = ca.oned.next()
            ca.feed(Gs[t])
        ell = np.sum(Wb * Gs, axis=1)
        for _ in range(n_comparators):
            d = rng.standard_normal(2)
            u = rng.uniform(0.05, 1.0) * d / body.gauge(d)
            gam = body.gauge(u)
            lhs = float(np.sum(Gs * U) - Gs.sum(axis=0) @ u)
            oned = float(ell @ (Z - gam))
            base = float(np.sum(Gs * Wb) - Gs.sum(axis=0) @ (u / gam))
            worst = max(worst, abs(lhs - oned - gam * base))
    return SuiteResult("lemma4", worst <= 1e-8, {"max_abs_error": worst})


def eq18(n_schedules: int = 100, T: int = 500, max_experts: int = 32, seed: int = 0) -> SuiteResult:
    """Sleeping-experts bound for every expert and every prefix."""
    rng = np.random.default_rng(seed)
    worst = math.inf
    violations = 0
    for _ in range(n_schedules):
        N = int(rng.integers(2, max_experts + 1))
        eta = float(rng.uniform(0.05, 1.0))
        starts = rng.integers(0, T, N)
        ends = np.array([rng.integers(s, T) for s in starts])
        starts[0], ends[0] = 0, T - 1
        t_idx = np.arange(T)[:, None]
        awake = (t_idx >= starts) & (t_idx <= ends)
        losses = rng.uniform(0.0, 1.0, (T, N))
        hedge = SleepingExperts(N, eta)
        gain = np.zeros((T, N))
        sq = np.zeros(T)
        for t in range(T):
            p = hedge.weights(awake[t])
            surrogate = hedge.update(awake[t], losses[t], p)
            gain[t] = awake[t] * (p @ losses[t] - losses[t])
            sq[t] = np.max(np.abs(surrogate)) ** 2
        lhs = np.cumsum(gain, axis=0)
        rhs = math.log(N) / eta + 0.75 * eta * np.cumsum(sq)
        slack = rhs[:, None] - lhs
        worst = min(worst, float(slack.min()))
        violations += int(np.sum(slack < 0))
    return SuiteResult("eq18", violations == 0, {"violations": violations, "min_slack": worst})


def lemma6(n_samples: int = 10_000, eps_values=(0.05, 0.2, 0.5), seed: int = 0) -> SuiteResult:
    """Sandwich inclusions and the declared strong-convexity modulus."""
    rows = []
    ok = True
    for name, base in _bodies().items():
        for eps in eps_values:
            eb = EpsBody(base, eps)
            sandwich = sandwich_check(eb, n_samples, seed)
            margin = strong_convexity_margin(eb, eb.mu_eps, n_samples, seed)
            margin_half = strong_convexity_margin(eb, eb.mu_safe, n_samples, seed)
            rows.append({"base": name, "eps": eps, "sandwich": sandwich, "margin_mu": margin, "margin_half_mu": margin_half})
            ok &= sandwich and margin >= -1e-9
    return SuiteResult("lemma6", ok, {"rows": rows})


def _random_instance(rng, bodies, eps_range):
    name = list(bodies)[int(rng.integers(len(bodies)))]
    eps = float(rng.uniform(*eps_range))
    w = rng.standard_normal(2)
    return name, EpsBody(bodies[name], eps), w / np.linalg.norm(w)


def lemma7(n_instances: int = 50, delta: float = 1e-8, grid: int = 200, seed: int = 0) -> SuiteResult:
    """sqrt(min theta) against the brute-force support, and golden section against a grid."""
    rng = np.random.default_rng(seed)
    bodies = _bodies()
    worst_support = 0.0
    worst_golden = -math.inf
    ok = True
    fine = 1e-12
    for _ in range(n_instances):
        name, eb, w = _random_instance(rng, bodies, (0.05, 0.5))
        r2d = eb.base_r**2 * delta
        gamma_hat = golden_section(eb, w, delta)
        t_hat = theta_eval(eb, gamma_hat, w, fine)[0]
        sigma, _ = support_bruteforce(eb, w)
        err = abs(math.sqrt(t_hat) - sigma)

        def theta(g):
            return theta_eval(eb, g, w, fine)[0]

        gs = np.linspace(0.0, eb.base.R, grid + 1)
        vals = np.array([theta(g) for g in gs])
        j = int(np.argmin(vals))
        res = minimize_scalar(theta, bounds=(gs[max(j - 1, 0)], gs[min(j + 1, grid)]), method="bounded", options={"xatol": 1e-12})
        grid_min = min(float(vals[j]), float(res.fun))
        excess = t_hat - grid_min
        worst_support = max(worst_support, err / (2.0 * r2d))
        worst_golden = max(worst_golden, excess / r2d)
        ok &= err <= 2.0 * r2d and excess <= r2d
    return SuiteResult(
        "lemma7",
        ok,
        {"support_error_over_2r2delta": worst_support, "golden_excess_over_r2delta": worst_golden},
    )


def gradcheck(n_samples: int = 1000, delta: float = 1e-12, h: float = 1e-6, seed: int = 0) -> SuiteResult:
    """Analytic theta derivative against central differences, plus the Lipschitz bound."""
    rng = np.random.default_rng(seed)
    bodies = {"ball": EuclideanBall(1.0, 2), **_bodies()}
    worst = 0.0
    lip_ok = True
    ok = True
    for _ in range(n_samples):
        name, eb, w = _random_instance(rng, bodies, (0.05, 0.5))
        gamma = float(rng.uniform(10.0 * h, eb.base.R))
        tol = max(1e-4, 10.0 * eb.base_r**2 * delta)
        grad = theta_grad(eb, gamma, w, delta)
        fd = (theta_eval(eb, gamma + h, w, delta)[0] - theta_eval(eb, gamma - h, w, delta)[0]) / (2.0 * h)
        worst = max(worst, abs(grad - fd) / tol)
        ok &= abs(grad - fd) <= tol
        lip_ok &= abs(grad) <= theta_lipschitz(eb, gamma, 1.0) * (1.0 + 1e-12)
    return SuiteResult("gradcheck", ok and lip_ok, {"max_error_over_tol": worst, "lipschitz_ok": lip_ok})


def weakloo_bound(eps: float, delta: float, kappa: float, R: float) -> float:
    """Worst-case suboptimality of the weak LOO: ``484^4 R delta^(1/4) kappa^32 / eps^4``."""
    return 484.0**4 * R * delta**0.25 * kappa**32 / eps**4


def weakloo2d(n_instances: int = 50, delta: float = 1e-8, seed: int = 0, eps_values=(0.1, 0.3)) -> SuiteResult:
    """Weak LOO value against the angular brute force, plus membership of its output."""
    rng = np.random.default_rng(seed)
    bodies = _bodies()
    names = list(bodies)
    worst_gap = -math.inf
    worst_gauge = 0.0
    ok = True
    bounds = {}
    for i in range(n_instances):
        name = names[i % len(names)]
        eps = eps_values[(i // len(names)) % len(eps_values)]
        eb = EpsBody(bodies[name], eps)
        w = rng.standard_normal(2) * rng.uniform(0.1, 10.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = weak_loo(eb, w, delta)
        best, _ = support_bruteforce(eb, w)
        scale = eb.base.R * float(np.linalg.norm(w))
        gap = (best - float(res.v_tilde @ w)) / scale
        g = gauge_eps(eb, res.v_tilde)
        worst_gap = max(worst_gap, gap)
        worst_gauge = max(worst_gauge, g)
        ok &= gap <= 1e-2 and g <= 1.0 + 1e-6
        bounds[f"{name},eps={eps}"] = weakloo_bound(eps, delta, eb.base_kappa, eb.base.R) / eb.base.R
    return SuiteResult(
        "weakloo2d",
        ok,
        {"max_relative_gap": worst_gap, "max_gauge": worst_gauge, "worst_case_relative_bound": bounds},
    )


SUITES = {
    "lemma2": lemma2,
    "lemma3": lemma3,
    "lemma4": lemma4,
    "lemma6": lemma6,
    "lemma7": lemma7,
    "eq18": eq18,
    "weakloo2d": weakloo2d,
    "gradcheck": gradcheck,
}

# Reduced sizes for smoke runs.
QUICK = {
    "lemma2": {"n_traces": 5, "T": 200},
    "lemma3": {"n_traces": 5, "T": 1000},
    "lemma4": {"n_traces": 4, "T": 100},
    "lemma6": {"n_samples": 500},
    "lemma7": {"n_instances": 4, "grid": 50},
    "eq18": {"n_schedules": 5, "T": 100},
    "weakloo2d": {"n_instances": 4},
    "gradcheck": {"n_samples": 40},
}


def run_suite(name: str, quick: bool = False) -> SuiteResult:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](**(QUICK[name] if quick else {}))
