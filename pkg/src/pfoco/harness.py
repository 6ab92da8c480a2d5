"""Experiment orchestration: adversaries, regret accounting, sweeps and output."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .approx_set import FTAL, EpsBody, tuned_delta, tuned_eps
from .geometry import Body, parse_body
from .learners import (
    FTL,
    OGD,
    ComparatorAdaptive,
    ConstrainedFreeGrad,
    MainAlgorithm,
    default_eta,
    ftsl_new,
)
from .oracles import CountingOracle
from .rng import Xoshiro256

SCHEMA = 1
MEMBERSHIP_TOL = 1e-9


class RunError(RuntimeError):
    """A learner, solver or membership failure, tagged with the round index."""

    def __init__(self, round_index: int, cause: BaseException):
        super().__init__(f"round {round_index}: {type(cause).__name__}: {cause}")
        self.round_index = round_index


def _parse_params(spec: str) -> tuple[str, dict[str, str]]:
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"malformed parameter {item!r} in {spec!r}")
        params[key.strip()] = value.strip()
    return kind.strip(), params


def _auto(value, default):
    if value is None or value == "auto":
        return default
    return float(value)


@dataclass
class ExperimentConfig:
    body: str = "ball:R=1.0"
    learner: str = "main"
    adversary: str = "iid-sphere"
    T: int = 100
    L: float = 1.0
    eta: float | str = "auto"
    mu: float | str = "auto"
    eps: float | str = "auto"
    delta: float | str = "auto"
    rho: float | str = "auto"
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if not self.L > 0:
            raise ValueError("L must be positive")


@dataclass
class Resolved:
    """Numbers behind every ``auto`` field, echoed into the JSON summary."""

    eta: float
    mu: float
    eps: float | None
    delta: float | None
    rho: float


def resolve(config: ExperimentConfig, body: Body) -> Resolved:
    kind, params = _parse_params(config.learner)
    T = max(config.T, 1)
    eta = _auto(config.eta, default_eta(T, body.R, config.L))
    rho = _auto(config.rho, 0.1)
    uses_ftal = kind == "ftal" or params.get("base") == "ftal"
    eps = delta = None
    if uses_ftal:
        eps = _auto(params.get("eps", config.eps), tuned_eps(body.kappa, T))
        delta = _auto(params.get("delta", config.delta), tuned_delta(eps, body.kappa, T, rho))
        mu_default = EpsBody(body, eps).mu_safe
    else:
        mu_default = body.mu
    mu = _auto(config.mu, mu_default)
    return Resolved(eta, mu, eps, delta, rho)


def build_learner(config: ExperimentConfig, body: Body, oracle: CountingOracle, res: Resolved):
    kind, params = _parse_params(config.learner)
    L, T = config.L, max(config.T, 1)
    if kind == "ftl":
        return FTL(oracle)
    if kind == "ftsl":
        return ftsl_new(oracle, L)
    if kind == "freegrad":
        return ConstrainedFreeGrad(oracle, L)
    if kind == "ogd":
        return OGD(oracle, float(params.get("step", body.R / (L * math.sqrt(T)))))
    if kind == "ftal":
        return FTAL(EpsBody(oracle, res.eps), res.delta)
    if kind == "main":
        base = params.get("base", "ftl")
        if base == "ftl":
            def factory():
                return ftsl_new(oracle, L)
        elif base == "ftal":
            eb = EpsBody(oracle, res.eps)

            def factory():
                return ComparatorAdaptive(FTAL(eb, res.delta), L, body.R)
        else:
            raise ValueError(f"unknown base learner {base!r}")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return MainAlgorithm(factory, L, res.eta, res.mu, body.R, T, body.dim)
    raise ValueError(f"unknown learner {kind!r}")


class Adversary:
    """Base adversary: ``next(x)`` returns a gradient of norm at most ``L``."""

    def __init__(self, dim: int, L: float, rng: Xoshiro256):
        self.dim, self.L, self.rng = dim, float(L), rng
        self.t = 0

    def _gaussian(self) -> np.ndarray:
        return np.array([self.rng.gauss(0.0, 1.0) for _ in range(self.dim)])

    def _unit(self) -> np.ndarray:
        while True:
            n = self._gaussian()
            norm = float(np.linalg.norm(n))
            if norm > 0:
                return n / norm

    def _clip(self, g: np.ndarray) -> np.ndarray:
        n = float(np.linalg.norm(g))
        return g if n <= self.L else g * (self.L / n)

    def next(self, x: np.ndarray) -> np.ndarray:
        self.t += 1
        return self._clip(self._draw(x))

    def _draw(self, x):
        raise NotImplementedError


class IidSphere(Adversary):
    def _draw(self, x):
        return self.L * self._unit()


class SignFlip(Adversary):
    """Pushes against the current play; from the origin it alternates along e1."""

    def _draw(self, x):
        s = np.sign(np.where(np.abs(x) > 1e-12, x, 0.0))
        if s.any():
            return self.L * s / float(np.linalg.norm(s))
        g = np.zeros(self.dim)
        g[0] = (0.5 if self.t == 1 else 1.0) * self.L * (1.0 if self.t % 2 else -1.0)
        return g


class SmoothQuad(Adversary):
    """Gradient ``2 (x - a_t)`` of a quadratic whose center follows a random walk."""

    def __init__(self, dim, L, rng, step: float = 0.05, radius: float = 0.5):
        super().__init__(dim, L, rng)
        self.step, self.radius = step, radius
        self.center = np.zeros(dim)

    def _draw(self, x):
        a = self.center + self.step * self._gaussian()
        n = float(np.linalg.norm(a))
        self.center = a if n <= self.radius else a * (self.radius / n)
        return 2.0 * (np.asarray(x, dtype=float) - self.center)


class BiasedDrift(Adversary):
    """Constant drift along e1 plus isotropic noise."""

    def __init__(self, dim, L, rng, drift: float = 0.2, noise: float = 0.8):
        super().__init__(dim, L, rng)
        self.drift, self.noise = drift, noise
        self.direction = np.zeros(dim)
        self.direction[0] = 1.0

    def _draw(self, x):
        return self.L * (self.drift * self.direction + self.noise * self._unit())


ADVERSARIES = {
    "iid-sphere": IidSphere,
    "sign-flip": SignFlip,
    "smooth-quad": SmoothQuad,
    "biased-drift": BiasedDrift,
}


def make_adversary(spec: str, dim: int, L: float, rng: Xoshiro256) -> Adversary:
    kind, params = _parse_params(spec)
    if kind not in ADVERSARIES:
        raise ValueError(f"unknown adversary {kind!r}")
    return ADVERSARIES[kind](dim, L, rng, **{k: float(v) for k, v in params.items()})


@dataclass
class RegretTrace:
    config: ExperimentConfig
    resolved: Resolved
    points: np.ndarray
    grads: np.ndarray
    losses: np.ndarray
    loo_calls: np.ndarray
    comparator: np.ndarray
    sep_calls_total: int = 0
    restarts: list = field(default_factory=list)

    @property
    def T(self) -> int:
        return len(self.losses)

    @property
    def cum_loss(self) -> np.ndarray:
        return np.cumsum(self.losses)

    def cum_regret(self, comparator=None) -> np.ndarray:
        """Prefix regret against a fixed comparator (default: the final one)."""
        u = self.comparator if comparator is None else np.asarray(comparator, dtype=float)
        return self.cum_loss - np.cumsum(self.grads @ u) if self.T else np.zeros(0)

    def prefix_regret(self, body: Body) -> np.ndarray:
        """Regret of each prefix against that prefix's own best comparator."""
        G = np.cumsum(self.grads, axis=0)
        best = np.array([float(gs @ body.lin_min(gs)) for gs in G]) if self.T else np.zeros(0)
        return self.cum_loss - best

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret()[-1]) if self.T else 0.0


def best_comparator(trace: RegretTrace, body: Body) -> np.ndarray:
    """Best fixed point in hindsight for the linear losses: ``lin_min(sum g)``."""
    return body.lin_min(trace.grads.sum(axis=0) if trace.T else np.zeros(body.dim))


def run(config: ExperimentConfig) -> RegretTrace:
    """Play ``T`` rounds and audit every play for membership."""
    body = parse_body(config.body)
    oracle = CountingOracle(body)
    res = resolve(config, body)
    learner = build_learner(config, body, oracle, res)
    rng = Xoshiro256(config.seed)
    adversary = make_adversary(config.adversary, body.dim, config.L, rng)
    T, d = config.T, body.dim
    points = np.zeros((T, d))
    grads = np.zeros((T, d))
    losses = np.zeros(T)
    calls = np.zeros(T, dtype=np.int64)
    for t in range(T):
        try:
            x = np.array(learner.next(), dtype=float)
            if not body.membership(x, MEMBERSHIP_TOL):
                raise AssertionError(f"play {x.tolist()} is outside the body (gauge {body.gauge(x):.12g})")
            g = adversary.next(x)
            learner.feed(g)
        except Exception as exc:
            raise RunError(t + 1, exc) from exc
        points[t], grads[t] = x, g
        losses[t] = float(g @ x)
        calls[t] = oracle.loo_calls
    trace = RegretTrace(config, res, points, grads, losses, calls, np.zeros(d), oracle.sep_calls)
    trace.comparator = best_comparator(trace, body)
    trace.restarts = list(getattr(learner, "restarts", []))
    return trace


def fit_exponent(points) -> tuple[float, float]:
    """Least-squares slope of ``log(regret)`` against ``log(T)`` and its r^2."""
    pts = [(float(T), float(r)) for T, r in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(r <= 0 for _, r in pts):
        warnings.warn("non-positive regret values floored at 1e-9", RuntimeWarning, stacklevel=2)
    x = np.log([T for T, _ in pts])
    y = np.log([max(r, 1e-9) for _, r in pts])
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def trace_csv(trace: RegretTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "loss", "cum_regret_vs_final_comparator", "loo_calls"])
    for t, (loss, reg, calls) in enumerate(zip(trace.losses, trace.cum_regret(), trace.loo_calls), start=1):
        w.writerow([t, repr(float(loss)), repr(float(reg)), int(calls)])
    return buf.getvalue()


def trace_summary(trace: RegretTrace) -> dict:
    return {
        "schema": SCHEMA,
        "config": asdict(trace.config),
        "resolved": asdict(trace.resolved),
        "T": trace.T,
        "final_regret": trace.final_regret,
        "comparator": [float(v) for v in trace.comparator],
        "loo_calls_total": int(trace.loo_calls[-1]) if trace.T else 0,
        "sep_calls_total": int(trace.sep_calls_total),
        "restarts": len(trace.restarts),
    }


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def emit(report, fmt: str, path) -> None:
    """Write a trace as CSV or JSON, or a sweep report (a dict) as JSON."""
    if isinstance(report, RegretTrace):
        text = trace_csv(report) if fmt == "csv" else _dumps(trace_summary(report))
    elif fmt == "json":
        text = _dumps(report)
    else:
        raise ValueError("sweep reports are emitted as JSON only")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


PRESETS = {
    "thm1-ball": dict(body="ball:R=1.0", learner="main", adversaries=["iid-sphere", "biased-drift"], exponents=range(8, 15)),
    "thm2-square": dict(body="cube:h=1.0", learner="main:base=ftal", adversaries=["biased-drift"], exponents=range(8, 14)),
    "ftl-strong": dict(body="ball:R=1.0", learner="ftl", adversaries=["biased-drift"], exponents=range(8, 15)),
    "freegrad-1d": dict(body="ball:R=1.0,d=1", learner="freegrad", adversaries=["iid-sphere"], exponents=range(8, 15)),
}


def _run_summary(config: ExperimentConfig) -> dict:
    return trace_summary(run(config))


def sweep(preset: str, seeds: int = 10, max_T: int | None = None, base_seed: int = 0, jobs: int = 1) -> dict:
    """Run a preset grid and fit the regret exponent per adversary (median over seeds)."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    spec = PRESETS[preset]
    Ts = [2**k for k in spec["exponents"] if max_T is None or 2**k <= max_T]
    configs = [
        ExperimentConfig(body=spec["body"], learner=spec["learner"], adversary=adv, T=T, seed=base_seed + s)
        for adv in spec["adversaries"]
        for T in Ts
        for s in range(seeds)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            runs = list(pool.map(_run_summary, configs))
    else:
        runs = [_run_summary(c) for c in configs]
    runs.sort(key=lambda r: (r["config"]["adversary"], r["T"], r["config"]["seed"]))
    fits = {}
    for adv in spec["adversaries"]:
        pts = [(T, float(np.median([r["final_regret"] for r in runs if r["T"] == T and r["config"]["adversary"] == adv]))) for T in Ts]
        entry = {"points": pts}
        if len(pts) >= 3:
            entry["slope"], entry["r2"] = fit_exponent(pts)
        fits[adv] = entry
    return {"schema": SCHEMA, "preset": preset, "seeds": seeds, "T_grid": Ts, "fits": fits, "runs": runs}


def points_from_reports(reports) -> list[tuple[int, float]]:
    """Collect ``(T, median final regret)`` from run summaries or sweep reports."""
    by_T: dict[int, list[float]] = {}
    for rep in reports:
        for r in rep.get("runs", [rep]):
            by_T.setdefault(int(r["T"]), []).append(float(r["final_regret"]))
    return [(T, float(np.median(v))) for T, v in sorted(by_T.items())]
