"""Strongly convex approximation of a general body and linear optimization on it.

For ``eps`` in (0, 1) the approximating set has gauge

    gauge_eps(u)^2 = (1 - eps) gauge_C(u)^2 + eps |u|^2 / r^2,

so it sits inside ``C`` and contains ``C / sqrt(1 + kappa^2 eps)``.  Linear
optimization over it reduces to a one-dimensional convex problem in ``gamma``
whose inner step is a projection onto ``sqrt(1 - eps) C°``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import Body, BodySandwich, EuclideanBall, as_point
from .oracles import CountingOracle, project_cuts, project_scaled_polar

PHI = (math.sqrt(5.0) + 1.0) / 2.0
DELTA_FLOOR = 1e-12


class GeometryError(ArithmeticError):
    """A quantity that must be positive by construction came out non-positive."""


class EpsBody(Body):
    """The approximating set for a base body and ``eps`` in (0, 1).

    ``base`` may be a body or a :class:`CountingOracle` around one; all
    linear optimization goes through ``self.oracle``.
    """

    def __init__(self, base, eps: float, delta: float = 1e-10):
        if not 0.0 < eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {eps}")
        self.oracle = base if isinstance(base, CountingOracle) else CountingOracle(base)
        self.base = self.oracle.inner
        self.eps = float(eps)
        self.dim = self.base.dim
        self.base_r = self.base.r
        self.base_kappa = self.base.kappa
        k2e = self.base_kappa**2 * self.eps
        self.sandwich = BodySandwich(self.base_r / math.sqrt(1.0 + k2e), self.base.R)
        self.mu_eps = 2.0 * self.eps / (self.base_r * math.sqrt(1.0 + k2e))
        self.mu = self.mu_eps
        # Half of mu_eps: the modulus the sampled check actually supports.
        self.mu_safe = self.mu_eps / 2.0
        self.delta = float(delta)
        self.polar_scale = math.sqrt(1.0 - self.eps)
        self.polar_ball = 1.0 / self.base.radius if isinstance(self.base, EuclideanBall) else None

    def __repr__(self):
        return f"EpsBody({self.base!r}, eps={self.eps})"

    def gauge(self, w, tol: float = 1e-12) -> float:
        return gauge_eps(self, w)

    def lin_min(self, g) -> np.ndarray:
        g = as_point(g, self.dim)
        return weak_loo(self, -g, self.delta).v_tilde


def gauge_eps(eb: EpsBody, u) -> float:
    """``sqrt((1 - eps) gauge_C(u)^2 + eps |u|^2 / r^2)``."""
    u = as_point(u, eb.dim)
    gc = eb.base.gauge(u)
    return math.sqrt((1.0 - eb.eps) * gc * gc + eb.eps * float(u @ u) / eb.base_r**2)


def _dist_weight(eb: EpsBody) -> float:
    # Weight of the squared distance term in theta: r^2 / eps.
    return eb.base_r**2 / eb.eps


def theta_eval(eb: EpsBody, gamma: float, w, delta: float, method: str = "cuts") -> tuple[float, np.ndarray]:
    """Evaluate ``gamma^2 + (r^2/eps) min_u |gamma u - w|^2`` over ``u`` in ``sqrt(1-eps) C°``.

    The value is within ``r^2 delta`` of the exact one; the minimizing ``u``
    is returned with it.
    """
    w = as_point(w, eb.dim)
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return _theta(eb, gamma, w, delta, method)


def _theta(eb: EpsBody, gamma: float, w: np.ndarray, delta: float, method: str) -> tuple[float, np.ndarray]:
    if gamma == 0.0:
        return _dist_weight(eb) * float(w @ w), np.zeros(eb.dim)
    if method == "cuts" and eb.polar_ball is None:
        # Projection accuracy eps * delta / gamma^2 on |u - w/gamma|^2 gives r^2 delta on theta.
        u = project_cuts(eb.oracle, w / gamma, eb.polar_scale, eb.eps * delta / gamma**2)
    else:
        u = project_scaled_polar(eb.oracle, w, gamma, eb.eps, eb.eps * delta, method=method)
    resid = gamma * u - w
    return gamma * gamma + _dist_weight(eb) * float(resid @ resid), u


def theta_grad(eb: EpsBody, gamma: float, w, delta: float, method: str = "cuts") -> float:
    """``2 gamma + 2 (r^2/eps) <u, gamma u - w>`` at the approximate projector ``u``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    w = as_point(w, eb.dim)
    _, u = theta_eval(eb, gamma, w, delta, method)
    return 2.0 * gamma + 2.0 * _dist_weight(eb) * float(u @ (gamma * u - w))


def theta_lipschitz(eb: EpsBody, b: float, w_norm: float) -> float:
    """Bound on ``|theta'|`` over ``(0, b]``: ``2b (1 + 1/eps) + 2 r |w| / eps``."""
    return 2.0 * b * (1.0 + 1.0 / eb.eps) + 2.0 * eb.base_r * w_norm / eb.eps


def golden_iterations(eb: EpsBody, w_norm: float, delta: float) -> int:
    """Number of golden-section steps so that the final bracket is accurate enough.

    The bracket ``[0, R|w|]`` shrinks by ``1/phi`` per step; we need
    ``lipschitz * R|w| * (phi - 1)^K <= r^2 delta / 2``.
    """
    R = eb.base.R
    span = R * w_norm
    ratio = 2.0 * theta_lipschitz(eb, span, w_norm) * span / (eb.base_r**2 * delta)
    return max(1, math.ceil(math.log(max(ratio, 1.0)) / math.log(PHI)))


@dataclass
class GoldenTrace:
    gamma_hat: float
    K: int
    lo: float
    hi: float
    evaluations: int


def golden_section(eb: EpsBody, w, delta: float, method: str = "cuts", trace: bool = False):
    """Golden-section search for the minimizer of theta on ``[0, R|w|]``.

    Each probe is evaluated at accuracy ``delta / (4 K phi)``.  Returns the
    midpoint of the final bracket (or a :class:`GoldenTrace` with ``trace``).
    """
    w = as_point(w, eb.dim)
    w_norm = float(np.linalg.norm(w))
    if not w_norm > 0:
        raise ValueError("w must be nonzero")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    K = golden_iterations(eb, w_norm, delta)
    inner = delta / (4.0 * K * PHI)

    def theta(g):
        return _theta(eb, g, w, inner, method)[0]

    lo, hi = 0.0, eb.base.R * w_norm
    g_bar = hi - (hi - lo) / PHI
    m_bar = lo + (hi - lo) / PHI
    t_g, t_m = theta(g_bar), theta(m_bar)
    evals = 2
    # Iterations 1..K-1 produce the bracket [lo_K, hi_K] that is returned.
    for _ in range(K - 1):
        if t_g < t_m:
            hi, m_bar, t_m = m_bar, g_bar, t_g
            g_bar = hi - (hi - lo) / PHI
            t_g = theta(g_bar)
        else:
            lo, g_bar, t_g = g_bar, m_bar, t_m
            m_bar = lo + (hi - lo) / PHI
            t_m = theta(m_bar)
        evals += 1
    gamma_hat = 0.5 * (lo + hi)
    if trace:
        return GoldenTrace(gamma_hat, K, lo, hi, evals)
    return gamma_hat


@dataclass
class WeakLooResult:
    v_tilde: np.ndarray
    v_hat: np.ndarray
    gamma_hat: float
    u_hat: np.ndarray
    z_hat: np.ndarray
    lambda_hat: float
    theta_factor: float
    deflation: float


def theta_factor(eps: float, delta: float, kappa: float) -> float:
    """The worst-case deflation ``1 + 576^2 delta^(1/4) kappa^15 / eps^2``."""
    return 1.0 + 576.0**2 * delta**0.25 * kappa**15 / eps**2


def weak_loo(eb: EpsBody, w, delta: float, mode: str = "certified", method: str = "cuts") -> WeakLooResult:
    """Approximate ``argmax <v, w>`` over the approximating set.

    ``mode="certified"`` divides the candidate by ``max(1, gauge_eps)``, the
    smallest shrink that provably lands inside; ``mode="worst-case"`` divides by
    the worst-case constant :func:`theta_factor`.  That constant is reported
    in both modes.
    """
    w = as_point(w, eb.dim)
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    kappa = eb.base_kappa
    factor = theta_factor(eb.eps, delta, kappa)
    zero = np.zeros(eb.dim)
    n = float(np.linalg.norm(w))
    if n == 0.0:
        return WeakLooResult(zero, zero, 0.0, zero, zero, 0.0, factor, 1.0)
    if delta > eb.eps**4 / (29.0**4 * kappa**12):
        warnings.warn("delta is above the range where the weak LOO accuracy guarantee applies", RuntimeWarning, stacklevel=2)
    w_bar = w / n
    gamma_hat = golden_section(eb, w_bar, delta, method)
    u_hat = project_scaled_polar(eb.oracle, w_bar, gamma_hat, eb.eps, delta, method=method)
    z_hat = w_bar - gamma_hat * u_hat
    lambda_hat = math.sqrt(gamma_hat**2 + _dist_weight(eb) * float(z_hat @ z_hat))
    align = float(z_hat @ w_bar)
    if not align > 0:
        raise GeometryError(f"<z, w> = {align:.3e} is not positive")
    v_hat = lambda_hat * z_hat / align
    if mode == "certified":
        deflation = max(1.0, gauge_eps(eb, v_hat))
    elif mode == "worst-case":
        deflation = factor
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return WeakLooResult(v_hat / deflation, v_hat, gamma_hat, u_hat, z_hat, lambda_hat, factor, deflation)


def tuned_eps(kappa: float, T: int) -> float:
    """``1 / (kappa^(4/3) T^(1/3))``, kept inside (0, 1)."""
    return min(0.5, 1.0 / (kappa ** (4.0 / 3.0) * max(T, 1) ** (1.0 / 3.0)))


def tuned_delta(eps: float, kappa: float, T: int, rho: float = 0.1) -> float:
    """``rho eps^16 / (484^16 T kappa^128)`` evaluated in logs, floored at 1e-12."""
    log_d = math.log(rho) + 16 * math.log(eps) - 16 * math.log(484.0) - math.log(max(T, 1)) - 128 * math.log(kappa)
    return max(DELTA_FLOOR, math.exp(max(log_d, -700.0)))


class FTAL:
    """Follow-the-approximate-leader: FTL with the weak LOO on the approximating set.

    Plays the origin while the gradient sum is zero and reuses the last answer
    when the sum has not changed.
    """

    def __init__(self, eb: EpsBody, delta: float, mode: str = "certified", method: str = "cuts"):
        self.eb = eb
        self.delta = float(delta)
        self.mode = mode
        self.method = method
        self.grad_sum = np.zeros(eb.dim)
        self.w = np.zeros(eb.dim)
        self.last = None

    def next(self) -> np.ndarray:
        return self.w

    def feed(self, g):
        g = as_point(g, self.eb.dim)
        if not g.any():
            return
        self.grad_sum = self.grad_sum + g
        self.last = weak_loo(self.eb, -self.grad_sum, self.delta, self.mode, self.method)
        self.w = self.last.v_tilde


def sandwich_check(eb: EpsBody, n_samples: int, seed: int, slack: float = 1e-8) -> bool:
    """Sample directions and check both inclusions of the sandwich."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    bound = math.sqrt(1.0 + eb.base_kappa**2 * eb.eps)
    for d in rng.standard_normal((n_samples, eb.dim)):
        inner = d / gauge_eps(eb, d)
        if eb.base.gauge(inner) > 1.0 + slack:
            return False
        outer = d / eb.base.gauge(d)
        if gauge_eps(eb, outer) > bound + slack:
            return False
    return True
