"""Online learners for linear losses over a convex body.

All learners follow the same protocol: ``next()`` returns the current play
(idempotent between feeds) and ``feed(g)`` consumes the round's gradient.
Learners that need linear optimization receive a :class:`CountingOracle`
so every call is accounted for.
"""

from __future__ import annotations

import math
import sys
import warnings

import numpy as np

from .geometry import as_point
from .oracles import CountingOracle, euclidean_project

_GRAD_SLACK = 1e-12
_LOG_MAX = math.log(sys.float_info.max)


class ParameterError(ValueError):
    """A learner received input outside its declared range."""


def _check_scale(norm: float, L: float):
    if norm > L * (1.0 + _GRAD_SLACK):
        raise ParameterError(f"gradient norm {norm:.6g} exceeds the bound L={L:.6g}")


def log_psi(s: float, v: float, L: float) -> float:
    if not v > 0:
        raise ValueError(f"psi needs v > 0, got {v}")
    if not L > 0:
        raise ValueError(f"psi needs L > 0, got {L}")
    a = abs(s)
    return (
        math.log(2.0 * v + L * a)
        + 2.0 * math.log(L)
        - math.log(2.0)
        - 2.0 * math.log(v + L * a)
        - 0.5 * math.log(L * v)
        + a * a / (2.0 * v + 2.0 * L * a)
    )


def psi(s: float, v: float, L: float) -> float:
    """FreeGrad's adaptive rate

    ``(2v + L|s|) L^2 / (2 (v + L|s|)^2 sqrt(L v)) * exp(s^2 / (2v + 2L|s|))``.

    Evaluated in log space; saturates at the largest float instead of
    overflowing.
    """
    return math.exp(min(log_psi(s, v, L), _LOG_MAX))


class FreeGrad1D:
    """One-dimensional FreeGrad with scale ``L`` (plays ``z = -G psi(G, V)``).

    ``V`` starts at ``v0``.  With the default ``v0 = 0`` a tiny first
    gradient makes the next play huge, so regret against the origin is not
    bounded by a constant; ``v0 = L**2`` restores that bound.
    """

    def __init__(self, L: float, v0: float = 0.0):
        if not L > 0:
            raise ParameterError("L must be positive")
        if v0 < 0:
            raise ParameterError("v0 must be non-negative")
        self.L = float(L)
        self.G = 0.0
        self.V = float(v0)
        self.z = 0.0

    def next(self) -> float:
        return self.z

    def feed(self, g: float) -> float:
        g = float(g)
        if not math.isfinite(g):
            raise ParameterError("gradient must be finite")
        _check_scale(abs(g), self.L)
        self.G += g
        self.V += g * g
        self.z = 0.0 if self.V == 0.0 else -self.G * psi(self.G, self.V, self.L)
        return self.z


class FreeGrad:
    """FreeGrad in ``d`` dimensions, unconstrained: ``w = -G psi(|G|, V)``."""

    def __init__(self, dim: int, L: float):
        if not L > 0:
            raise ParameterError("L must be positive")
        self.L = float(L)
        self.G = np.zeros(dim)
        self.V = 0.0
        self.w = np.zeros(dim)

    def next(self) -> np.ndarray:
        return self.w

    def feed(self, g):
        g = as_point(g, self.G.shape[0])
        _check_scale(float(np.linalg.norm(g)), self.L)
        self.G = self.G + g
        self.V += float(g @ g)
        if self.V > 0.0:
            self.w = -self.G * psi(float(np.linalg.norm(self.G)), self.V, self.L)


class ConstrainedFreeGrad:
    """FreeGrad restricted to a body through a projection-based reduction.

    Plays the projection of the unconstrained iterate and feeds the inner
    learner ``g + |g| (w - x)/|w - x|`` whenever the iterate lies outside.
    Gradients seen by the inner learner are at most ``2L`` in norm.
    """

    def __init__(self, oracle: CountingOracle, L: float, tol: float = 1e-10):
        self.oracle = oracle
        self.L = float(L)
        self.tol = tol
        self.inner = FreeGrad(oracle.dim, 2.0 * self.L)
        self.x = np.zeros(oracle.dim)

    def next(self) -> np.ndarray:
        return self.x

    def feed(self, g):
        g = as_point(g, self.oracle.dim)
        _check_scale(float(np.linalg.norm(g)), self.L)
        w = self.inner.next()
        gap = w - self.x
        n = float(np.linalg.norm(gap))
        surrogate = g + float(np.linalg.norm(g)) * gap / n if n > 0 else g
        self.inner.feed(surrogate)
        self.x = euclidean_project(self.oracle, self.inner.next(), self.tol)


class FTL:
    """Follow-the-leader: play a minimizer of the cumulative linear loss.

    The first play is the origin and costs no oracle call; every ``feed``
    makes exactly one call.
    """

    def __init__(self, oracle: CountingOracle):
        self.oracle = oracle
        self.grad_sum = np.zeros(oracle.dim)
        self.round = 0
        self.w = np.zeros(oracle.dim)

    def next(self) -> np.ndarray:
        return self.w

    def feed(self, g):
        self.grad_sum = self.grad_sum + as_point(g, self.oracle.dim)
        self.round += 1
        self.w = self.oracle.lin_min(self.grad_sum)


class ComparatorAdaptive:
    """Scale a base learner's play by a 1-d FreeGrad factor: ``u = z w``.

    The 1-d learner sees the scalar loss ``<w, g>``.  With ``clip=True`` the
    played factor is ``z`` clipped to [0, 1], so ``u`` stays in the body, and
    the 1-d learner is fed the constrained-reduction surrogate
    ``l + |l| sign(z - clip(z))`` instead of ``l``.  Its scale is then
    ``2 R L``; with ``clip=False`` it is ``R L`` and ``z`` is played as is.
    ``v0`` is passed to the 1-d learner as its starting variance.
    """

    def __init__(self, base, L: float, R: float, clip: bool = True, v0: float = 0.0):
        self.base = base
        self.L = float(L)
        self.R = float(R)
        self.clip = clip
        self.oned = FreeGrad1D((2.0 if clip else 1.0) * self.R * self.L, v0=v0)
        self.last_w = np.asarray(base.next(), dtype=float)
        self.last_z = 0.0

    def factor(self) -> float:
        z = self.oned.next()
        return min(1.0, max(0.0, z)) if self.clip else z

    def next(self) -> np.ndarray:
        return self.factor() * self.last_w

    def feed(self, g):
        g = np.asarray(g, dtype=float)
        loss = float(self.last_w @ g)
        z = self.oned.next()
        if self.clip and z > 1.0:
            loss += abs(loss)
        elif self.clip and z < 0.0:
            loss -= abs(loss)
        self.last_z = z
        self.oned.feed(loss)
        self.base.feed(g)
        self.last_w = np.asarray(self.base.next(), dtype=float)


def ftsl_new(oracle: CountingOracle, L: float, clip: bool = True, v0: float = 0.0) -> ComparatorAdaptive:
    """Follow-the-scaled-leader: FTL wrapped by the comparator-adaptive scaler."""
    if not L > 0:
        raise ParameterError("L must be positive")
    return ComparatorAdaptive(FTL(oracle), L, oracle.R, clip=clip, v0=v0)


def default_eta(T: int, R: float, L: float) -> float:
    """``sqrt(ln T) / (R L sqrt(T))``, falling back to ``1/(2RL)`` when ``T <= 1``."""
    if T <= 1:
        return 1.0 / (2.0 * R * L)
    return math.sqrt(math.log(T)) / (R * L * math.sqrt(T))


class MainAlgorithm:
    """Two-expert combination of a fixed and a restarting learner.

    Expert one runs from round 1; expert two is restarted whenever the
    clipped gradients stop making steady progress, measured by
    ``R mu |sum g~|^2 <= (sum |g~|^2) ln T``.  The plays are mixed with
    exponential weights on the clipped cumulative losses, where the restarted
    expert inherits the combined loss at the restart.
    """

    def __init__(self, base_factory, L: float, eta: float, mu: float, R: float, T: int, dim: int):
        if not L > 0 or not eta > 0 or not R > 0 or T < 1:
            raise ParameterError("need L > 0, eta > 0, R > 0 and T >= 1")
        if mu < 0:
            raise ParameterError("mu must be non-negative")
        if 2.0 * R * L * eta > 1.0 + 1e-12:
            warnings.warn(f"2 R L eta = {2 * R * L * eta:.3g} exceeds 1", RuntimeWarning, stacklevel=2)
        self.base_factory = base_factory
        self.L, self.eta, self.mu, self.R, self.T = float(L), float(eta), float(mu), float(R), int(T)
        self.log_T = math.log(T)
        self.a1 = base_factory()
        self.a_tau = base_factory()
        self.tau = 1
        self.q = 0.5
        self.U = self.W = self.S = 0.0
        self.clipped_sum = np.zeros(dim)
        self.clipped_sq = 0.0
        self.round = 0
        self.restarts: list[int] = []
        self._u = np.asarray(self.a1.next(), dtype=float)
        self._w = np.asarray(self.a_tau.next(), dtype=float)
        self._x = self.q * self._u + (1.0 - self.q) * self._w

    def next(self) -> np.ndarray:
        return self._x

    def plays(self) -> tuple[np.ndarray, np.ndarray]:
        """Current plays of the fixed and the restarting expert."""
        return self._u, self._w

    def feed(self, g):
        g = as_point(g, self.clipped_sum.shape[0])
        norm = float(np.linalg.norm(g))
        _check_scale(norm, self.L)
        self.round += 1
        t = self.round
        g_clip = g if norm >= self.L / t else np.zeros_like(g)

        self.a1.feed(g_clip)
        self.a_tau.feed(g_clip)
        self.U += float(g_clip @ self._u)
        self.W += float(g_clip @ self._w)
        self.S += float(g_clip @ self._x)
        self.clipped_sum = self.clipped_sum + g_clip
        self.clipped_sq += float(g_clip @ g_clip)

        if self.R * self.mu * float(self.clipped_sum @ self.clipped_sum) <= self.clipped_sq * self.log_T:
            self.tau = t + 1
            self.a_tau = self.base_factory()
            self.W = self.S
            self.restarts.append(t)

        # q = e^{-eta U} / (e^{-eta U} + e^{-eta W}), written as a stable sigmoid.
        a = self.eta * (self.W - self.U)
        self.q = 1.0 / (1.0 + math.exp(-a)) if a >= 0 else math.exp(a) / (1.0 + math.exp(a))
        self._u = np.asarray(self.a1.next(), dtype=float)
        self._w = np.asarray(self.a_tau.next(), dtype=float)
        self._x = self.q * self._u + (1.0 - self.q) * self._w


class SleepingExperts:
    """Hedge over ``N`` experts, some of which may sleep in a round.

    Sleeping experts are charged the learner's own loss, so their weight is
    untouched relative to the mixture.
    """

    def __init__(self, N: int, eta: float):
        if N < 1 or not eta > 0:
            raise ParameterError("need N >= 1 and eta > 0")
        self.N = N
        self.eta = float(eta)
        self.cum_loss = np.zeros(N)
        self.pi = np.full(N, 1.0 / N)

    def weights(self, awake) -> np.ndarray:
        awake = np.asarray(awake, dtype=bool)
        if awake.shape != (self.N,):
            raise ParameterError("awake mask has the wrong length")
        if not awake.any():
            raise ParameterError("at least one expert must be awake")
        p = np.where(awake, self.pi, 0.0)
        return p / p.sum()

    def update(self, awake, losses, p) -> np.ndarray:
        awake = np.asarray(awake, dtype=bool)
        losses = np.asarray(losses, dtype=float)
        mix = float(p @ losses)
        surrogate = np.where(awake, losses, mix)
        self.cum_loss += surrogate
        logits = -self.eta * self.cum_loss
        logits -= logits.max()
        e = np.exp(logits)
        self.pi = e / e.sum()
        return surrogate

    def step(self, awake, losses) -> np.ndarray:
        """Play the awake-renormalized weights, then absorb the losses."""
        p = self.weights(awake)
        self.update(awake, losses, p)
        return p


class OGD:
    """Projected online gradient descent with a fixed step size."""

    def __init__(self, oracle: CountingOracle, step_size: float, x0=None, tol: float = 1e-10):
        if not step_size > 0:
            raise ParameterError("step size must be positive")
        self.oracle = oracle
        self.step_size = float(step_size)
        self.tol = tol
        self.x = np.zeros(oracle.dim) if x0 is None else as_point(x0, oracle.dim).copy()

    def next(self) -> np.ndarray:
        return self.x

    def feed(self, g):
        g = as_point(g, self.oracle.dim)
        self.x = euclidean_project(self.oracle, self.x - self.step_size * g, self.tol)
