"""Oracle-call accounting and reductions built on a linear optimization oracle.

Everything here talks to the body only through :class:`CountingOracle`,
so the counters reflect every linear-optimization call made.  The two
projection routines are certified: they stop on an upper/lower bound gap,
never on an iteration count alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from .geometry import Body, EuclideanBall, as_point


# Relative accuracy floor of the cutting-plane projection in double precision.
GAP_FLOOR = 1e-14


class SolverError(RuntimeError):
    """Raised when a solver hits its iteration cap before certifying accuracy."""

    def __init__(self, message: str, best: np.ndarray | None = None, residual: float = math.inf):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.best = best
        self.residual = residual


class CountingOracle:
    """Wraps a body and counts calls to its linear optimization oracle.

    Points returned by ``lin_min`` are members of the body, so each one is a
    valid cut ``<x, u> <= s`` for the scaled polar ``s C°``.  A bounded pool
    of them is kept for warm-starting the projection solvers.
    """

    def __init__(self, body: Body, max_cuts: int = 256):
        self.inner = body
        self.loo_calls = 0
        self.sep_calls = 0
        self.max_cuts = max_cuts
        self._cuts: dict[bytes, np.ndarray] = {}
        self._cut_matrix = None
        self.projector = _ActiveSetProjector()

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def r(self) -> float:
        return self.inner.r

    @property
    def R(self) -> float:
        return self.inner.R

    @property
    def kappa(self) -> float:
        return self.inner.kappa

    def lin_min(self, g) -> np.ndarray:
        return self._lin_min(as_point(g, self.dim))

    def _lin_min(self, g: np.ndarray) -> np.ndarray:
        self.loo_calls += 1
        v = self.inner._lin_min(g)
        self._remember(v)
        return v

    def support(self, w) -> tuple[float, np.ndarray]:
        return self._support(as_point(w, self.dim))

    def _support(self, w: np.ndarray) -> tuple[float, np.ndarray]:
        v = self._lin_min(-w)
        return float(v @ w), v

    def _remember(self, v: np.ndarray):
        if not v.any():
            return
        key = v.tobytes()
        if key in self._cuts:
            return
        if len(self._cuts) >= self.max_cuts:
            self._cuts.pop(next(iter(self._cuts)))
        self._cuts[key] = v
        self._cut_matrix = None

    def cut_matrix(self) -> np.ndarray:
        """Rows are remembered points of the body (oldest first)."""
        if self._cut_matrix is None:
            if self._cuts:
                self._cut_matrix = np.array(list(self._cuts.values()))
            else:
                self._cut_matrix = np.zeros((0, self.dim))
        return self._cut_matrix


@dataclass
class SeparationResult:
    inside: bool
    hyperplane: np.ndarray | None
    value: float


def separate_polar(oracle: CountingOracle, y, tol: float = 1e-9, scale: float = 1.0) -> SeparationResult:
    """Separate ``y`` from ``scale * C°`` with one LOO call.

    ``y`` lies in ``scale * C°`` iff ``sigma_C(y) <= scale``; when it does not,
    the support argmax ``x`` gives the cut ``<x, u> <= scale < <x, y>``.
    """
    oracle.sep_calls += 1
    value, x = oracle._support(as_point(y, oracle.dim))
    if value <= scale + tol:
        return SeparationResult(True, None, value)
    return SeparationResult(False, x, value)


def nnls(E: np.ndarray, f: np.ndarray, max_iter: int | None = None) -> np.ndarray:
    """Lawson-Hanson active-set solver for ``min |E z - f|`` over ``z >= 0``.

    Each step solves an exact least-squares problem on the passive columns,
    so the answer is accurate to rounding rather than to a solver tolerance.
    """
    m, n = E.shape
    z = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    max_iter = max_iter or 3 * n + 30
    unit = 4.0 * np.finfo(float).eps * math.sqrt(m) * max(1.0, float(np.abs(E).max()))
    best, best_norm = z.copy(), float(np.linalg.norm(f))
    for _ in range(max_iter):
        resid = f - E @ z
        norm = float(np.linalg.norm(resid))
        if norm < best_norm:
            best, best_norm = z.copy(), norm
        elif passive.any():
            # No decrease: the step was driven by rounding; stop before cycling.
            return best
        # Rounding in the gradient scales with the residual, not with f.
        tol = unit * norm
        grad = E.T @ resid
        grad[passive] = -np.inf
        j = int(np.argmax(grad))
        if grad[j] <= tol:
            return z
        passive[j] = True
        while True:
            idx = np.flatnonzero(passive)
            sol = np.linalg.lstsq(E[:, idx], f, rcond=None)[0]
            if sol.min() > 0:
                z = np.zeros(n)
                z[idx] = sol
                break
            # Step toward the unconstrained solution until a variable hits zero.
            neg = sol <= 0
            zi = z[idx]
            alpha = float(np.min(zi[neg] / (zi[neg] - sol[neg])))
            z[idx] = zi + alpha * (sol - zi)
            passive &= z > unit * float(np.abs(z).max())
            z[~passive] = 0.0
    raise SolverError("non-negative least squares did not converge")


def least_distance(p: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project ``p`` onto ``{u : A u <= b}`` (assumed nonempty).

    Lawson-Hanson least-distance programming: the projection step ``y = u - p``
    is recovered from the residual of a non-negative least-squares problem.
    """
    if A.shape[0] == 0:
        return p.copy()
    h = A @ p - b
    if np.all(h <= 0):
        return p.copy()
    n = p.shape[0]
    # The step has length at least D; solving for step / D keeps res[n] away
    # from zero, where the dual pricing would drown in rounding.
    D = float(np.max(h / np.linalg.norm(A, axis=1)))
    E = np.vstack([-A.T, h[None, :] / D])
    f = np.zeros(n + 1)
    f[n] = 1.0
    z = nnls(E, f)
    res = E @ z - f
    if abs(res[n]) < 1e-300:
        raise SolverError("least-distance subproblem is infeasible", p, math.inf)
    u = p - D * res[:n] / res[n]
    # Recovering u divides by res[n] ~ 1/(1 + |u - p|^2), which amplifies
    # rounding for long steps; re-solve the primal KKT system on the rows
    # the dual marked active and keep the more feasible answer.
    on = z > 0
    if not on.any():
        return u
    act, b_act = A[on], b[on]
    polished = p - np.linalg.lstsq(act, act @ p - b_act, rcond=None)[0]

    def defect(x):
        # Feasibility on every row plus tightness on the active ones.
        return max(float((A @ x - b).max()), float(np.abs(act @ x - b_act).max()))

    best = polished if defect(polished) <= defect(u) else u
    tol = 1e-14 * (1.0 + float(np.abs(p).max()))
    if float((A @ best - b).max()) > tol:
        best = _refine_active(p, A, b, on, best, tol)
    return best


def _refine_active(p, A, b, on, x, tol, max_iter=50):
    # Primal active-set repair for near-degenerate vertices, where a row
    # with a tiny multiplier was left out: add the worst violated row, drop
    # negative multipliers, re-solve the equality-constrained projection.
    on = on.copy()
    best, best_viol = x, float((A @ x - b).max())
    for _ in range(max_iter):
        viol = A @ x - b
        k = int(np.argmax(viol))
        if viol[k] <= tol:
            break
        on[k] = True
        while True:
            act = A[on]
            step = np.linalg.lstsq(act, act @ p - b[on], rcond=None)[0]
            lam = np.linalg.lstsq(act.T, step, rcond=None)[0]
            if lam.min() >= -tol or on.sum() == 1:
                break
            idx = np.flatnonzero(on)
            on[idx[int(np.argmin(lam))]] = False
        x = p - step
        v = float((A @ x - b).max())
        if v < best_viol:
            best, best_viol = x, v
    return best


class _ActiveSetProjector:
    """Projection onto ``{u : X u <= s}`` with an active-set warm start.

    Consecutive golden-section probes usually share the active set, so the
    KKT system on the previous active rows is tried before falling back to
    :func:`least_distance`.
    """

    def __init__(self):
        self.active = None

    def __call__(self, p, X, s):
        if X.shape[0] == 0:
            return p.copy()
        scale = 1.0 + float(np.abs(p).max())
        slack = 1e-14 * scale
        viol = X @ p - s
        if viol.max() <= 0:
            self.active = None
            return p.copy()
        if self.active is not None and self.active.shape[0] <= X.shape[1]:
            u = self._try_active(p, X, s, self.active, slack)
            if u is not None:
                return u
        u = least_distance(p, X, np.full(X.shape[0], s))
        tight = np.abs(X @ u - s) <= 1e-12 * scale
        self.active = X[tight] if tight.any() else None
        return u

    @staticmethod
    def _try_active(p, X, s, act, slack):
        if act.shape[0] == 1:
            a = act[0]
            lam0 = (float(a @ p) - s) / float(a @ a)
            if lam0 < -slack:
                return None
            u = p - lam0 * a
        else:
            try:
                lam = np.linalg.solve(act @ act.T, act @ p - s)
            except np.linalg.LinAlgError:
                return None
            if lam.min() < -slack:
                return None
            u = p - act.T @ lam
        if (X @ u - s).max() > slack:
            return None
        return u


def _polar_ball_radius(body: Body) -> float | None:
    if isinstance(body, EuclideanBall):
        return 1.0 / body.radius
    return None


def project_scaled_polar(
    oracle: CountingOracle,
    w,
    gamma: float,
    eps: float,
    delta: float,
    method: str = "cuts",
    max_iter: int | None = None,
) -> np.ndarray:
    """Approximately minimize ``|gamma u - w|^2`` over ``u`` in ``sqrt(1-eps) C°``.

    The returned point is feasible (its support value is at most the scale)
    and its objective is within ``delta`` of the optimum.  ``method`` is
    ``"cuts"`` (outer approximation with cached cuts) or ``"ellipsoid"``.
    """
    w = as_point(w, oracle.dim)
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if not 0.0 < delta:
        raise ValueError("delta must be positive")
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    if gamma == 0.0 or not w.any():
        return np.zeros(oracle.dim)
    s = math.sqrt(1.0 - eps)
    p = w / gamma
    # Objective is gamma^2 |u - p|^2, so the projection needs accuracy delta / gamma^2.
    target = delta / gamma**2
    ball = _polar_ball_radius(oracle.inner)
    if ball is not None:
        rad = s * ball
        n = float(np.linalg.norm(p))
        return p.copy() if n <= rad else p * (rad / n)
    if method == "cuts":
        return project_cuts(oracle, p, s, target, max_iter)
    if method == "ellipsoid":
        return _project_ellipsoid(oracle, p, s, target, max_iter)
    raise ValueError(f"unknown method {method!r}")


def project_cuts(oracle, p: np.ndarray, s: float, target: float, max_iter: int | None = None) -> np.ndarray:
    """Project ``p`` onto ``s C°`` to squared-distance accuracy ``target``.

    Unchecked inner routine of :func:`project_scaled_polar`'s default method.
    """
    d = oracle.dim
    max_iter = max_iter or 100 * d + 100
    projector = oracle.projector
    best, best_val = np.zeros(d), float(p @ p)
    lower = 0.0
    for _ in range(max_iter):
        X = oracle.cut_matrix()
        u = projector(p, X, s)
        diff = u - p
        lower = max(lower, float(diff @ diff))
        oracle.sep_calls += 1
        value, _ = oracle._support(u)
        cand = u if value <= s else u * (s / value)
        diff = cand - p
        val = float(diff @ diff)
        if val < best_val:
            best, best_val = cand, val
        gap = best_val - lower
        # Below ~1e-14 relative the gap is rounding noise, not progress.
        if gap <= target or gap <= GAP_FLOOR * max(1.0, float(p @ p)):
            return best
    raise SolverError("cutting-plane projection did not converge", best, best_val - lower)


def _project_ellipsoid(oracle, p, s, target, max_iter):
    d = oracle.dim
    if d < 2:
        raise ValueError("ellipsoid route needs d >= 2")
    rho = s / oracle.r
    center = np.zeros(d)
    shape = np.eye(d) * rho**2 * d
    if max_iter is None:
        max_iter = int(math.ceil(4 * d * d * math.log(max(2.0, rho * rho / target)))) + 20 * d
    best, best_val = np.zeros(d), float(p @ p)
    lower = 0.0
    for _ in range(max_iter):
        sep = separate_polar(oracle, center, tol=0.0, scale=s)
        if sep.inside:
            val = float(np.sum((center - p) ** 2))
            if val < best_val:
                best, best_val = center.copy(), val
            a = 2.0 * (center - p)
            width = math.sqrt(max(0.0, float(a @ shape @ a)))
            lower = max(lower, val - width)
        else:
            a = sep.hyperplane
        if best_val - lower <= target:
            return best
        Pa = shape @ a
        denom = math.sqrt(max(float(a @ Pa), 1e-300))
        center = center - Pa / (denom * (d + 1))
        shape = (d * d / (d * d - 1.0)) * (shape - (2.0 / (d + 1)) * np.outer(Pa, Pa) / denom**2)
        shape = 0.5 * (shape + shape.T)
    raise SolverError("ellipsoid projection did not converge", best, best_val - lower)


def hull_project(X: np.ndarray, w: np.ndarray, max_iter: int = 1000) -> np.ndarray:
    """Closest point to ``w`` in the convex hull of the rows of ``X``.

    Wolfe's minimum-norm-point algorithm on the shifted points ``X - w``;
    the result is an exact convex combination of rows of ``X``.
    """
    P = X - w
    # Rounding in <x, P_j> grows with |x| times the hull diameter.
    diam = max(1.0, float(np.max(np.abs(X))))
    S = [int(np.argmin(np.sum(P * P, axis=1)))]
    lam = np.array([1.0])
    x = P[S[0]].copy()
    for _ in range(max_iter):
        # <P_j, x> differs from <X_j, x> by a constant, and the latter keeps
        # its precision when w is far away.
        j = int(np.argmin(X @ x))
        if float(x @ (lam @ X[S] - X[j])) <= 1e-14 * diam * max(1.0, float(np.linalg.norm(x))) or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            # Affine min-norm point from differences of the original rows,
            # which stay exact even when w is far from the hull.
            D = X[S[1:]] - X[S[0]]
            mu = np.linalg.lstsq(D.T, -P[S[0]], rcond=None)[0]
            alpha = np.concatenate([[1.0 - mu.sum()], mu])
            if np.all(alpha > 1e-15):
                lam = alpha
                x = P[S[0]] + lam[1:] @ D
                break
            neg = alpha <= 1e-15
            ratios = lam[neg] / (lam[neg] - alpha[neg])
            theta = float(ratios.min()) if ratios.size else 1.0
            lam = lam + theta * (alpha - lam)
            keep = lam > 1e-15
            S = [s for s, kp in zip(S, keep) if kp]
            lam = lam[keep] / lam[keep].sum()
            x = P[S[0]] + lam[1:] @ (X[S[1:]] - X[S[0]])
    return lam @ X[S]


def euclidean_project(oracle: CountingOracle, w, tol: float = 1e-9, max_iter: int = 500) -> np.ndarray:
    """Project ``w`` onto C using only the LOO.

    Closed form for balls.  Otherwise fully corrective Frank-Wolfe: project
    onto the hull of the remembered LOO points, then query the LOO in the
    direction ``x - w``.  The Frank-Wolfe gap ``2 (sigma_C(w - x) - <w - x, x>)``
    bounds the excess squared distance, and the loop stops when it is at most
    ``tol``.
    """
    w = as_point(w, oracle.dim)
    body = oracle.inner
    if isinstance(body, EuclideanBall):
        n = float(np.linalg.norm(w))
        return w.copy() if n <= body.radius else w * (body.radius / n)
    if oracle.cut_matrix().shape[0] == 0:
        oracle.lin_min(-w)
    best, gap = None, math.inf
    for _ in range(max_iter):
        X = oracle.cut_matrix()
        # The origin is in C, so it may always join the hull.
        x = hull_project(np.vstack([X, np.zeros(oracle.dim)]), w)
        y = w - x
        if not y.any():
            return x
        sigma, _ = oracle.support(y)
        gap = 2.0 * (sigma - float(y @ x))
        best = x
        if gap <= max(tol, GAP_FLOOR * float(np.linalg.norm(w)) * body.R):
            return x
    raise SolverError("euclidean projection did not converge", best, gap)
