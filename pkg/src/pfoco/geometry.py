"""Convex bodies and their oracles.

Every body contains the origin in its interior and is sandwiched between two
Euclidean balls ``B(r) ⊆ C ⊆ B(R)``.  Bodies expose linear minimization
(the LOO), support, gauge and membership.  They are immutable after
construction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class BodySandwich:
    r: float
    R: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"inner radius must be positive, got {self.r}")
        if self.R < self.r:
            raise ValueError(f"outer radius {self.R} smaller than inner radius {self.r}")

    @property
    def kappa(self) -> float:
        return self.R / self.r


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Convert ``x`` to a finite 1-d float array, checking the dimension."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ValueError(f"expected a vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point has non-finite entries")
    return arr


class Body:
    """Base class for a convex body containing the origin.

    Subclasses implement ``lin_min`` and ``gauge``; ``support`` and
    ``membership`` derive from them.  ``mu`` is the declared strong-convexity
    modulus (0 when the body is not declared strongly convex).
    """

    dim: int
    sandwich: BodySandwich
    mu: float = 0.0

    @property
    def r(self) -> float:
        return self.sandwich.r

    @property
    def R(self) -> float:
        return self.sandwich.R

    @property
    def kappa(self) -> float:
        return self.sandwich.kappa

    def lin_min(self, g) -> np.ndarray:
        return self._lin_min(as_point(g, self.dim))

    def _lin_min(self, g: np.ndarray) -> np.ndarray:
        """``lin_min`` without input validation, for internal hot loops."""
        raise NotImplementedError

    def gauge(self, w, tol: float = 1e-12) -> float:
        raise NotImplementedError

    def gauge_many(self, W) -> np.ndarray:
        """Gauge of every row of ``W``."""
        return np.array([self.gauge(w) for w in np.asarray(W, dtype=float)])

    def support(self, w) -> tuple[float, np.ndarray]:
        """Return ``(sigma(w), argmax)`` through one call to ``lin_min(-w)``."""
        w = as_point(w, self.dim)
        v = self.lin_min(-w)
        return float(v @ w), v

    def membership(self, w, tol: float = 0.0) -> bool:
        return self.gauge(w) <= 1.0 + tol

    def boundary_point(self, direction) -> np.ndarray:
        """Scale a nonzero direction onto the boundary of the body."""
        d = as_point(direction, self.dim)
        g = self.gauge(d)
        if not g > 0:
            raise ValueError("direction must be nonzero")
        return d / g


class EuclideanBall(Body):
    def __init__(self, radius: float = 1.0, dim: int = 2):
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.dim = int(dim)
        self.sandwich = BodySandwich(self.radius, self.radius)
        self.mu = 1.0 / self.radius

    def __repr__(self):
        return f"EuclideanBall(radius={self.radius}, dim={self.dim})"

    def _lin_min(self, g: np.ndarray) -> np.ndarray:
        n = math.sqrt(float(g @ g))
        if n == 0.0:
            return np.zeros(self.dim)
        return -self.radius * g / n

    def gauge(self, w, tol: float = 1e-12) -> float:
        return float(np.linalg.norm(as_point(w, self.dim))) / self.radius

    def gauge_many(self, W) -> np.ndarray:
        return np.linalg.norm(np.asarray(W, dtype=float), axis=1) / self.radius

    def membership(self, w, tol: float = 0.0) -> bool:
        return float(np.linalg.norm(as_point(w, self.dim))) <= self.radius * (1.0 + tol)


class LpBall(Body):
    """``{x : ||x||_p <= radius}`` for ``p`` in (1, 2].

    The modulus defaults to ``(p - 1) d^(1/2 - 1/p) / radius``; pass ``mu`` to
    override it.  Either way it is a declared value, checked by
    :func:`verify_strong_convexity`.
    """

    def __init__(self, p: float = 1.5, radius: float = 1.0, dim: int = 2, mu: float | None = None):
        if not 1.0 < p <= 2.0:
            raise ValueError(f"p must lie in (1, 2], got {p}")
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.p = float(p)
        self.q = self.p / (self.p - 1.0)
        self.radius = float(radius)
        self.dim = int(dim)
        shrink = self.dim ** (0.5 - 1.0 / self.p)
        self.sandwich = BodySandwich(self.radius * shrink, self.radius)
        self.mu = (self.p - 1.0) * shrink / self.radius if mu is None else float(mu)

    def __repr__(self):
        return f"LpBall(p={self.p}, radius={self.radius}, dim={self.dim})"

    def _lin_min(self, g: np.ndarray) -> np.ndarray:
        a = np.abs(g)
        scale = a.max()
        if scale == 0.0:
            return np.zeros(self.dim)
        # Hölder equality case; rescale first to keep powers in range.
        a = a / scale
        pw = a ** (self.q - 1.0)
        norm_q = np.sum(a**self.q) ** (1.0 / self.q)
        return -self.radius * np.sign(g) * pw / norm_q ** (self.q - 1.0)

    def gauge(self, w, tol: float = 1e-12) -> float:
        return float(self.gauge_many(as_point(w, self.dim)[None, :])[0])

    def gauge_many(self, W) -> np.ndarray:
        A = np.abs(np.asarray(W, dtype=float))
        # Scale by the largest entry so tiny vectors do not underflow.
        m = A.max(axis=1)
        safe = np.where(m > 0, m, 1.0)
        return m * np.sum((A / safe[:, None]) ** self.p, axis=1) ** (1.0 / self.p) / self.radius


class Polytope(Body):
    """Convex hull of a vertex list; the origin must be an interior point.

    Membership and the gauge use the facet inequalities computed once by
    qhull; :meth:`gauge_bisect` recovers the gauge from membership alone.
    """

    def __init__(self, vertices, mu: float = 0.0):
        V = np.array(vertices, dtype=float)
        if V.ndim != 2 or V.shape[0] < 2:
            raise ValueError("vertices must be an (n, d) array with n >= 2")
        if not np.all(np.isfinite(V)):
            raise ValueError("vertices must be finite")
        self.vertices = V
        self.vertices.setflags(write=False)
        self.dim = V.shape[1]
        if self.dim == 1:
            lo, hi = V.min(), V.max()
            normals = np.array([[1.0], [-1.0]])
            offsets = np.array([hi, -lo])
        else:
            hull = ConvexHull(V)
            normals = hull.equations[:, :-1]
            offsets = -hull.equations[:, -1]
        if offsets.min() <= 0:
            raise ValueError("origin is not in the interior of the polytope")
        # Row i of _facets is a_i / h_i, so the gauge is max_i <row_i, w>.
        self._facets = normals / offsets[:, None]
        self.sandwich = BodySandwich(float(offsets.min()), float(np.linalg.norm(V, axis=1).max()))
        self.mu = float(mu)

    def __repr__(self):
        return f"Polytope(n_vertices={len(self.vertices)}, dim={self.dim})"

    def _lin_min(self, g: np.ndarray) -> np.ndarray:
        if not g.any():
            return np.zeros(self.dim)
        # np.argmin keeps the first minimizer: lowest storage index wins ties.
        return self.vertices[int(np.argmin(self.vertices @ g))].copy()

    def _facet_gauge(self, w: np.ndarray) -> float:
        return max(0.0, float((self._facets @ w).max()))

    def gauge_many(self, W) -> np.ndarray:
        return np.maximum(0.0, (np.asarray(W, dtype=float) @ self._facets.T).max(axis=1))

    def membership(self, w, tol: float = 0.0) -> bool:
        return self._facet_gauge(as_point(w, self.dim)) <= 1.0 + tol

    def gauge(self, w, tol: float = 1e-12) -> float:
        """Exact gauge from the facet inequalities: ``max_i <a_i, w> / h_i``."""
        return self._facet_gauge(as_point(w, self.dim))

    def gauge_bisect(self, w, tol: float = 1e-12, max_iter: int = 60) -> float:
        """Gauge by bisection on membership over ``[|w|/R, |w|/r]``."""
        w = as_point(w, self.dim)
        n = float(np.linalg.norm(w))
        if n == 0.0:
            return 0.0
        lo, hi = n / self.R, n / self.r
        for _ in range(max_iter):
            if hi - lo <= tol:
                break
            mid = 0.5 * (lo + hi)
            if self._facet_gauge(w / mid) <= 1.0:
                hi = mid
            else:
                lo = mid
        return hi


def cube(half_width: float = 1.0, dim: int = 2) -> Polytope:
    """Axis-aligned cube ``[-h, h]^d`` as a vertex-listed polytope."""
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * dim, indexing="ij")).reshape(dim, -1).T
    return Polytope(half_width * corners)


def load_vertices(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row and not row[0].startswith("#")]
    return np.array(rows)


def parse_body(spec: str, base_dir: str | Path | None = None) -> Body:
    """Build a body from a config string.

    Grammar: ``ball:R=1.0[,d=2]``, ``lp:p=1.5,r=1.0[,d=2][,mu=...]``,
    ``poly:file=verts.csv`` and ``cube:h=1.0[,d=2]``.
    """
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"malformed body parameter {item!r} in {spec!r}")
        params[key.strip()] = value.strip()
    d = int(params.get("d", 2))
    if kind == "ball":
        return EuclideanBall(float(params.get("R", 1.0)), dim=d)
    if kind == "lp":
        mu = float(params["mu"]) if "mu" in params else None
        return LpBall(float(params.get("p", 1.5)), float(params.get("r", 1.0)), dim=d, mu=mu)
    if kind == "poly":
        path = Path(params["file"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return Polytope(load_vertices(path))
    if kind == "cube":
        return cube(float(params.get("h", 1.0)), dim=d)
    raise ValueError(f"unknown body kind {kind!r}")


def _random_directions(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    dirs = rng.standard_normal((n, dim))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def strong_convexity_margin(body, mu: float, n_samples: int, seed: int) -> float:
    """Smallest ``1 - gauge(theta x + (1-theta) y + v)`` over random draws.

    ``x`` and ``y`` are boundary points, ``theta`` is uniform on [0, 1] and
    ``v`` is uniform on the sphere of radius ``mu theta (1-theta) |x-y|^2 / 2``.
    A negative value is a witness against the modulus ``mu``.
    """
    rng = np.random.default_rng(seed)
    dim = body.dim
    worst = math.inf
    for _ in range(n_samples):
        x = body.boundary_point(rng.standard_normal(dim))
        y = body.boundary_point(rng.standard_normal(dim))
        theta = rng.uniform()
        radius = mu * theta * (1.0 - theta) * float(np.sum((x - y) ** 2)) / 2.0
        v = _random_directions(rng, 1, dim)[0] * radius
        worst = min(worst, 1.0 - body.gauge(theta * x + (1.0 - theta) * y + v))
    return worst


def verify_strong_convexity(body, mu: float, n_samples: int, seed: int) -> bool:
    """Sampled check of the strong-convexity definition (supports, never proves)."""
    if not mu > 0 or n_samples < 1:
        raise ValueError("need mu > 0 and n_samples >= 1")
    return strong_convexity_margin(body, mu, n_samples, seed) >= -DEFAULT_TOL


def support_lipschitz_check(body: Body, mu: float, x, y) -> bool:
    """Check ``|u - v| <= 2|x - y| / (mu (|x| + |y|))`` for the support argmaxes."""
    x = as_point(x, body.dim)
    y = as_point(y, body.dim)
    if not x.any() or not y.any() or not mu > 0:
        raise ValueError("x and y must be nonzero and mu positive")
    _, u = body.support(x)
    _, v = body.support(y)
    lhs = float(np.linalg.norm(u - v))
    rhs = 2.0 * float(np.linalg.norm(x - y)) / (mu * (np.linalg.norm(x) + np.linalg.norm(y)))
    return lhs <= rhs + DEFAULT_TOL
