"""Base-region descriptors for a parameter space.

Three shapes are supported: axis-aligned boxes (possibly unbounded above),
polytopes ``{a : A a <= b}`` given with their vertices, and unions of
straight segments.  Each exposes membership, Euclidean projection, sampling
and a default polyline path for the moment-matching bisection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ConfigError

_TOL = 1e-10


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lo), _vec(self.hi)
        if lo.shape != hi.shape or np.any(lo > hi) or not np.all(np.isfinite(lo)):
            raise ConfigError("box needs finite lo <= hi of equal length")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def k(self) -> int:
        return self.lo.size

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.hi)))

    def contains(self, a, tol: float = _TOL) -> bool:
        a = _vec(a)
        return bool(np.all(a >= self.lo - tol) and np.all(a <= self.hi + tol))

    def project(self, a) -> np.ndarray:
        return np.clip(_vec(a), self.lo, self.hi)

    def bbox(self):
        return self.lo.copy(), self.hi.copy()

    def max_norm(self) -> float:
        if not self.bounded:
            return float("inf")
        corner = np.maximum(np.abs(self.lo), np.abs(self.hi))
        return float(np.linalg.norm(corner))

    def sample(self, rng: np.random.Generator, count: int, cap: float = 1e3) -> np.ndarray:
        hi = np.minimum(self.hi, self.lo + cap)
        return self.lo + rng.random((count, self.k)) * (hi - self.lo)

    def path(self) -> np.ndarray:
        """Main diagonal from ``lo`` to ``hi`` (unbounded sides capped)."""
        hi = np.where(np.isfinite(self.hi), self.hi, self.lo + 1e3)
        return np.stack([self.lo, hi])

    def grid(self, n_per_axis: int) -> np.ndarray:
        axes = [np.linspace(l, h, n_per_axis) for l, h in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_json(self) -> dict:
        return {"type": "box", "lo": self.lo.tolist(),
                "hi": [None if not np.isfinite(v) else float(v) for v in self.hi]}


@dataclass(frozen=True, eq=False)
class Polytope:
    """``{a : A a <= b}``; ``vertices`` must list its extreme points in path order."""

    A: np.ndarray
    b: np.ndarray
    vertices: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = _vec(self.b)
        V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if A.shape[0] != b.size or A.shape[1] != V.shape[1]:
            raise ConfigError("polytope shapes disagree")
        if np.any(V @ A.T > b + 1e-8):
            raise ConfigError("listed vertices violate the inequalities")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "vertices", V)

    @property
    def k(self) -> int:
        return self.A.shape[1]

    bounded = True

    def contains(self, a, tol: float = _TOL) -> bool:
        return bool(np.all(self.A @ _vec(a) <= self.b + tol))

    def project(self, a) -> np.ndarray:
        a = _vec(a)
        if self.contains(a):
            return a
        cons = {"type": "ineq", "fun": lambda x: self.b - self.A @ x,
                "jac": lambda x: -self.A}
        x0 = self.vertices.mean(axis=0)
        res = optimize.minimize(lambda x: 0.5 * np.sum((x - a) ** 2), x0,
                                jac=lambda x: x - a, constraints=[cons],
                                method="SLSQP", options={"ftol": 1e-14, "maxiter": 200})
        return res.x

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def max_norm(self) -> float:
        return float(np.linalg.norm(self.vertices, axis=1).max())

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        weights = rng.dirichlet(np.ones(len(self.vertices)), size=count)
        return weights @ self.vertices

    def path(self) -> np.ndarray:
        return self.vertices.copy()

    def to_json(self) -> dict:
        return {"type": "polytope", "A": self.A.tolist(), "b": self.b.tolist(),
                "vertices": self.vertices.tolist()}


@dataclass(frozen=True, eq=False)
class Segments:
    """Union of closed segments; consecutive segments sharing endpoints form
    the default path."""

    points: np.ndarray  # shape (m, 2, k)

    def __post_init__(self):
        P = np.asarray(self.points, dtype=float)
        if P.ndim == 2:
            P = P[:, :, None]
        if P.ndim != 3 or P.shape[1] != 2:
            raise ConfigError("segments need shape (m, 2, k)")
        object.__setattr__(self, "points", P)

    @property
    def k(self) -> int:
        return self.points.shape[2]

    bounded = True

    def _nearest(self, a):
        a = _vec(a)
        best, best_d = None, np.inf
        for p, q in self.points:
            d = q - p
            L2 = float(d @ d)
            t = 0.0 if L2 == 0 else float(np.clip((a - p) @ d / L2, 0.0, 1.0))
            x = p + t * d
            dist = float(np.linalg.norm(a - x))
            if dist < best_d:
                best, best_d = x, dist
        return best, best_d

    def contains(self, a, tol: float = _TOL) -> bool:
        return self._nearest(a)[1] <= tol * (1 + np.linalg.norm(_vec(a)))

    def project(self, a) -> np.ndarray:
        return self._nearest(a)[0]

    def bbox(self):
        flat = self.points.reshape(-1, self.k)
        return flat.min(axis=0), flat.max(axis=0)

    def max_norm(self) -> float:
        return float(np.linalg.norm(self.points.reshape(-1, self.k), axis=1).max())

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        lengths = np.linalg.norm(self.points[:, 1] - self.points[:, 0], axis=1)
        probs = lengths / lengths.sum() if lengths.sum() > 0 else None
        idx = rng.choice(len(self.points), size=count, p=probs)
        t = rng.random(count)[:, None]
        return self.points[idx, 0] + t * (self.points[idx, 1] - self.points[idx, 0])

    def path(self) -> np.ndarray:
        pts = [self.points[0, 0], self.points[0, 1]]
        for p, q in self.points[1:]:
            if np.allclose(p, pts[-1]):
                pts.append(q)
            else:
                break
        return np.stack(pts)

    def to_json(self) -> dict:
        return {"type": "segments", "points": self.points.tolist()}


Region = (Box, Polytope, Segments)


def region_from_json(data: dict):
    kind = data.get("type")
    if kind == "box":
        hi = [np.inf if v is None else v for v in data["hi"]]
        return Box(np.asarray(data["lo"], float), np.asarray(hi, float))
    if kind == "polytope":
        return Polytope(data["A"], data["b"], data["vertices"])
    if kind == "segments":
        return Segments(data["points"])
    raise ConfigError(f"unknown region type {kind!r}")


def interval(lo: float, hi: float = np.inf) -> Box:
    """One-dimensional box ``[lo, hi]``."""
    return Box(np.array([lo], float), np.array([hi], float))
