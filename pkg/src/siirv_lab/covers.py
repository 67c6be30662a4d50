"""Covers: Euclidean nets, single-term sparsification, SIIERV and SIIURV
covers, moment matching and the Poisson negative binomial specialization."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import approx, pmf_core
from .constants import Constants, resolve
from .errors import BracketFailure, BudgetExceeded, ConfigError, GridOverflow
from .expfam import ExpFamilySpec, ParamVector, as_param, pmf_member
from .geometry import bound_parameter, r_crit
from .pmf_core import PMFTable
from .regions import Box, Segments

GRID_CAP = 10**7
DEFAULT_BUDGET = 50_000
MEMBER_TAIL = 1e-13


# ------------------------------------------------------------ euclid nets


def _candidates(region, r: float, pitch: float) -> np.ndarray:
    """Grid (or segment samples) of the given pitch meeting the region."""
    k = region.k
    if isinstance(region, Segments):
        pts = []
        for p, q in region.points:
            n = max(1, int(math.ceil(np.linalg.norm(q - p) / pitch)))
            t = np.linspace(0.0, 1.0, n + 1)[:, None]
            pts.append(p + t * (q - p))
        return np.vstack(pts)
    lo, hi = region.bbox()
    lo = np.maximum(lo, -r)
    hi = np.minimum(hi, r)
    if np.any(lo > hi):
        return np.zeros((0, k))
    counts = [max(1, int(math.ceil((h - l) / pitch)) + 1) for l, h in zip(lo, hi)]
    total = math.prod(counts)
    if total > GRID_CAP:
        raise GridOverflow(f"{total} grid candidates exceed the cap {GRID_CAP}")
    axes = [np.linspace(l, h, c) for l, h, c in zip(lo, hi, counts)]
    grid = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    if isinstance(region, Box):
        return grid
    # keep points inside, and project those within half a cell diagonal
    A, b = region.A, region.b
    viol = (grid @ A.T - b) / np.linalg.norm(A, axis=1)
    worst = viol.max(axis=1)
    inside = grid[worst <= 1e-12]
    near = grid[(worst > 1e-12) & (worst <= pitch * math.sqrt(k) / 2)]
    projected = np.array([region.project(x) for x in near]).reshape(-1, k)
    return np.vstack([inside, projected])


def _greedy(cands: np.ndarray, radius: float) -> np.ndarray:
    """Keep a candidate when no kept point lies within ``radius``."""
    if cands.shape[0] == 0:
        return cands
    k = cands.shape[1]
    if k == 1:
        xs = np.sort(cands[:, 0])
        kept = [xs[0]]
        for x in xs[1:]:
            if x - kept[-1] > radius:
                kept.append(x)
        return np.array(kept)[:, None]
    cells: dict = {}
    kept = []
    offsets = list(itertools.product((-1, 0, 1), repeat=k))
    for x in cands:
        key = tuple(np.floor(x / radius).astype(int))
        hit = False
        for off in offsets:
            for j in cells.get(tuple(a + b for a, b in zip(key, off)), ()):
                if np.sum((kept[j] - x) ** 2) <= radius * radius:
                    hit = True
                    break
            if hit:
                break
        if not hit:
            cells.setdefault(key, []).append(len(kept))
            kept.append(x)
    return np.array(kept)


def euclid_cover(region, r: float, eps: float) -> np.ndarray:
    """Greedy eps-net of ``region`` (assumed inside the ball of radius r).

    Candidates sit on a grid of pitch eps/(2 sqrt k), so every region point is
    within eps/4 of one; the greedy pass keeps candidates pairwise more than
    3 eps/4 apart and therefore covers the whole region at radius eps.
    """
    if eps <= 0 or r <= 0:
        raise ConfigError("eps and r must be positive")
    k = region.k
    pitch = eps / (2.0 * math.sqrt(k))
    cands = _candidates(region, r, pitch)
    if cands.shape[0] > GRID_CAP:
        raise GridOverflow(f"{cands.shape[0]} candidates exceed the cap {GRID_CAP}")
    return _greedy(cands, 0.75 * eps)


# ------------------------------------------------------ single-term covers


@dataclass(frozen=True, eq=False)
class ParamCover:
    array: np.ndarray  # (N, k)
    radius_tv: float
    radius_euclid: float
    r_crit: float

    @property
    def points(self) -> list[ParamVector]:
        return [ParamVector(row) for row in self.array]

    def __len__(self):
        return self.array.shape[0]

    @property
    def size_bound(self) -> float:
        k = self.array.shape[1]
        return math.ceil((1.0 + 2.0 * self.r_crit / self.radius_euclid) ** k)

    def nearest(self, a, count: int = 1) -> np.ndarray:
        """Indices of the ``count`` Euclid-nearest cover points."""
        d = np.linalg.norm(self.array - as_param(a).a, axis=1)
        count = min(count, d.size)
        idx = np.argpartition(d, count - 1)[:count]
        return idx[np.argsort(d[idx])]

    def to_json(self) -> dict:
        return {"param_points": self.array.tolist(), "radius_tv": self.radius_tv,
                "radius_euclid": self.radius_euclid, "r_crit": self.r_crit}

    @classmethod
    def from_json(cls, data: dict) -> "ParamCover":
        return cls(np.asarray(data["param_points"], float), data["radius_tv"],
                   data["radius_euclid"], data["r_crit"])


def _sphere_net(spec: ExpFamilySpec, radius: float, pitch: float) -> np.ndarray:
    """Net of cone intersected with the sphere of the given radius."""
    Z = spec.cone.Z
    k = spec.k
    if k == 1:
        return radius * Z.T
    cands = _candidates(Box(-radius * np.ones(k), radius * np.ones(k)), radius, pitch)
    from .geometry import _nnls

    out = []
    for x in cands:
        if abs(np.linalg.norm(x) - radius) > pitch * math.sqrt(k):
            continue
        y, _ = _nnls(Z, x)
        p = Z @ y
        n = np.linalg.norm(p)
        if n > 0:
            out.append(radius * p / n)
    return np.array(out).reshape(-1, k)


def sparsify_family(spec: ExpFamilySpec, eps: float,
                    constants: Constants | None = None) -> ParamCover:
    """Finite set of parameters whose members eps-cover the family in TV.

    Members within Euclidean distance eps sqrt(2/Lambda) are eps-close, so
    when the base region fits inside the ball of radius r_crit we net it
    directly.  Otherwise the points beyond r_crit are pulled onto the sphere
    by :func:`geometry.bound_parameter` (costing eps/2) and the sphere part of
    the cone is netted as well, each net at eps/2.
    """
    if not 0 < eps < 1:
        raise ConfigError(f"eps must lie in (0, 1), got {eps}")
    region = spec.base_region
    rc = r_crit(spec, eps, constants)
    if region.max_norm() <= rc:
        radius = eps * math.sqrt(2.0 / spec.Lambda)
        pts = euclid_cover(region, rc, radius)
        return ParamCover(pts, eps, radius, rc)
    rc = r_crit(spec, eps / 2, constants)
    radius = 0.5 * eps * math.sqrt(2.0 / spec.Lambda)
    pitch = radius / (2.0 * math.sqrt(spec.k))
    inner = _candidates(region, rc, pitch)
    inner = inner[np.linalg.norm(inner, axis=1) <= rc]
    sphere = _sphere_net(spec, rc, pitch)
    cands = np.vstack([inner, sphere])
    pts = _greedy(cands, 0.75 * radius)
    return ParamCover(pts, eps, radius, rc)


def bound_into_cover(spec: ExpFamilySpec, cover: ParamCover, a,
                     constants: Constants | None = None) -> ParamVector:
    """Parameter the cover is guaranteed to be near: a itself, or its
    projection onto the r_crit sphere."""
    a = as_param(a)
    if np.linalg.norm(a.a) <= cover.r_crit:
        return a
    return bound_parameter(spec, a, cover.radius_tv / 2, constants)


# ---------------------------------------------------------- moment matching


def member_moments(spec: ExpFamilySpec, b) -> tuple[float, float]:
    """(mean, variance) of the family member with parameter b."""
    b = as_param(b)
    cache = spec._cache.setdefault("moments", {})
    hit = cache.get(b.key)
    if hit is None:
        m = pmf_core.moments(pmf_member(spec, b, MEMBER_TAIL))
        hit = cache[b.key] = (m.mean, m.variance)
    return hit


def _polyline(path: np.ndarray):
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0:
        raise ConfigError("path has zero length")

    def point(t: float) -> np.ndarray:
        s = min(max(t, 0.0), 1.0) * total
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
        frac = 0.0 if seg[i] == 0 else (s - cum[i]) / seg[i]
        return path[i] + frac * (path[i + 1] - path[i])

    return point


def moment_match(spec: ExpFamilySpec, target_mean: float, target_var: float,
                 path=None, samples_per_segment: int = 16) -> tuple[ParamVector, int]:
    """Find b on the path with Var_b/E_b = target_var/target_mean (or E_b = 0
    when the target mean is 0) and m = ceil(target_var / Var_b).

    Then m Var_b lies in [target_var, target_var + Var_b] and m E_b is within
    |E_b| of target_mean, up to a 1e-10 relative shortfall allowed in the
    ceiling.  Bisection runs to machine precision in the path parameter.
    """
    if not target_var > 0:
        raise ConfigError("target variance must be positive")
    path = np.atleast_2d(np.asarray(spec.base_region.path() if path is None else path, float))
    if path.shape[1] != spec.k and path.shape[0] == spec.k:
        path = path.T
    point = _polyline(path)

    if target_mean == 0:
        def g(t):
            return member_moments(spec, point(t))[0]
    else:
        ratio = target_var / target_mean

        def g(t):
            mean, var = member_moments(spec, point(t))
            if mean == 0 or np.sign(mean) != np.sign(target_mean):
                return math.nan
            return var / mean - ratio

    ts = np.linspace(0.0, 1.0, samples_per_segment * (len(path) - 1) + 1)
    vals = [g(t) for t in ts]
    bracket = None
    for i, v in enumerate(vals):
        if v == 0:
            bracket = (ts[i], ts[i])
            break
        if i and not math.isnan(v) and not math.isnan(vals[i - 1]) and (v > 0) != (vals[i - 1] > 0):
            bracket = (ts[i - 1], ts[i])
            break
    if bracket is None:
        raise BracketFailure("path does not bracket the target",
                             endpoint_values=(vals[0], vals[-1]))
    lo, hi = bracket
    g_lo = g(lo)
    for _ in range(200):
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0:
            lo = hi = mid
            break
        if (gm > 0) == (g_lo > 0):
            lo, g_lo = mid, gm
        else:
            hi = mid
    t = lo if abs(g(lo)) <= abs(g(hi)) else hi
    b = ParamVector(point(t))
    _, var_b = member_moments(spec, b)
    # the ceiling forgives bisection round-off so i.i.d. targets map to their own m
    m = max(1, int(math.ceil(target_var / var_b * (1.0 - 1e-10))))
    return b, m


# ----------------------------------------------------------- SIIERV covers


def n_crit_terms(spec: ExpFamilySpec, eps: float,
                 constants: Constants | None = None) -> tuple[int, dict]:
    """max(n_1, ..., n_4) with the pinned constants; also returns the parts."""
    c = resolve(constants)
    B, g, L = spec.B, spec.gamma, max(spec.L, 0.0)
    e2 = eps * eps
    parts = {
        "n1": c.c_n1 * B**2 / (e2 * g**3),
        "n2": c.c_n2 * B**7 / (e2 * g**7),
        "n3": c.c_n3 * B**7.5 / (e2 * g**8),
        "n4": c.c_n4 * (L * L + math.sqrt(B)) / (e2 * g**2),
    }
    top = max(parts.values())
    return (int(math.ceil(top)) if top < 1e18 else 10**18), parts


@dataclass(frozen=True, eq=False)
class DenseGrid:
    """Candidates (b, m) for b in a parameter net and m in [m_lo, m_hi]."""

    net: ParamCover
    m_lo: int
    m_hi: int

    def __len__(self):
        return len(self.net) * (self.m_hi - self.m_lo + 1)

    def __iter__(self) -> Iterator[tuple[ParamVector, int]]:
        for row in self.net.array:
            for m in range(self.m_lo, self.m_hi + 1):
                yield ParamVector(row), m

    def to_json(self) -> dict:
        return {"net": self.net.to_json(), "m_lo": self.m_lo, "m_hi": self.m_hi}


@dataclass(frozen=True, eq=False)
class CoverSet:
    """Sparse part: multisets of ``sparse_terms`` points of ``sparse`` (lazy).
    Dense part: (b, m) pairs, present only when n exceeds n'_crit."""

    eps: float
    n: int
    n_crit: int
    sparse: ParamCover | None
    sparse_terms: int
    dense: DenseGrid | None
    parts: dict = field(default_factory=dict)

    @property
    def regime(self) -> str:
        return "sparse" if self.dense is None else "dense"

    def sparse_size(self) -> int:
        if self.sparse is None:
            return 0
        return math.comb(len(self.sparse) + self.sparse_terms - 1, self.sparse_terms)

    def sparse_candidates(self) -> Iterator[tuple]:
        if self.sparse is None:
            return iter(())
        return itertools.combinations_with_replacement(range(len(self.sparse)),
                                                       self.sparse_terms)

    def candidate_spec(self, cid) -> pmf_core.SIIRVSpec:
        """SIIRVSpec for a candidate id (a tuple of sparse indices or
        ("dense", net index, m))."""
        if cid and cid[0] == "dense":
            _, i, m = cid
            b = ParamVector(self.dense.net.array[i])
            return pmf_core.SIIRVSpec(tuple([b] * m), max(m, self.n))
        pts = [ParamVector(self.sparse.array[i]) for i in cid]
        return pmf_core.SIIRVSpec(tuple(pts), max(len(pts), self.n))

    def to_json(self) -> dict:
        return {"eps": self.eps, "n": self.n, "n_crit": self.n_crit,
                "sparse": None if self.sparse is None else
                {**self.sparse.to_json(), "n_terms": self.sparse_terms},
                "dense": None if self.dense is None else self.dense.to_json(),
                "parts": self.parts}

    @classmethod
    def from_json(cls, data: dict) -> "CoverSet":
        sp = data.get("sparse")
        de = data.get("dense")
        return cls(data["eps"], data["n"], data["n_crit"],
                   None if sp is None else ParamCover.from_json(sp),
                   0 if sp is None else sp["n_terms"],
                   None if de is None else DenseGrid(ParamCover.from_json(de["net"]),
                                                     de["m_lo"], de["m_hi"]),
                   data.get("parts", {}))


def cover_siierv(spec: ExpFamilySpec, n: int, eps: float,
                 constants: Constants | None = None) -> CoverSet:
    """eps-cover of all order-n sums of family members.

    Every term has variance at least gamma, so no term is negligible and an
    order-n sum is matched either term by term (n <= n'_crit; each term
    within eps/n) or, for larger n, by an i.i.d. sum from the dense grid.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    if not 0 < eps < 1:
        raise ConfigError(f"eps must lie in (0, 1), got {eps}")
    ncrit, parts = n_crit_terms(spec, eps, constants)
    if n <= ncrit:
        sparse = sparsify_family(spec, eps / n, constants)
        return CoverSet(eps, n, ncrit, sparse, n, None, parts)
    m_lo = max(1, int(math.ceil(ncrit * spec.gamma / math.sqrt(spec.B))))
    m_hi = int(math.ceil(n * math.sqrt(spec.B) / spec.gamma))
    radius = (eps / m_hi) * math.sqrt(2.0 / spec.Lambda)
    rc = r_crit(spec, eps, constants)
    pts = euclid_cover(spec.base_region, max(rc, spec.base_region.max_norm()), radius)
    net = ParamCover(pts, eps / m_hi, radius, rc)
    return CoverSet(eps, n, ncrit, None, 0, DenseGrid(net, m_lo, m_hi), parts)


@dataclass
class NearestResult:
    candidate: tuple
    tv: float
    slack: float
    method: str  # "exhaustive", "heuristic" or "pruned"
    evaluated: int
    budget_exceeded: bool = False

    def to_json(self) -> dict:
        return {"candidate": list(self.candidate), "tv": self.tv, "slack": self.slack,
                "method": self.method, "evaluated": self.evaluated,
                "budget_exceeded": self.budget_exceeded}


def _tables_for(spec: ExpFamilySpec, array: np.ndarray, tail: float) -> list[PMFTable]:
    return [pmf_member(spec, row, tail) for row in array]


def _sparse_exhaustive(x: PMFTable, tables: list[PMFTable], n: int) -> tuple:
    best = (math.inf, 0.0, None)
    count = 0
    stack: list = []

    def rec(start: int, depth: int, prefix):
        nonlocal best, count
        if depth == n:
            count += 1
            v, s = pmf_core.tv_distance(x, prefix)
            if v < best[0]:
                best = (v, s, tuple(stack))
            return
        for i in range(start, len(tables)):
            stack.append(i)
            nxt = tables[i] if prefix is None else pmf_core.convolve(prefix, tables[i])
            rec(i, depth + 1, nxt)
            stack.pop()

    rec(0, 0, None)
    return best, count


def _gauss_rank(mu: float, var: float, cands: list, moments_of) -> list:
    target = approx.GaussianParams(mu, max(var, 1e-12))
    scored = []
    for cid in cands:
        m, v = moments_of(cid)
        scored.append((approx.tv_gauss_bound(target, approx.GaussianParams(m, max(v, 1e-12))), cid))
    scored.sort(key=lambda s: s[0])
    return [cid for _, cid in scored]


def nearest_in_cover(x_pmf: PMFTable, cover: CoverSet, spec: ExpFamilySpec,
                     budget: int = DEFAULT_BUDGET, hint=None, top_k: int = 12) -> NearestResult:
    """Cover candidate minimizing oracle TV to ``x_pmf``.

    Small sparse covers are searched exhaustively.  Beyond ``budget`` the
    search is heuristic: with ``hint`` (the true term parameters) each term
    is replaced by its Euclid-nearest cover point; without it, two-point
    multisets are ranked by the Gaussian moment bound and the best few are
    checked by the oracle.  Dense grids are pruned the same way around the
    moment-matched (b, m).
    """
    results = []
    xm = pmf_core.moments(x_pmf)
    if cover.sparse is not None:
        n = cover.sparse_terms
        tail = MEMBER_TAIL / max(n, 1)
        arr = cover.sparse.array
        if cover.sparse_size() <= budget:
            tables = _tables_for(spec, arr, tail)
            (v, s, cid), count = _sparse_exhaustive(x_pmf, tables, n)
            results.append(NearestResult(cid, v, s, "exhaustive", count))
        else:
            if hint is not None:
                idx = []
                for a in hint:
                    b = bound_into_cover(spec, cover.sparse, a)
                    idx.append(int(cover.sparse.nearest(b)[0]))
                cands = [tuple(sorted(idx))]
            else:
                mom = [member_moments(spec, row) for row in arr]

                def moments_of(cid):
                    return (sum(mom[i][0] for i in cid), sum(mom[i][1] for i in cid))

                P = len(arr)
                stride = max(1, P // 64)
                picks = range(0, P, stride)
                cands = []
                for i in picks:
                    for j in picks:
                        if j < i:
                            continue
                        for c in range(0, n + 1, max(1, n // 32)):
                            cands.append(tuple([i] * c + [j] * (n - c)))
                cands = _gauss_rank(xm.mean, xm.variance, list(set(cands)), moments_of)[:top_k]
            best = None
            for cid in cands:
                counts: dict = {}
                for i in cid:
                    counts[i] = counts.get(i, 0) + 1
                parts = [pmf_core.convolve_power(pmf_member(spec, arr[i], tail), c)
                         for i, c in sorted(counts.items())]
                v, s = pmf_core.tv_distance(x_pmf, pmf_core.convolve_all(parts))
                if best is None or v < best.tv:
                    best = NearestResult(cid, v, s, "heuristic", len(cands), True)
            results.append(best)
    if cover.dense is not None:
        dense = cover.dense
        arr = dense.net.array
        try:
            b, m = moment_match(spec, xm.mean, xm.variance)
            near = dense.net.nearest(b, count=4)
        except BracketFailure:
            m = None
            near = np.arange(min(len(arr), 64))
        cands = []
        for i in near:
            mean_b, var_b = member_moments(spec, arr[i])
            m0 = m if m is not None else max(1, int(round(xm.variance / var_b)))
            for mm in range(m0 - 2, m0 + 3):
                if dense.m_lo <= mm <= dense.m_hi:
                    cands.append(("dense", int(i), mm))

        def moments_of(cid):
            mean_b, var_b = member_moments(spec, arr[cid[1]])
            return cid[2] * mean_b, cid[2] * var_b

        cands = _gauss_rank(xm.mean, xm.variance, cands, moments_of)[:top_k]
        best = None
        for cid in cands:
            _, i, mm = cid
            t = pmf_core.convolve_power(pmf_member(spec, arr[i], MEMBER_TAIL / mm), mm)
            v, s = pmf_core.tv_distance(x_pmf, t)
            if best is None or v < best.tv:
                best = NearestResult(cid, v, s, "pruned", len(cands))
        if best is not None:
            results.append(best)
    if not results:
        raise BudgetExceeded("cover has no candidates")
    return min(results, key=lambda r: r.tv)


# ----------------------------------------------------------- SIIURV covers


def _lattice_round(probs: np.ndarray, K: int) -> np.ndarray:
    """Largest-remainder rounding of a probability vector to multiples of 1/K."""
    scaled = probs * K
    base = np.floor(scaled)
    short = int(K - base.sum())
    if short > 0:
        order = np.argsort(-(scaled - base), kind="stable")
        base[order[:short]] += 1
    return base / K


@dataclass(frozen=True)
class SIIURVCover:
    """Indexed description of the SIIURV cover.

    Sparse elements are distributions on I_S = [S - n R, S + n R] whose
    masses are multiples of 1/K, one family per mode sum S in
    [-n ceil(L), n ceil(L)].  The dense descriptor is the discretized
    Gaussian with the target's mean and variance.
    """

    n: int
    L: float
    B: float
    gamma: float
    eps: float
    n_crit: int
    R: int
    K: int
    dense: approx.GaussianParams | None = None

    @property
    def regime(self) -> str:
        return "sparse" if self.n < self.n_crit else "dense"

    @property
    def interval_length(self) -> int:
        return 2 * self.n * self.R + 1

    @property
    def mode_sums(self) -> range:
        cl = int(math.ceil(max(self.L, 0.0)))
        return range(-self.n * cl, self.n * cl + 1)

    def size(self) -> int:
        """Number of sparse elements (an exact, usually astronomical, integer)."""
        m = self.interval_length
        return len(self.mode_sums) * math.comb(self.K + m - 1, m - 1)

    def element(self, S: int, counts: Sequence[int]) -> PMFTable:
        counts = np.asarray(counts, dtype=float)
        if counts.size != self.interval_length or counts.sum() != self.K:
            raise ConfigError("counts must have one entry per point and sum to K")
        return PMFTable(S - self.n * self.R, counts / self.K, 0.0)

    def materialize(self, limit: int = 100_000) -> Iterator[PMFTable]:
        total = self.size()
        if total > limit:
            raise GridOverflow(f"SIIURV cover has {total} elements (limit {limit})")
        m = self.interval_length
        for S in self.mode_sums:
            for bars in itertools.combinations(range(self.K + m - 1), m - 1):
                edges = (-1,) + bars + (self.K + m - 1,)
                counts = [edges[i + 1] - edges[i] - 1 for i in range(m)]
                yield self.element(S, counts)

    def nearest(self, x: PMFTable, mode_sum: int) -> tuple[PMFTable, float, float]:
        """Round the restriction of x to I_S onto the lattice; returns the
        element with its oracle TV and slack."""
        lo = mode_sum - self.n * self.R
        xs = np.arange(lo, lo + self.interval_length)
        w = x.at(xs)
        if w.sum() <= 0:
            raise ConfigError("target has no mass on the interval")
        table = PMFTable(lo, _lattice_round(w / w.sum(), self.K), 0.0)
        v, s = pmf_core.tv_distance(x, table)
        return table, v, s

    def to_json(self) -> dict:
        return {"n": self.n, "L": self.L, "B": self.B, "gamma": self.gamma, "eps": self.eps,
                "n_crit": self.n_crit, "R": self.R, "K": self.K, "regime": self.regime,
                "size": str(self.size()),
                "dense": None if self.dense is None else self.dense.to_json()}


def siiurv_radius(B: float, eps: float, n: int) -> int:
    """Per-term truncation radius R with sum_i P(|X_i - M_i| > R) <= eps/2.

    E|X - M|^4 <= (1 + sqrt 3)^4 B for a unimodal X (mode-mean gap at most
    sqrt(3) sigma, sigma <= B^{1/4}), then Markov and a union bound.
    """
    BM = (1.0 + math.sqrt(3.0)) ** 4 * B
    return int(math.ceil((BM / (eps / (2.0 * n))) ** 0.25))


def cover_siiurv(terms: Sequence[PMFTable], L: float, B: float, gamma: float, eps: float,
                 constants: Constants | None = None) -> SIIURVCover:
    """Cover description for order-n SIIURVs with the given constants.

    ``terms`` fix n and are checked against the declared assumptions; the
    dense descriptor holds their exact mean and variance.
    """
    if not 0 < eps < 1:
        raise ConfigError(f"eps must lie in (0, 1), got {eps}")
    terms = [pmf_core.as_table(t) for t in terms]
    if not terms:
        raise ConfigError("need at least one term")
    for t in terms:
        modes, uni = pmf_core.modes_of(t)
        if not uni or any(abs(m) > L for m in modes):
            raise ConfigError(f"term with modes {modes} is not unimodal within [-L, L]")
    c = resolve(constants)
    n = len(terms)
    ncrit = int(math.ceil(c.c_siiurv * B**2 / (gamma**3 * eps**2)))
    R = siiurv_radius(B, eps, n)
    length = 2 * n * R + 1
    K = int(math.ceil(length / (eps / 2.0)))
    total = pmf_core.convolve_all(terms)
    mom = pmf_core.moments(total)
    dense = approx.GaussianParams(mom.mean, mom.variance) if mom.variance > 0 else None
    return SIIURVCover(n, L, B, gamma, eps, ncrit, R, K, dense)


# --------------------------------------------------------------------- PNBD


@dataclass(frozen=True)
class PNBDSpec:
    probs: tuple
    p_low: float
    kappa: float

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if not probs:
            raise ConfigError("need at least one success probability")
        if any(not (0 < p <= 1) for p in probs):
            raise ConfigError("success probabilities must lie in (0, 1]")
        if any(p < self.p_low for p in probs):
            raise ConfigError("some success probability is below p_low")
        if not self.kappa > 1:
            raise ConfigError("kappa must exceed 1")
        object.__setattr__(self, "probs", probs)


@dataclass(frozen=True)
class MassageResult:
    probs: tuple
    tv_overhead: float
    gap: float
    replaced: tuple  # indices in I
    promoted: tuple  # indices in I_star


def _geo_mean(p: float) -> float:
    return (1.0 - p) / p


def pnbd_massage(pnbd: PNBDSpec) -> MassageResult:
    """Replace terms with p_i > 1 - 1/kappa by fewer terms at exactly 1 - 1/kappa.

    The kept prefix I_star (largest original means first) is the shortest one
    whose new means reach the old total, so the mean gap is below 1/(kappa-1).
    """
    k = pnbd.kappa
    p_new = 1.0 - 1.0 / k
    e_new = 1.0 / (k - 1.0)
    I = [i for i, p in enumerate(pnbd.probs) if p > p_new]
    total = sum(_geo_mean(pnbd.probs[i]) for i in I)
    count = int(math.ceil(total / e_new - 1e-12)) if total > 0 else 0
    count = min(count, len(I))
    order = sorted(I, key=lambda i: -_geo_mean(pnbd.probs[i]))
    star = tuple(sorted(order[:count]))
    probs = tuple(p for i, p in enumerate(pnbd.probs) if i not in set(I)) + (p_new,) * count
    gap = count * e_new - total
    return MassageResult(probs, 3.0 / (k - 1.0), gap, tuple(I), star)


def pnbd_kappa(eps: float, constants: Constants | None = None) -> int:
    c = resolve(constants)
    return int(math.ceil(1.0 + c.c_pnbd / eps))


def pnbd_family(p_low: float, kappa: float) -> ExpFamilySpec:
    from .families import geometric_family, success_to_param

    return geometric_family(success_to_param(p_low), math.log(kappa))


def pnbd_cover(p_low: float, n: int, eps: float,
               constants: Constants | None = None) -> tuple[CoverSet, ExpFamilySpec]:
    """Cover for sums of n geometrics with success probability >= p_low.

    After massaging with kappa = ceil(1 + c_pnbd/eps) every probability lies
    in [p_low, 1 - 1/kappa], i.e. a = -ln(1-p) in [-ln(1-p_low), ln kappa];
    the geometric-family SIIERV cover at eps - 3/(kappa-1) finishes the job.
    Returns the cover and the geometric family it is expressed in.
    """
    if not 0 < p_low < 1:
        raise ConfigError("p_low must lie in (0, 1)")
    if not 0 < eps < 1:
        raise ConfigError(f"eps must lie in (0, 1), got {eps}")
    kappa = pnbd_kappa(eps, constants)
    if p_low >= 1.0 - 1.0 / kappa:
        raise ConfigError("p_low is above the massage threshold; nothing to cover")
    spec = pnbd_family(p_low, kappa)
    inner = eps - 3.0 / (kappa - 1.0)
    return cover_siierv(spec, n, inner, constants), spec


def poisson_approx_bound(probs: Sequence[float]) -> float:
    """min(1, 1/lambda) sum_i ((1 - p_i)/p_i)^2 with lambda = sum_i (1-p_i)/p_i."""
    means = np.array([_geo_mean(p) for p in probs])
    lam = float(means.sum())
    if lam == 0:
        return 0.0
    return min(1.0, 1.0 / lam) * float(np.sum(means**2))
