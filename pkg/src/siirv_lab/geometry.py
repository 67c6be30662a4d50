"""Polyhedral cones: the pivot constant theta, norm-reducing projection onto a
sphere, rho-cone membership and the parameter-bounding map.

A cone is carried in both representations at once: halfspace normals ``H``
(columns ``h_i``, cone = {u : H^T u >= 0}) and unit generators ``Z``
(columns ``z_j``, cone = {Z x : x >= 0}).  Converting between them is the
caller's job; the constructor only checks that the pair is consistent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import optimize

from .constants import Constants, resolve
from .errors import ConfigError, DegenerateCone, InfeasibleProjection

CONSISTENCY_TOL = 1e-10
ZERO_TOL = 1e-12
CLAUSE_TOL = 1e-9
MAX_RETRIES = 10
EXACT_SUBSETS_UP_TO = 16


@dataclass(frozen=True, eq=False)
class ConeDescription:
    H: np.ndarray  # k x t
    Z: np.ndarray  # k x s

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        Z = np.asarray(self.Z, dtype=float)
        if H.ndim == 1:
            H = H[:, None]
        if Z.ndim == 1:
            Z = Z[:, None]
        if H.shape[0] != Z.shape[0]:
            raise ConfigError(f"H is {H.shape} but Z is {Z.shape}")
        if Z.shape[1]:
            norms = np.linalg.norm(Z, axis=0)
            if np.any(norms == 0):
                raise ConfigError("generators must be nonzero")
            Z = Z / norms
        if Z.shape[1] and H.shape[1]:
            worst = float((H.T @ Z).min())
            if worst < -CONSISTENCY_TOL:
                raise ConfigError(
                    f"generator violates a halfspace (min h.z = {worst:.3e})")
        H.setflags(write=False)
        Z.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "Z", Z)

    @property
    def k(self) -> int:
        return self.H.shape[0]

    @property
    def t(self) -> int:
        return self.H.shape[1]

    @property
    def s(self) -> int:
        return self.Z.shape[1]

    def contains(self, u, tol: float = CONSISTENCY_TOL) -> bool:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return bool(np.all(self.H.T @ u >= -tol * (1 + np.linalg.norm(u))))

    def to_json(self) -> dict:
        return {"H": self.H.tolist(), "Z": self.Z.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "ConeDescription":
        return cls(np.asarray(data["H"], float), np.asarray(data["Z"], float))

    @classmethod
    def ray(cls, direction) -> "ConeDescription":
        d = np.atleast_1d(np.asarray(direction, dtype=float))
        d = d / np.linalg.norm(d)
        # the ray is cut out by d itself plus the orthogonal complement (both signs)
        if d.size == 1:
            return cls(d[:, None], d[:, None])
        basis = np.linalg.svd(d[None, :])[2][1:]
        H = np.column_stack([d] + [v for b in basis for v in (b, -b)])
        return cls(H, d[:, None])


class ThetaResult(NamedTuple):
    theta: float
    w: np.ndarray
    w_coeffs: np.ndarray  # w = Z @ w_coeffs, entries x_j / N
    theta1: float
    N: float
    degenerate: bool


def _max_subset_norm(V: np.ndarray) -> float:
    """max over subsets J of ||sum_{j in J} V[:, j]||, exact for small s."""
    s = V.shape[1]
    if s > EXACT_SUBSETS_UP_TO:
        return float(np.linalg.norm(V, axis=0).sum())
    masks = ((np.arange(2**s)[:, None] >> np.arange(s)) & 1).astype(float)
    sums = masks @ V.T
    return float(np.linalg.norm(sums, axis=1).max())


def theta_for_cone(cone: ConeDescription) -> ThetaResult:
    """Pivot vector ``w`` and constant ``theta`` for the sphere projection.

    theta_1 is the smallest positive h_i.z_j, x starts as all-ones, N is
    twice the largest partial-sum norm, w = Z x / N and
    theta = min(theta_1 / N, theta_1 / (2 s)).
    """
    Z = cone.Z
    s = cone.s
    if s == 0:
        raise DegenerateCone("cone has no generators, so it is {0}")
    x = np.ones(s)
    if np.linalg.norm(Z @ x) <= ZERO_TOL:
        for j in range(s):
            trial = np.ones(s)
            trial[j] = 2.0
            if np.linalg.norm(Z @ trial) > ZERO_TOL:
                x = trial
                break
        else:
            raise DegenerateCone("every nonnegative combination of generators vanishes")
    prods = cone.H.T @ Z if cone.t else np.zeros((0, s))
    positive = prods[prods > ZERO_TOL]
    degenerate = positive.size == 0
    theta1 = float(positive.min()) if not degenerate else 1.0
    if s <= EXACT_SUBSETS_UP_TO:
        N = 2.0 * _max_subset_norm(Z * x)
    else:
        N = 2.0 * float(x.sum())
    coeffs = x / N
    w = Z @ coeffs
    theta = min(theta1 / N, theta1 / (2 * s))
    assert np.linalg.norm(w) <= 0.5 + 1e-12
    if not degenerate:
        interesting = np.any(prods > ZERO_TOL, axis=1)
        hw = cone.H.T[interesting] @ w
        assert np.all(hw >= theta * (1 - 1e-12))
    return ThetaResult(theta, w, coeffs, theta1, N, degenerate)


@dataclass(frozen=True, eq=False)
class ProjectionCertificate:
    theta_used: float
    active_set: tuple
    c: float
    u_prime: np.ndarray
    radius: float = 1.0
    retries: int = 0
    generator_set: tuple = field(default=())

    def to_json(self) -> dict:
        return {"theta_used": self.theta_used, "active_set": list(self.active_set),
                "c": self.c, "u_prime": self.u_prime.tolist(), "radius": self.radius,
                "retries": self.retries}


def _nnls(Z: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, float]:
    """Nonnegative least squares with a recomputed residual.

    scipy's ``nnls`` can stop early and still report a zero residual on
    redundant generator sets, so the residual is measured directly and a
    bounded-variable solve replaces the answer whenever it does better.
    """
    scale = float(np.linalg.norm(v))
    if scale == 0.0:
        return np.zeros(Z.shape[1]), 0.0
    target = v / scale
    coeffs, _ = optimize.nnls(Z, target, maxiter=50 * max(Z.shape[1], 1))
    resid = float(np.linalg.norm(Z @ coeffs - target))
    if resid > 1e-13:
        alt = optimize.lsq_linear(Z, target, bounds=(0.0, np.inf), method="bvls", tol=1e-15)
        alt_x = np.maximum(alt.x, 0.0)
        alt_resid = float(np.linalg.norm(Z @ alt_x - target))
        if alt_resid < resid:
            coeffs, resid = alt_x, alt_resid
    return coeffs * scale, resid * scale


def project_to_sphere(cone: ConeDescription, theta: float, w, u, r: float,
                      w_coeffs=None) -> ProjectionCertificate:
    """Move ``u`` (norm >= r) onto the sphere of radius r inside the cone.

    Every column h then satisfies either (h.u >= theta r and h.u' >= theta r)
    or h.u' = h.u.  ``w_coeffs`` are the generator weights of ``w``; when
    omitted they are recovered by nonnegative least squares, which is only
    safe if ``w`` came from :func:`theta_for_cone`.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    nu = float(np.linalg.norm(u))
    if r <= 0 or nu < r * (1 - 1e-12):
        raise ConfigError(f"need ||u|| >= r > 0, got ||u|| = {nu}, r = {r}")
    hu = cone.H.T @ u
    active = tuple(int(i) for i in np.flatnonzero(hu < theta * r))
    if abs(nu - r) <= 1e-12 * r:
        return ProjectionCertificate(theta, active, 0.0, u.copy(), r)

    y, resid = _nnls(cone.Z, u)
    if resid > 1e-9 * nu:
        raise ConfigError(f"u is not in the cone (generator residual {resid:.3e})")
    if w_coeffs is None:
        w_coeffs, wres = _nnls(cone.Z, w)
        if wres > 1e-9 * max(np.linalg.norm(w), 1.0):
            raise ConfigError("pivot w is not in the cone")
    w_coeffs = np.asarray(w_coeffs, dtype=float)

    if active:
        prods = cone.H.T[list(active)] @ cone.Z
        scale = np.linalg.norm(cone.H.T[list(active)], axis=1)[:, None]
        keep = np.all(np.abs(prods) <= ZERO_TOL * np.maximum(scale, 1.0), axis=0)
    else:
        keep = np.ones(cone.s, dtype=bool)
    u_I = cone.Z[:, keep] @ y[keep]
    w_I = cone.Z[:, keep] @ w_coeffs[keep]

    # u' = u - c (u_I - r w_I).  Write s = 1 - c and u' = e + s d with
    # e = u - u_I + r w_I, d = u_I - r w_I; this avoids cancelling two large
    # vectors when ||u|| >> r.
    d = u_I - r * w_I
    e = (u - u_I) + r * w_I
    qa = float(d @ d)
    qb = float(e @ d)
    qc = float(e @ e) - r * r
    if qc > 1e-12 * r * r:
        raise InfeasibleProjection(
            f"||u - u_I + r w_I|| = {math.sqrt(qc + r * r):.6g} exceeds r = {r:.6g}")
    qc = min(qc, 0.0)
    if qa == 0.0:
        raise InfeasibleProjection("no movement direction available")
    disc = math.sqrt(max(qb * qb - qa * qc, 0.0))
    s_root = -qc / (qb + disc) if qb > 0 else (-qb + disc) / qa
    if not -1e-12 <= s_root <= 1 + 1e-12:
        raise InfeasibleProjection(f"root outside [0, 1]: s = {s_root}")
    s_root = min(max(s_root, 0.0), 1.0)
    u_prime = e + s_root * d
    return ProjectionCertificate(theta, active, 1.0 - s_root, u_prime, r,
                                 generator_set=tuple(int(j) for j in np.flatnonzero(keep)))


def project_with_retry(cone: ConeDescription, tr: ThetaResult, u, r: float,
                       theta: float | None = None,
                       max_retries: int = MAX_RETRIES) -> ProjectionCertificate:
    """Call :func:`project_to_sphere`, halving theta on infeasibility."""
    th = tr.theta if theta is None else min(theta, tr.theta)
    for attempt in range(max_retries + 1):
        try:
            cert = project_to_sphere(cone, th, tr.w, u, r, w_coeffs=tr.w_coeffs)
        except InfeasibleProjection:
            if attempt == max_retries:
                raise
            th /= 2.0
            continue
        return ProjectionCertificate(cert.theta_used, cert.active_set, cert.c,
                                     cert.u_prime, cert.radius, attempt,
                                     cert.generator_set)
    raise AssertionError("unreachable")


def certificate_failures(cone: ConeDescription, cert: ProjectionCertificate, u,
                         tol: float = CLAUSE_TOL) -> list[str]:
    """Human-readable list of violated clauses (empty when all hold)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    r = cert.radius
    out = []
    norm = float(np.linalg.norm(cert.u_prime))
    if abs(norm - r) > tol * max(r, 1.0):
        out.append(f"||u'|| = {norm!r} differs from r = {r!r}")
    hu = cone.H.T @ u
    hv = cone.H.T @ cert.u_prime
    bound = cert.theta_used * r
    for i, (a, b) in enumerate(zip(hu, hv)):
        clause_i = a >= bound - tol and b >= bound - tol
        clause_ii = abs(a - b) <= tol * (1 + np.linalg.norm(u))
        if not (clause_i or clause_ii):
            out.append(f"column {i}: h.u = {a!r}, h.u' = {b!r}, theta r = {bound!r}")
    if not cone.contains(cert.u_prime, tol):
        out.append("u' left the cone")
    return out


def rho_cone_contains(cone: ConeDescription, base_region, rho: float, a) -> bool:
    """a in base_region, or a in the cone with ||a|| >= rho."""
    a = np.atleast_1d(np.asarray(getattr(a, "a", a), dtype=float))
    if base_region is not None and base_region.contains(a):
        return True
    return bool(np.all(cone.H.T @ a >= -CONSISTENCY_TOL)
                and np.linalg.norm(a) >= rho * (1 - 1e-12))


# ------------------------------------------------------------- local cones


def extreme_rays(H: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Unit extreme rays of the pointed cone {u : H^T u >= 0} (k x s).

    Brute force over (k-1)-subsets of the normals.  This is only used for the
    small mode-preserving cones built inside :func:`local_mode_cone`; user
    cones must arrive with both representations.
    """
    k = H.shape[0]
    if k == 1:
        rays = [np.array([v]) for v in (1.0, -1.0) if np.all(H.T @ np.array([v]) >= -tol)]
        return np.column_stack(rays) if rays else np.zeros((1, 0))
    cols = [H[:, i] / np.linalg.norm(H[:, i]) for i in range(H.shape[1])
            if np.linalg.norm(H[:, i]) > 0]
    Hn = np.column_stack(cols)
    found: list[np.ndarray] = []
    for subset in itertools.combinations(range(Hn.shape[1]), k - 1):
        M = Hn[:, list(subset)].T
        _, sv, vt = np.linalg.svd(M)
        rank = int(np.sum(sv > 1e-10))
        if rank != k - 1:
            continue
        z = vt[-1]
        for cand in (z, -z):
            if np.all(Hn.T @ cand >= -tol) and not any(
                    np.linalg.norm(cand - f) < 1e-8 for f in found):
                found.append(cand)
    if not found:
        return np.zeros((k, 0))
    return np.column_stack(found)


def local_mode_cone(spec, modes) -> ConeDescription | None:
    """Parameters sharing the mode set ``modes`` within the family cone.

    Normals are the family cone's H plus T(x) - T(M) for every support point
    within one step of [-L, L]; extra modes contribute both signs (equality).
    Returns None when the set is {0}.
    """
    from .expfam import support_points

    modes = sorted(int(m) for m in modes)
    lim = int(math.ceil(max(spec.L, 0.0))) + 1
    xs = support_points(spec.T, -lim, lim)
    T = spec.T.evaluate(xs)
    t0 = spec.T.evaluate(np.array([modes[0]]))[0]
    cols = [spec.cone.H]
    vs = []
    for x, tx in zip(xs, T):
        if x == modes[0]:
            continue
        v = tx - t0
        if np.linalg.norm(v) == 0:
            continue
        vs.append(v)
        if x in modes:
            vs.append(-v)
    if vs:
        cols.append(np.column_stack(vs))
    H = np.column_stack(cols)
    Z = extreme_rays(H)
    if Z.shape[1] == 0:
        return None
    return ConeDescription(H, Z)


def _candidate_mode_sets(spec):
    from .expfam import support_points

    lim = int(math.ceil(max(spec.L, 0.0)))
    xs = [int(x) for x in support_points(spec.T, -lim, lim)]
    for length in range(1, spec.T.k + 1):
        for i in range(len(xs) - length + 1):
            run = xs[i:i + length]
            if run[-1] - run[0] == length - 1:
                yield tuple(run)


def family_theta(spec) -> float:
    """theta for the family: the declared value, else the minimum over the
    family cone and every local mode cone."""
    if spec.theta is not None:
        return float(spec.theta)
    cached = spec._cache.get("theta")
    if cached is not None:
        return cached
    values = [theta_for_cone(spec.cone).theta]
    for modes in _candidate_mode_sets(spec):
        local = local_mode_cone(spec, modes)
        if local is None:
            continue
        try:
            values.append(theta_for_cone(local).theta)
        except DegenerateCone:
            continue
    theta = float(min(values))
    spec._cache["theta"] = theta
    return theta


def r_crit(spec, eps: float, constants: Constants | None = None) -> float:
    """(rho + 1/theta) ln(1/eps) + ln(B) / (2 theta) + c_rcrit (rho + 1/theta)."""
    if not 0 < eps < 1:
        raise ConfigError(f"eps must lie in (0, 1), got {eps}")
    c = resolve(constants)
    th = family_theta(spec)
    base = spec.rho + 1.0 / th
    return base * math.log(1.0 / eps) + math.log(spec.B) / (2.0 * th) + c.c_rcrit * base


def bound_parameter(spec, a, eps: float, constants: Constants | None = None,
                    return_certificate: bool = False):
    """Replace a large-norm parameter by one of norm r_crit that is eps-close
    in total variation (and structurally close).

    The projection runs inside the cone of parameters sharing a's mode set,
    so modes are preserved exactly.
    """
    from .expfam import ParamVector, as_param, mode

    a = as_param(a)
    if not spec.base_region.contains(a.a):
        raise ConfigError("bound_parameter expects a point of the base region")
    radius = r_crit(spec, eps, constants)
    norm = float(np.linalg.norm(a.a))
    if norm <= radius:
        return (a, None) if return_certificate else a
    modes = mode(spec, a)
    local = local_mode_cone(spec, modes)
    if local is None or not local.contains(a.a, 1e-8):
        raise InfeasibleProjection("parameter is not inside its own mode cone")
    tr = theta_for_cone(local)
    cert = project_with_retry(local, tr, a.a, radius, theta=family_theta(spec))
    b = ParamVector(cert.u_prime)
    return (b, cert) if return_certificate else b


# ----------------------------------------------------------- random cones


def facets_from_generators(Z: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Inward facet normals of a full-dimensional pointed cone given by Z."""
    k, s = Z.shape
    if k == 1:
        return np.sign(Z[:, :1])
    normals: list[np.ndarray] = []
    for subset in itertools.combinations(range(s), k - 1):
        M = Z[:, list(subset)].T
        _, sv, vt = np.linalg.svd(M)
        if np.sum(sv > 1e-10) != k - 1:
            continue
        n = vt[-1]
        vals = n @ Z
        if np.all(vals >= -tol):
            cand = n
        elif np.all(vals <= tol):
            cand = -n
        else:
            continue
        if not any(np.linalg.norm(cand - f) < 1e-8 for f in normals):
            normals.append(cand)
    return np.column_stack(normals)


def random_cone(rng: np.random.Generator, k: int, max_s: int = 6, max_t: int = 6,
                redundant: bool = True) -> ConeDescription:
    """A random pointed full-dimensional cone with s, t <= the given caps.

    Generators are drawn in a cap around a random axis; facets are recovered
    by brute force.  Optionally one redundant generator and one redundant
    halfspace are appended.
    """
    for _ in range(1000):
        axis = rng.normal(size=k)
        axis /= np.linalg.norm(axis)
        s = int(rng.integers(k, max_s + 1)) if k > 1 else 1
        raw = axis[:, None] + rng.uniform(0.3, 1.5) * rng.normal(size=(k, s))
        raw /= np.linalg.norm(raw, axis=0)
        if k > 1 and np.linalg.matrix_rank(raw) < k:
            continue
        if np.any(raw.T @ axis <= 0.05):
            continue
        H = facets_from_generators(raw)
        # keep only generators that are extreme enough to matter
        Z = raw
        if redundant and Z.shape[1] < max_s and rng.random() < 0.5:
            combo = Z @ rng.random(Z.shape[1])
            Z = np.column_stack([Z, combo / np.linalg.norm(combo)])
        if redundant and H.shape[1] < max_t and rng.random() < 0.5:
            H = np.column_stack([H, H @ rng.random(H.shape[1])])
        if H.shape[1] <= max_t and Z.shape[1] <= max_s:
            return ConeDescription(H, Z)
    raise RuntimeError("could not draw a cone within the size caps")
