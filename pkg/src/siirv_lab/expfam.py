"""Discrete exponential families p_a(x) proportional to exp(-a . T(x)).

Carrier measure is fixed to 1.  A family is described by
:class:`ExpFamilySpec`: sufficient statistics, the conical hull of the
parameter space (as a :class:`~siirv_lab.geometry.ConeDescription`), the
base region itself, and the structural constants rho, L, B, gamma, Lambda
and optionally theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import pmf_core
from .constants import Constants, resolve
from .errors import AssumptionViolation, ConfigError, WindowOverflow
from .geometry import ConeDescription, rho_cone_contains
from .regions import region_from_json

CATALOG = ("x", "x2", "abs", "log")
SUPPORTS = {"Z": None, "N0": 0, "N": 1}
RATIO_RTOL = 1e-9
_PMF_CACHE_LIMIT = 50_000


# ------------------------------------------------------------------ stats


@dataclass(frozen=True, eq=False)
class ExplicitStat:
    """User-supplied statistic values on ``lo .. lo+len(values)-1``."""

    lo: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)):
            raise ConfigError("explicit statistic needs finite values")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "lo", int(self.lo))

    @property
    def hi(self) -> int:
        return self.lo + self.values.size - 1

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        if xs.size and (xs.min() < self.lo or xs.max() > self.hi):
            raise ConfigError(
                f"explicit statistic covers [{self.lo}, {self.hi}] but "
                f"[{xs.min()}, {xs.max()}] was requested")
        return self.values[xs - self.lo]


Coord = Union[str, ExplicitStat]


@dataclass(frozen=True, eq=False)
class SufficientStats:
    coords: tuple
    support: str = "Z"

    def __post_init__(self):
        coords = tuple(self.coords)
        if not coords:
            raise ConfigError("need at least one coordinate")
        if self.support not in SUPPORTS:
            raise ConfigError(f"support must be one of {sorted(SUPPORTS)}")
        for c in coords:
            if isinstance(c, str):
                if c not in CATALOG:
                    raise ConfigError(f"unknown catalog statistic {c!r}")
                if c == "log" and self.support != "N":
                    raise ConfigError("the log statistic requires support N")
            elif not isinstance(c, ExplicitStat):
                raise ConfigError(f"bad coordinate {c!r}")
        object.__setattr__(self, "coords", coords)

    @property
    def k(self) -> int:
        return len(self.coords)

    @property
    def support_min(self):
        return SUPPORTS[self.support]

    def evaluate(self, xs) -> np.ndarray:
        """T(x) for each x, shape (len(xs), k)."""
        xs = np.asarray(xs, dtype=np.int64)
        smin = self.support_min
        if smin is not None and xs.size and xs.min() < smin:
            raise ConfigError(f"x = {xs.min()} is outside the support")
        xf = xs.astype(float)
        cols = []
        for c in self.coords:
            if c == "x":
                cols.append(xf)
            elif c == "x2":
                cols.append(xf * xf)
            elif c == "abs":
                cols.append(np.abs(xf))
            elif c == "log":
                cols.append(np.log(xf))
            else:
                cols.append(c(xs))
        return np.stack(cols, axis=1)

    def to_json(self) -> dict:
        coords = [c if isinstance(c, str) else {"lo": c.lo, "values": c.values.tolist()}
                  for c in self.coords]
        return {"coords": coords, "support": self.support}

    @classmethod
    def from_json(cls, data: dict) -> "SufficientStats":
        coords = [c if isinstance(c, str) else ExplicitStat(c["lo"], c["values"])
                  for c in data["coords"]]
        return cls(tuple(coords), data.get("support", "Z"))


def support_points(T: SufficientStats, lo: int, hi: int) -> np.ndarray:
    smin = T.support_min
    lo = int(lo) if smin is None else max(int(lo), smin)
    return np.arange(lo, max(lo, int(hi) + 1))


# ------------------------------------------------------------- parameters


@dataclass(frozen=True, eq=False)
class ParamVector:
    a: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float)).copy()
        if a.ndim != 1 or not np.all(np.isfinite(a)):
            raise ConfigError("parameter vector must be finite and 1-d")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def key(self) -> tuple:
        return tuple(float(v) for v in self.a)

    def __eq__(self, other):
        return isinstance(other, ParamVector) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"ParamVector({list(self.key)})"


def as_param(a) -> ParamVector:
    return a if isinstance(a, ParamVector) else ParamVector(a)


@dataclass(frozen=True)
class TailRadiusParams:
    kappa: float
    eta: float
    s: int
    c_tail: float = 4.0

    def __post_init__(self):
        if self.kappa <= 0 or self.eta <= 0 or self.c_tail <= 0:
            raise ConfigError("kappa, eta and c_tail must be positive")
        if self.s not in (0, 1, 2) or self.eta + self.s >= 3:
            raise ConfigError("need s in {0,1,2} and eta + s < 3")


@dataclass(frozen=True, eq=False)
class ExpFamilySpec:
    T: SufficientStats
    cone: ConeDescription
    base_region: object
    rho: float
    L: float
    B: float
    gamma: float
    Lambda: float
    theta: float | None = None
    mode_mass_gap: float | None = None
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for nm in ("rho", "B", "gamma", "Lambda"):
            v = getattr(self, nm)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"{nm} must be positive, got {v}")
        if not np.isfinite(self.L):
            raise ConfigError("L must be finite")
        if self.theta is not None and not self.theta > 0:
            raise ConfigError("theta must be positive when given")
        if self.mode_mass_gap is not None and not 0 < self.mode_mass_gap < 1:
            raise ConfigError("mode_mass_gap must lie in (0, 1)")
        if self.cone.k != self.T.k or self.base_region.k != self.T.k:
            raise ConfigError("dimension mismatch between T, cone and base region")
        rng = np.random.default_rng(0)
        for pt in self.base_region.sample(rng, 16):
            if not self.cone.contains(pt, 1e-8):
                raise ConfigError(f"base region point {pt} lies outside the cone")

    @property
    def k(self) -> int:
        return self.T.k

    @property
    def variance_floor(self) -> float:
        return self.gamma

    def in_rho_cone(self, a) -> bool:
        return rho_cone_contains(self.cone, self.base_region, self.rho, as_param(a).a)

    def to_json(self) -> dict:
        return {"name": self.name, "T": self.T.to_json(), "cone": self.cone.to_json(),
                "base_region": self.base_region.to_json(), "rho": self.rho,
                "L": self.L, "B": self.B, "gamma": self.gamma, "Lambda": self.Lambda,
                "theta": self.theta, "mode_mass_gap": self.mode_mass_gap}

    @classmethod
    def from_json(cls, data: dict) -> "ExpFamilySpec":
        return cls(SufficientStats.from_json(data["T"]),
                   ConeDescription.from_json(data["cone"]),
                   region_from_json(data["base_region"]),
                   float(data["rho"]), float(data["L"]), float(data["B"]),
                   float(data["gamma"]), float(data["Lambda"]),
                   None if data.get("theta") is None else float(data["theta"]),
                   None if data.get("mode_mass_gap") is None else float(data["mode_mass_gap"]),
                   data.get("name", ""))


def _require_rho_cone(spec: ExpFamilySpec, a: ParamVector):
    if not spec.in_rho_cone(a):
        raise ConfigError(f"{a} is not in the rho-cone of the parameter space")


# ------------------------------------------------------------------ modes


def scan_margin(L: float) -> int:
    cl = int(math.ceil(max(L, 0.0)))
    return 8 * cl + 64


def _energies(spec: ExpFamilySpec, a: ParamVector, xs: np.ndarray) -> np.ndarray:
    return spec.T.evaluate(xs) @ a.a


def mode(spec: ExpFamilySpec, a) -> list[int]:
    """All minimizers of a . T(x) over the scan window, ascending.

    Raises AssumptionViolation (with the offending x as witness) when a
    minimizer falls outside [-L, L].
    """
    a = as_param(a)
    _require_rho_cone(spec, a)
    cl = int(math.ceil(max(spec.L, 0.0)))
    delta = scan_margin(spec.L)
    xs = support_points(spec.T, -cl - delta, cl + delta)
    e = _energies(spec, a, xs)
    emin = float(e.min())
    tol = 1e-12 * (1.0 + abs(emin) + float(np.linalg.norm(a.a)))
    modes = [int(x) for x in xs[e <= emin + tol]]
    for m in modes:
        if abs(m) > spec.L:
            raise AssumptionViolation(f"mode {m} lies outside [-L, L] with L = {spec.L}",
                                      witness=m)
    return modes


# ------------------------------------------------------------ tail bounds


def tail_radius(params: TailRadiusParams, B: float) -> int:
    """ceil(c_tail * e^{kappa/(3-eta-s)} * B^{5/(4(3-eta-s))})."""
    g = 3.0 - params.eta - params.s
    value = params.c_tail * math.exp(params.kappa / g) * B ** (5.0 / (4.0 * g))
    # values within rounding noise of an integer round down to it
    return max(1, int(math.ceil(value * (1.0 - 1e-9))))


def envelope_mass(spec: ExpFamilySpec, a: ParamVector, R: int, eta: float = 0.5,
                  s: int = 0, constants: Constants | None = None) -> float:
    """Bound on P(|W - M| > R) from the pointwise tail envelope.

    The envelope pmf(x) <= e^{-kappa max(1, |a|/rho)} pmf(M) / |x-M|^{1+eta+s}
    holds for |x - M| >= l(kappa); for a given R we take the largest kappa
    with l(kappa) <= R and sum the envelope over both sides.
    """
    c = resolve(constants)
    g = 3.0 - eta - s
    base = c.c_tail * spec.B ** (5.0 / (4.0 * g))
    if R <= base:
        return math.inf
    kappa = g * math.log(R / base)
    m = max(1.0, float(np.linalg.norm(a.a)) / spec.rho)
    p = 1.0 + eta + s
    side = R ** (1.0 - p) / (p - 1.0)  # sum_{d > R} d^{-p} <= R^{1-p}/(p-1)
    return 2.0 * math.exp(-kappa * m) * side


def markov_mass(spec: ExpFamilySpec, R: int) -> float:
    """Bound on P(|W - M| > R) from the fourth-moment bound B.

    |E W - M| <= sqrt(3 Var) <= sqrt(3) B^{1/4} for a unimodal W, so Markov
    on the fourth central moment gives B / (R - sqrt(3) B^{1/4})^4.
    """
    shift = math.sqrt(3.0) * spec.B ** 0.25
    if R <= shift:
        return math.inf
    return spec.B / (R - shift) ** 4


def certified_radius(spec: ExpFamilySpec, a: ParamVector, target: float,
                     constants: Constants | None = None) -> int:
    """Smallest radius whose certified outside mass is <= target."""
    r_markov = int(math.ceil(math.sqrt(3.0) * spec.B ** 0.25 + (spec.B / target) ** 0.25)) + 1
    if envelope_mass(spec, a, r_markov, constants=constants) > target:
        return r_markov
    lo, hi = 1, r_markov
    while lo < hi:
        mid = (lo + hi) // 2
        if min(envelope_mass(spec, a, mid, constants=constants), markov_mass(spec, mid)) <= target:
            hi = mid
        else:
            lo = mid + 1
    return lo


# ------------------------------------------------------------ pmf tables


def _weights_table(spec: ExpFamilySpec, a: ParamVector, lo: int, hi: int, center: int):
    xs = support_points(spec.T, lo, hi)
    e = _energies(spec, a, xs)
    e0 = float(_energies(spec, a, np.array([center]))[0])
    w = np.exp(-(e - e0))
    return xs, w


def pmf_member(spec: ExpFamilySpec, a, tail_target: float = 1e-12,
               constants: Constants | None = None, check: bool = True,
               cap: int = pmf_core.WINDOW_CAP) -> pmf_core.PMFTable:
    """Windowed pmf of the family member with parameter ``a``.

    The window is centred on a mode and is wide enough that the certified
    mass outside it is at most tail_target / 4; a further tail_target / 4 may
    be trimmed from the edges.  The table is renormalized on the window, so
    its l1 error against the true pmf is at most twice the discarded mass,
    and that doubled figure is what ``tail_bound`` records.

    With ``check`` set, a windowed fourth central moment above B raises
    AssumptionViolation: the certificate depends on B and would be void.
    """
    a = as_param(a)
    if not 0 < tail_target <= 0.1:
        raise ConfigError(f"tail_target must lie in (0, 0.1], got {tail_target}")
    key = (a.key, float(tail_target), constants)
    cache = spec._cache.setdefault("pmf", {})
    hit = cache.get(key)
    if hit is not None:
        return hit
    modes = mode(spec, a)
    center = modes[len(modes) // 2]
    R = certified_radius(spec, a, tail_target / 4.0, constants)
    if 2 * R + 1 > cap:
        raise WindowOverflow(f"certified window 2*{R}+1 exceeds cap {cap}")
    xs, w = _weights_table(spec, a, center - R, center + R, center)
    total = float(w.sum())
    if not np.isfinite(total) or total <= 0:
        raise AssumptionViolation("partition sum over the window is not finite", witness=a.key)
    probs = w / total
    table = pmf_core.make_table(int(xs[0]), probs, 0.0, trim=tail_target / 4.0)
    outside = tail_target / 4.0 + table.tail_bound
    table = pmf_core.PMFTable(table.lo, table.probs, 2.0 * outside)
    if check:
        m4 = pmf_core.moments(table).fourth_central
        if m4 > spec.B * (1 + 1e-9) + 1e-12:
            raise AssumptionViolation(
                f"fourth central moment {m4:.6g} exceeds B = {spec.B:.6g}; "
                "the tail certificate is void for this family", witness=a.key)
    if len(cache) > _PMF_CACHE_LIMIT:
        cache.clear()
    cache[key] = table
    return table


def log_ratio(spec: ExpFamilySpec, a, xs) -> np.ndarray:
    """ln p_a(x) - ln p_a(M) for each x (non-positive)."""
    a = as_param(a)
    m = mode(spec, a)[0]
    xs = np.asarray(xs, dtype=np.int64)
    return -(_energies(spec, a, xs) - float(_energies(spec, a, np.array([m]))[0]))


# ------------------------------------------------------ structural distance


def structural_distance(spec: ExpFamilySpec, a, b, window) -> float:
    """Smallest eps such that every x in the window has both mode-normalized
    ratios <= eps, or the two ratios agree to relative tolerance 1e-9.
    Different mode sets give 1."""
    a, b = as_param(a), as_param(b)
    _require_rho_cone(spec, a)
    _require_rho_cone(spec, b)
    if mode(spec, a) != mode(spec, b):
        return 1.0
    lo, hi = (window.start, window.stop - 1) if isinstance(window, range) else window
    xs = support_points(spec.T, lo, hi)
    ra = np.exp(log_ratio(spec, a, xs))
    rb = np.exp(log_ratio(spec, b, xs))
    equal = np.abs(ra - rb) <= RATIO_RTOL * np.maximum(ra, rb)
    thresholds = np.maximum(ra, rb)[~equal]
    if thresholds.size == 0:
        return 0.0
    # the candidates are the ratio values themselves; the smallest admissible
    # one is the largest threshold forced by an unequal point
    candidates = np.sort(thresholds)
    return float(min(candidates[-1], 1.0))


# --------------------------------------------------------- verification


@dataclass
class ConditionResult:
    name: str
    passed: bool = True
    witness: object = None
    worst: float | None = None
    detail: str = ""

    def fail(self, witness, worst=None, detail=""):
        if self.passed:
            self.passed = False
            self.witness = witness
            self.worst = worst
            self.detail = detail

    def to_json(self) -> dict:
        w = self.witness
        if isinstance(w, np.ndarray):
            w = w.tolist()
        return {"name": self.name, "passed": self.passed, "witness": w,
                "worst": self.worst, "detail": self.detail}


@dataclass
class AssumptionReport:
    conditions: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def __getitem__(self, name) -> ConditionResult:
        return self.conditions[name]

    def to_json(self) -> dict:
        return {"passed": self.passed,
                "conditions": [c.to_json() for c in self.conditions.values()]}


def power_iteration(C: np.ndarray, tol: float = 1e-9, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix."""
    k = C.shape[0]
    if k == 1:
        return float(C[0, 0])
    v = np.ones(k) / math.sqrt(k) + 1e-3 * np.arange(k)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        Cv = C @ v
        norm = float(np.linalg.norm(Cv))
        if norm == 0:
            return 0.0
        v_new = Cv / norm
        lam_new = float(v_new @ C @ v_new)
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            return lam_new
        v, lam = v_new, lam_new
    return lam


def verify_assumptions(spec: ExpFamilySpec, param_samples: Sequence, window) -> AssumptionReport:
    """Numeric check of unimodality, mode location, fourth moment, variance
    floor (on base-region samples) and covariance bound, on a fixed window."""
    names = ["rho_cone", "unimodal", "modes_bounded", "fourth_moment", "variance_floor",
             "covariance_bound"]
    if spec.mode_mass_gap is not None:
        names.append("mode_mass_gap")
    res = {n: ConditionResult(n) for n in names}
    lo, hi = (window.start, window.stop - 1) if isinstance(window, range) else window
    xs = support_points(spec.T, lo, hi)
    Tx = spec.T.evaluate(xs)
    for raw in param_samples:
        a = as_param(raw)
        if not spec.in_rho_cone(a):
            res["rho_cone"].fail(a.key, detail="sample outside the rho-cone")
            continue
        e = Tx @ a.a
        w = np.exp(-(e - e.min()))
        probs = w / w.sum()
        table = pmf_core.PMFTable(int(xs[0]), probs, 0.0)
        modes, uni = pmf_core.modes_of(table)
        if not uni:
            res["unimodal"].fail(a.key, detail=f"modes {modes}")
        bad = [m for m in modes if abs(m) > spec.L]
        if bad:
            res["modes_bounded"].fail(bad[0], worst=float(bad[0]),
                                      detail=f"parameter {list(a.key)}")
        mom = pmf_core.moments(table)
        if mom.fourth_central > spec.B:
            res["fourth_moment"].fail(a.key, mom.fourth_central)
        if spec.base_region.contains(a.a) and mom.variance < spec.gamma:
            res["variance_floor"].fail(a.key, mom.variance)
        if spec.mode_mass_gap is not None and probs.max() > 1 - spec.mode_mass_gap:
            res["mode_mass_gap"].fail(a.key, float(probs.max()))
        mean_T = probs @ Tx
        D = Tx - mean_T
        cov = (D * probs[:, None]).T @ D
        lam = power_iteration(cov)
        if lam > spec.Lambda:
            res["covariance_bound"].fail(a.key, lam)
    return AssumptionReport(res)


def partition_ratio(spec: ExpFamilySpec, a, constants: Constants | None = None) -> float:
    """sum_x exp(-a.(T(x) - T(M))) over the certified window."""
    a = as_param(a)
    modes = mode(spec, a)
    center = modes[0]
    R = certified_radius(spec, a, 1e-13, constants)
    _, w = _weights_table(spec, a, center - R, center + R, center)
    return float(w.sum())


def partition_bound_check(spec: ExpFamilySpec, a, constants: Constants | None = None) -> bool:
    """Is the mode-normalized partition sum at most c_part * B^{1/4}?"""
    c = resolve(constants)
    return partition_ratio(spec, a, constants) <= c.c_part * spec.B ** 0.25
