"""Finite-window integer pmfs with an explicit bound on the mass left outside.

Everything else in the package is checked against the arithmetic here, so
this module stays small and boring: numpy arrays, direct sums, and FFT
convolution only when the windows are long.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import signal, stats

from .errors import ConfigError, WindowOverflow

WINDOW_CAP = 2**22
TRIM_MASS = 1e-15
MODE_TOL = 1e-12
_SUM_TOL = 1e-12
_FFT_THRESHOLD = 50_000


@dataclass(frozen=True, eq=False)
class PMFTable:
    """pmf values on ``lo, lo+1, ..., lo+len(probs)-1``.

    ``tail_bound`` is a certified upper bound on the l1 error of the table
    against the distribution it stands for.  For an exact restriction to the
    window this is just the mass outside; a table renormalized on its window
    needs twice that.  Either way the total variation between two true
    distributions is within half the sum of the two bounds of the table
    value.  Tables are immutable after construction.
    """

    lo: int
    probs: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ConfigError("probs must be a non-empty 1-d array")
        if not np.all(np.isfinite(probs)):
            raise ConfigError("probs must be finite")
        if probs.min() < 0:
            raise ConfigError(f"negative probability {probs.min():.3e}")
        tail = float(self.tail_bound)
        if not (0.0 <= tail < 0.5):
            raise ConfigError(f"tail_bound must lie in [0, 0.5), got {tail}")
        total = float(probs.sum())
        if total > 1.0 + _SUM_TOL or total < 1.0 - tail - _SUM_TOL:
            raise ConfigError(
                f"window mass {total!r} inconsistent with tail_bound {tail!r}")
        probs.setflags(write=False)
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "tail_bound", tail)

    @property
    def hi(self) -> int:
        """Inclusive upper end of the window."""
        return self.lo + len(self.probs) - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def __len__(self):
        return len(self.probs)

    def at(self, x) -> np.ndarray:
        """Table value at integer(s) x; zero outside the window."""
        x = np.asarray(x, dtype=np.int64)
        idx = x - self.lo
        inside = (idx >= 0) & (idx < len(self.probs))
        out = np.zeros(x.shape, dtype=float)
        out[inside] = self.probs[idx[inside]]
        return out

    def to_json(self) -> dict:
        return {"lo": self.lo, "probs": [float(v) for v in self.probs],
                "tail_bound": self.tail_bound}

    @classmethod
    def from_json(cls, data: dict) -> "PMFTable":
        return cls(int(data["lo"]), np.asarray(data["probs"], dtype=float),
                   float(data["tail_bound"]))


def make_table(lo: int, probs, tail_bound: float = 0.0, trim: float = 0.0) -> PMFTable:
    """Build a table after clipping round-off negatives and trimming edges.

    Up to ``trim`` mass is removed from the two ends (half budget each) and
    added to the tail bound.
    """
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    total = probs.sum()
    if total > 1.0:
        probs = probs / total
    tail = float(tail_bound)
    if trim > 0 and probs.size > 1:
        half = trim / 2.0
        left = np.cumsum(probs)
        right = np.cumsum(probs[::-1])
        i0 = int(np.searchsorted(left, half, side="right"))
        j0 = int(np.searchsorted(right, half, side="right"))
        i0 = min(i0, probs.size - 1)
        j0 = min(j0, probs.size - 1 - i0)
        removed = (left[i0 - 1] if i0 > 0 else 0.0) + (right[j0 - 1] if j0 > 0 else 0.0)
        probs = probs[i0:probs.size - j0]
        lo = lo + i0
        tail += float(removed)
    return PMFTable(lo, probs, tail)


@dataclass(frozen=True)
class SIIRVSpec:
    """An order-n sum.  Terms are ParamVectors (need a family) or PMFTables."""

    terms: tuple
    n: int

    def __post_init__(self):
        terms = tuple(self.terms)
        if not 1 <= len(terms) <= self.n:
            raise ConfigError(f"need 1 <= |terms| <= n, got {len(terms)} terms and n={self.n}")
        object.__setattr__(self, "terms", terms)

    @property
    def order(self) -> int:
        return len(self.terms)


# ---------------------------------------------------------------- distances


def tv_distance(p: PMFTable, q: PMFTable) -> tuple[float, float]:
    """Half the l1 distance over the union window, plus the tail slack.

    The true distance lies in ``[max(0, value - slack), value + slack]``.
    """
    lo = min(p.lo, q.lo)
    hi = max(p.hi, q.hi)
    a = np.zeros(hi - lo + 1)
    b = np.zeros(hi - lo + 1)
    a[p.lo - lo:p.hi - lo + 1] = p.probs
    b[q.lo - lo:q.hi - lo + 1] = q.probs
    value = 0.5 * float(np.abs(a - b).sum())
    return min(value, 1.0), 0.5 * (p.tail_bound + q.tail_bound)


# -------------------------------------------------------------- convolution


def _conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if min(a.size, b.size) < 64 or a.size * b.size < _FFT_THRESHOLD:
        return np.convolve(a, b)
    return signal.fftconvolve(a, b)


def convolve(p: PMFTable, q: PMFTable, cap: int = WINDOW_CAP) -> PMFTable:
    """Distribution of X + Y for independent X ~ p, Y ~ q."""
    length = len(p) + len(q) - 1
    if length > cap:
        raise WindowOverflow(f"convolution window {length} exceeds cap {cap}")
    probs = _conv(p.probs, q.probs)
    return make_table(p.lo + q.lo, probs, p.tail_bound + q.tail_bound, trim=TRIM_MASS)


def convolve_power(p: PMFTable, m: int, cap: int = WINDOW_CAP) -> PMFTable:
    """m-fold self-convolution by repeated squaring."""
    if m < 1:
        raise ConfigError("power must be >= 1")
    result = None
    base = p
    while m:
        if m & 1:
            result = base if result is None else convolve(result, base, cap)
        m >>= 1
        if m:
            base = convolve(base, base, cap)
    return result


def convolve_all(tables: Sequence[PMFTable], cap: int = WINDOW_CAP) -> PMFTable:
    """Balanced pairwise reduction; same result as left-to-right folding."""
    items = list(tables)
    if not items:
        raise ConfigError("nothing to convolve")
    while len(items) > 1:
        nxt = [convolve(items[i], items[i + 1], cap) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def sum_pmf(spec: SIIRVSpec, family=None, tail_target: float = 1e-12,
            cap: int = WINDOW_CAP) -> PMFTable:
    """Oracle pmf of a SIIRV.  Parametric terms are materialized through
    :func:`siirv_lab.expfam.pmf_member` and need ``family``."""
    tables = []
    per_term = tail_target / max(len(spec.terms), 1)
    cache = {}
    for term in spec.terms:
        if isinstance(term, PMFTable):
            tables.append(term)
            continue
        if family is None:
            raise ConfigError("parametric terms need an ExpFamilySpec")
        from .expfam import as_param, pmf_member

        a = as_param(term)
        key = tuple(a.a.tolist())
        if key not in cache:
            cache[key] = pmf_member(family, a, per_term)
        tables.append(cache[key])
    return convolve_all(tables, cap)


def shift(p: PMFTable, t: int) -> PMFTable:
    return PMFTable(p.lo + int(t), p.probs, p.tail_bound)


# ---------------------------------------------------------------- summaries


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    third_central_abs: float
    fourth_central: float

    def __iter__(self):
        return iter((self.mean, self.variance, self.third_central_abs, self.fourth_central))


def moments(p: PMFTable) -> Moments:
    """Window moments normalized by the window mass.

    No tail correction: the neglected contribution of order j is at most
    ``tail_bound * R**j`` for a tail confined to radius R.
    """
    x = p.support.astype(float)
    w = p.probs / p.probs.sum()
    mean = float(np.dot(w, x))
    d = x - mean
    d2 = d * d
    return Moments(mean, float(np.dot(w, d2)), float(np.dot(w, np.abs(d) * d2)),
                   float(np.dot(w, d2 * d2)))


def modes_of(p: PMFTable, tol: float = MODE_TOL) -> tuple[list[int], bool]:
    """All argmax points and whether the table is unimodal.

    Unimodal means non-decreasing up to the first mode, flat across the
    modes, and non-increasing afterwards, each comparison at tolerance
    ``tol``.
    """
    probs = p.probs
    top = probs.max()
    idx = np.flatnonzero(probs >= top - tol)
    modes = [int(p.lo + i) for i in idx]
    first, last = int(idx[0]), int(idx[-1])
    diffs = np.diff(probs)
    rising = np.all(diffs[:first] >= -tol)
    falling = np.all(diffs[last:] <= tol)
    contiguous = (last - first + 1) == idx.size
    return modes, bool(rising and falling and contiguous)


def sample(p: PMFTable, rng: np.random.Generator, count: int) -> np.ndarray:
    """Inverse-CDF draws from the window.

    The tail is folded in by renormalizing, so each draw is biased by at
    most ``tail_bound`` in total variation.
    """
    cdf = np.cumsum(p.probs)
    cdf /= cdf[-1]
    u = rng.random(int(count))
    idx = np.searchsorted(cdf, u, side="right")
    np.minimum(idx, len(cdf) - 1, out=idx)
    return idx.astype(np.int64) + p.lo


# ------------------------------------------------------ closed-form builders


def point_mass(x: int) -> PMFTable:
    return PMFTable(int(x), np.ones(1), 0.0)


def bernoulli(p: float) -> PMFTable:
    return PMFTable(0, np.array([1.0 - p, p]), 0.0)


def geometric(p: float, tail_target: float = 1e-12) -> PMFTable:
    """Number of failures before the first success: p (1-p)^x on x >= 0."""
    if not 0 < p <= 1:
        raise ConfigError(f"success probability must lie in (0, 1], got {p}")
    if p == 1.0:
        return point_mass(0)
    q = 1.0 - p
    # P(X >= N) = q^N
    n = max(1, int(math.ceil(math.log(tail_target) / math.log(q))))
    x = np.arange(n)
    probs = p * np.exp(x * math.log(q))
    return make_table(0, probs, q**n)


def poisson(lam: float, tail_target: float = 1e-12) -> PMFTable:
    if lam < 0:
        raise ConfigError("Poisson mean must be >= 0")
    if lam == 0:
        return point_mass(0)
    lo = int(stats.poisson.ppf(tail_target / 4, lam))
    hi = int(stats.poisson.isf(tail_target / 4, lam)) + 1
    lo = max(lo - 1, 0)
    x = np.arange(lo, hi + 1)
    probs = stats.poisson.pmf(x, lam)
    tail = float(stats.poisson.cdf(lo - 1, lam) + stats.poisson.sf(hi, lam))
    return make_table(lo, probs, tail)


def negative_binomial(m: int, p: float, tail_target: float = 1e-12) -> PMFTable:
    """Sum of m i.i.d. geometrics with success probability p."""
    if p == 1.0:
        return point_mass(0)
    hi = int(stats.nbinom.isf(tail_target, m, p)) + 1
    x = np.arange(0, hi + 1)
    probs = stats.nbinom.pmf(x, m, p)
    return make_table(0, probs, float(stats.nbinom.sf(hi, m, p)))


TableLike = Union[PMFTable, dict]


def as_table(obj: TableLike) -> PMFTable:
    return obj if isinstance(obj, PMFTable) else PMFTable.from_json(obj)
