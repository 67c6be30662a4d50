"""Discretized Gaussians and closed-form distance bounds.

Each bound has an evaluator and a ``validate_*`` companion that computes the
oracle total variation it is meant to dominate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from . import pmf_core
from .errors import ConfigError
from .pmf_core import PMFTable


@dataclass(frozen=True)
class GaussianParams:
    mu: float
    sigma2: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ConfigError(f"need finite mu and sigma2 > 0, got {self.mu}, {self.sigma2}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def to_json(self) -> dict:
        return {"mu": self.mu, "sigma2": self.sigma2}

    @classmethod
    def from_json(cls, data: dict) -> "GaussianParams":
        return cls(float(data["mu"]), float(data["sigma2"]))


@dataclass(frozen=True)
class MomentSummary:
    mu: float
    sigma2: float
    beta: float
    shift_delta: float

    def __post_init__(self):
        if self.sigma2 < 0 or self.beta < 0 or self.shift_delta < 0:
            raise ConfigError("sigma2, beta and shift_delta must be >= 0")


def disc_gauss_pmf(g: GaussianParams, tail_target: float = 1e-12) -> PMFTable:
    """P(x) = Phi((x + 1/2 - mu)/sigma) - Phi((x - 1/2 - mu)/sigma).

    Cells right of the mean use survival-function differences so that far
    tail cells keep full relative precision.
    """
    sigma = g.sigma
    R = int(math.ceil(sigma * math.sqrt(2.0 * math.log(2.0 / tail_target)))) + 2
    c = int(math.floor(g.mu))
    xs = np.arange(c - R, c + R + 1, dtype=float)
    lo_z = (xs - 0.5 - g.mu) / sigma
    hi_z = (xs + 0.5 - g.mu) / sigma
    left = special.ndtr(hi_z) - special.ndtr(lo_z)
    right = special.ndtr(-lo_z) - special.ndtr(-hi_z)
    probs = np.where(xs + 0.5 <= g.mu, left, right)
    tail = float(special.ndtr(lo_z[0]) + special.ndtr(-hi_z[-1]))
    return pmf_core.make_table(c - R, probs, tail)


def tv_gauss_bound(g1: GaussianParams, g2: GaussianParams) -> float:
    """1/2 (|mu1 - mu2| / sigma1 + (sigma2^2 - sigma1^2) / sigma1^2), sigma1 <= sigma2."""
    if g1.sigma2 > g2.sigma2:
        g1, g2 = g2, g1
    return 0.5 * (abs(g1.mu - g2.mu) / g1.sigma + (g2.sigma2 - g1.sigma2) / g1.sigma2)


def tv_poisson_bound(l1: float, l2: float) -> float:
    """(e^{|d|} - e^{-|d|}) / 2 with d = l1 - l2."""
    return math.sinh(abs(l1 - l2))


def shift_distance_bound(per_term_shift: Sequence[float]) -> float:
    """sqrt(2/pi) / sqrt(1/4 + sum_i (1 - d_i)), clamped to 1."""
    d = np.asarray(per_term_shift, dtype=float)
    if d.size and (d.min() < 0 or d.max() > 1):
        raise ConfigError("per-term shift distances must lie in [0, 1]")
    value = math.sqrt(2.0 / math.pi) / math.sqrt(0.25 + float(np.sum(1.0 - d)))
    return min(value, 1.0)


def berry_esseen_bound(m: MomentSummary) -> float:
    """delta (1 + 3 beta / (2 sigma^2)) + (1/(2 sqrt(2 pi)) + (5 + 3 sqrt(pi/8)) beta/sigma^2) / sigma."""
    if m.sigma2 <= 0:
        return math.inf
    sigma = math.sqrt(m.sigma2)
    r = m.beta / m.sigma2
    return (m.shift_delta * (1.0 + 1.5 * r)
            + (1.0 / (2.0 * math.sqrt(2.0 * math.pi)) + (5.0 + 3.0 * math.sqrt(math.pi / 8.0)) * r)
            / sigma)


# ------------------------------------------------------------- summaries


def shift_distance(p: PMFTable) -> tuple[float, float]:
    """d_TV(X, X + 1) from a table, with its slack."""
    return pmf_core.tv_distance(p, pmf_core.shift(p, 1))


def _prefix_suffix(tables: list[PMFTable]):
    n = len(tables)
    prefix = [None] * (n + 1)
    suffix = [None] * (n + 1)
    for i in range(n):
        prefix[i + 1] = tables[i] if prefix[i] is None else pmf_core.convolve(prefix[i], tables[i])
    for i in range(n - 1, -1, -1):
        suffix[i] = tables[i] if suffix[i + 1] is None else pmf_core.convolve(tables[i], suffix[i + 1])
    return prefix, suffix


def moment_summary(tables: Sequence[PMFTable]) -> MomentSummary:
    """mu, sigma^2 and beta add over terms; shift_delta is the largest
    leave-one-out shift distance (plus its slack, to stay an upper bound)."""
    tables = list(tables)
    if not tables:
        raise ConfigError("need at least one term")
    mus = [pmf_core.moments(t) for t in tables]
    mu = sum(m.mean for m in mus)
    var = sum(m.variance for m in mus)
    beta = sum(m.third_central_abs for m in mus)
    if len(tables) == 1:
        return MomentSummary(mu, var, beta, 1.0)
    prefix, suffix = _prefix_suffix(tables)
    delta = 0.0
    for i in range(len(tables)):
        parts = [t for t in (prefix[i], suffix[i + 1]) if t is not None]
        rest = parts[0] if len(parts) == 1 else pmf_core.convolve(parts[0], parts[1])
        value, slack = shift_distance(rest)
        delta = max(delta, min(1.0, value + slack))
    return MomentSummary(mu, var, beta, delta)


# ------------------------------------------------------------- validators


@dataclass(frozen=True)
class Validation:
    bound: float
    oracle: float
    slack: float

    @property
    def ok(self) -> bool:
        return self.bound >= self.oracle - self.slack

    def to_json(self) -> dict:
        return {"bound": self.bound, "oracle": self.oracle, "slack": self.slack, "ok": self.ok}


def validate_gauss(g1: GaussianParams, g2: GaussianParams) -> Validation:
    value, slack = pmf_core.tv_distance(disc_gauss_pmf(g1), disc_gauss_pmf(g2))
    return Validation(tv_gauss_bound(g1, g2), value, slack)


def validate_poisson(l1: float, l2: float) -> Validation:
    value, slack = pmf_core.tv_distance(pmf_core.poisson(l1), pmf_core.poisson(l2))
    return Validation(tv_poisson_bound(l1, l2), value, slack)


def validate_shift(tables: Sequence[PMFTable]) -> Validation:
    ds = []
    for t in tables:
        v, s = shift_distance(t)
        ds.append(min(1.0, v + s))
    total = pmf_core.convolve_all(list(tables))
    value, slack = shift_distance(total)
    return Validation(shift_distance_bound(ds), value, slack)


def validate_berry_esseen(tables: Sequence[PMFTable]) -> Validation:
    summary = moment_summary(tables)
    total = pmf_core.convolve_all(list(tables))
    z = disc_gauss_pmf(GaussianParams(summary.mu, summary.sigma2))
    value, slack = pmf_core.tv_distance(total, z)
    return Validation(berry_esseen_bound(summary), value, slack)
