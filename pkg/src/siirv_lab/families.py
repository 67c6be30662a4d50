"""Catalog families with their structural constants worked out.

Geometric and zeta constants are analytic; the discrete Gaussian and
Laplace ones come from windowed numeric scans with a safety margin, since
they have no convenient closed forms.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .expfam import ExpFamilySpec, SufficientStats
from .geometry import ConeDescription
from .regions import Box, interval

_HALF_LINE = ConeDescription(np.array([[1.0]]), np.array([[1.0]]))


def _window_stats(T: SufficientStats, a, lo: int, hi: int):
    """(variance, fourth central moment, max eigenvalue of Cov T) on a window."""
    from .expfam import support_points

    xs = support_points(T, lo, hi)
    Tx = T.evaluate(xs)
    e = Tx @ np.asarray(a, float)
    w = np.exp(-(e - e.min()))
    w /= w.sum()
    x = xs.astype(float)
    mu = w @ x
    d = x - mu
    var = float(w @ d**2)
    m4 = float(w @ d**4)
    D = Tx - w @ Tx
    cov = (D * w[:, None]).T @ D
    lam = float(np.linalg.eigvalsh(cov).max())
    return var, m4, lam


# ---------------------------------------------------------------- geometric


def geometric_moments(a: float) -> tuple[float, float, float]:
    """(mean, variance, fourth central moment) of p (1-p)^x, p = 1 - e^{-a}."""
    q = math.exp(-a)
    p = -math.expm1(-a)
    return q / p, q / p**2, q * (p * p - 9 * p + 9) / p**4


def geometric_family(lo: float = 0.5, hi: float = 3.0, L: float = 1.0) -> ExpFamilySpec:
    """T(x) = x on {0, 1, ...}; a in [lo, hi] means success probability 1 - e^{-a}.

    rho = lo, so the rho-cone is the half-line [lo, inf).  B and Lambda are
    attained at a = lo, gamma at a = hi.
    """
    _, var_lo, m4_lo = geometric_moments(lo)
    _, var_hi, _ = geometric_moments(hi)
    return ExpFamilySpec(
        T=SufficientStats(("x",), "N0"),
        cone=_HALF_LINE,
        base_region=interval(lo, hi),
        rho=lo, L=L,
        B=m4_lo * (1 + 1e-9),
        gamma=var_hi * (1 - 1e-9),
        Lambda=var_lo * (1 + 1e-9),
        theta=None,
        name=f"geometric[{lo:g},{hi:g}]",
    )


def success_to_param(p: float) -> float:
    return -math.log1p(-p)


def param_to_success(a: float) -> float:
    return -math.expm1(-a)


# --------------------------------------------------------------------- zeta


def zeta_moments(a: float) -> tuple[float, float, float]:
    """(mean, variance, fourth central moment) of x^{-a} / zeta(a) on x >= 1."""
    z = special.zeta(a)
    m = [special.zeta(a - j) / z for j in range(1, 5)]
    mu = m[0]
    var = m[1] - mu**2
    c4 = m[3] - 4 * mu * m[2] + 6 * mu**2 * m[1] - 3 * mu**4
    return float(mu), float(var), float(c4)


def _log_variance(a: float, n: int = 200_000) -> float:
    x = np.arange(1, n + 1, dtype=float)
    lx = np.log(x)
    w = np.exp(-a * lx)
    w /= w.sum()
    m1 = w @ lx
    return float(w @ (lx - m1) ** 2)


def zeta_family(lo: float = 5.5, hi: float = 9.0) -> ExpFamilySpec:
    """T(x) = ln x on {1, 2, ...}.  Needs lo > 5 for a finite fourth moment."""
    if lo <= 5:
        raise ValueError("zeta family needs a > 5 throughout")
    _, _, m4_lo = zeta_moments(lo)
    _, var_hi, _ = zeta_moments(hi)
    lam = max(_log_variance(a) for a in np.linspace(lo, hi, 8))
    return ExpFamilySpec(
        T=SufficientStats(("log",), "N"),
        cone=_HALF_LINE,
        base_region=interval(lo, hi),
        rho=lo, L=1.0,
        B=m4_lo * (1 + 1e-6),
        gamma=var_hi * (1 - 1e-6),
        Lambda=lam * 1.01,
        name=f"zeta[{lo:g},{hi:g}]",
    )


# ------------------------------------------------------- discrete Gaussian


def discrete_gaussian_family(a1: tuple = (-1.0, 1.0), a2: tuple = (0.5, 2.0),
                             margin: float = 0.05, grid: int = 21) -> ExpFamilySpec:
    """T(x) = (x, x^2) on Z with a box of parameters.

    The cone is spanned by the two lower corners (a1 extreme, a2 minimal).
    rho is the distance from the origin to the box.  gamma and Lambda are
    scanned on a grid over the box, B also over the arc of norm rho inside
    the cone (the widest members of the rho-cone); all are padded by
    ``margin``.
    """
    lo = np.array([a1[0], a2[0]])
    hi = np.array([a1[1], a2[1]])
    g1 = np.array([a1[0], a2[0]])
    g2 = np.array([a1[1], a2[0]])
    Z = np.column_stack([g1, g2])
    # inward normals: rotate each generator by 90 degrees toward the other
    n1 = np.array([-g1[1], g1[0]])
    if n1 @ g2 < 0:
        n1 = -n1
    n2 = np.array([-g2[1], g2[0]])
    if n2 @ g1 < 0:
        n2 = -n2
    cone = ConeDescription(np.column_stack([n1, n2]), Z)
    box = Box(lo, hi)
    rho = float(np.linalg.norm(box.project(np.zeros(2))))
    T = SufficientStats(("x", "x2"), "Z")
    window = (-60, 60)

    box_pts = box.grid(grid)
    z1, z2 = Z[:, 0] / np.linalg.norm(Z[:, 0]), Z[:, 1] / np.linalg.norm(Z[:, 1])
    ang = np.linspace(math.atan2(z1[1], z1[0]), math.atan2(z2[1], z2[0]), 4 * grid)
    arc = rho * np.column_stack([np.cos(ang), np.sin(ang)])
    box_stats = [_window_stats(T, a, *window) for a in box_pts]
    arc_stats = [_window_stats(T, a, *window) for a in arc]
    var_min = min(s[0] for s in box_stats)
    # B must hold on the whole rho-cone, Lambda only on the hull of the box
    B = max(s[1] for s in box_stats + arc_stats)
    lam = max(s[2] for s in box_stats)
    # the vertex of a1 x + a2 x^2 sits at -a1/(2 a2), steepest on the generators
    cl = max(abs(g1[0] / (2 * g1[1])), abs(g2[0] / (2 * g2[1])), 1.0)
    return ExpFamilySpec(
        T=T, cone=cone, base_region=box, rho=rho, L=math.ceil(cl),
        B=B * (1 + margin), gamma=var_min * (1 - margin), Lambda=lam * (1 + margin),
        name="discrete_gaussian",
    )


# ------------------------------------------------------------------ Laplace


def laplace_family(lo: float = 0.5, hi: float = 3.0, margin: float = 1e-6) -> ExpFamilySpec:
    """T(x) = |x| on Z: the two-sided geometric, mode 0."""
    T = SufficientStats(("abs",), "Z")

    def stats(a):
        R = int(math.ceil(60.0 / a)) + 10
        return _window_stats(T, [a], -R, R)

    scan = [stats(a) for a in np.linspace(lo, hi, 8)]
    var_hi = min(s[0] for s in scan)
    m4_lo = max(s[1] for s in scan)
    lam_lo = max(s[2] for s in scan)
    return ExpFamilySpec(
        T=T, cone=_HALF_LINE, base_region=interval(lo, hi), rho=lo, L=1.0,
        B=m4_lo * (1 + margin), gamma=var_hi * (1 - margin), Lambda=lam_lo * (1 + margin),
        name=f"laplace[{lo:g},{hi:g}]",
    )


CATALOG = {
    "geometric": geometric_family,
    "zeta": zeta_family,
    "discrete_gaussian": discrete_gaussian_family,
    "laplace": laplace_family,
}
