"""Sample-based learners: median-boosted moment estimates, pairwise
hypothesis selection, tournaments, and the two end-to-end learners."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import approx, covers, pmf_core
from .constants import Constants, resolve
from .errors import BracketFailure, BudgetExceeded, ConfigError, GridOverflow
from .expfam import ExpFamilySpec, ParamVector
from .pmf_core import PMFTable, SIIRVSpec

CANDIDATE_TAIL = 1e-10


@dataclass(frozen=True)
class LearnConfig:
    eps: float
    delta: float
    beta: float = 0.0
    sample_budget_cap: int = 10**8
    seed: int = 0
    candidate_budget: int = 50_000
    siiurv_interval_cap: int = 4096
    screen_keep: int = 8
    reuse_samples: bool = False
    strict: bool = False

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ConfigError(f"eps must lie in (0, 1), got {self.eps}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.beta < 0 or (1 + self.beta) ** 2 > 1 + self.eps / 8:
            raise ConfigError("need beta >= 0 with (1 + beta)^2 <= 1 + eps/8")
        if self.sample_budget_cap <= 0:
            raise ConfigError("sample budget cap must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def streams(self, count: int) -> list[np.random.Generator]:
        return [np.random.default_rng(s)
                for s in np.random.SeedSequence(self.seed).spawn(count)]


# ----------------------------------------------------------------- samplers


class CountingSampler:
    """Draws from X through ``draw(count)``, counting every sample."""

    def __init__(self, draw_fn: Callable[[np.random.Generator, int], np.ndarray],
                 rng: np.random.Generator, cap: int = 10**8):
        self._draw = draw_fn
        self.rng = rng
        self.cap = int(cap)
        self.count = 0

    def draw(self, count: int) -> np.ndarray:
        count = int(count)
        if self.count + count > self.cap:
            raise BudgetExceeded(f"sample budget {self.cap} exhausted "
                                 f"({self.count} used, {count} requested)")
        self.count += count
        return np.asarray(self._draw(self.rng, count), dtype=np.int64)


def table_sampler(table: PMFTable, rng: np.random.Generator,
                  cap: int = 10**8) -> CountingSampler:
    cdf = np.cumsum(table.probs)
    cdf /= cdf[-1]

    def draw(r, count):
        idx = np.searchsorted(cdf, r.random(count), side="right")
        np.minimum(idx, len(cdf) - 1, out=idx)
        return idx + table.lo

    return CountingSampler(draw, rng, cap)


# ------------------------------------------------------------- estimation


def estimate_mean_var(sampler: CountingSampler, eps: float, delta: float) -> tuple[float, float]:
    """Median over ceil(18 ln(2/delta)) rounds of ceil(3/eps^2)-sample
    means and Bessel-corrected variances."""
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ConfigError("eps and delta must lie in (0, 1)")
    per_round = int(math.ceil(3.0 / eps**2))
    rounds = int(math.ceil(18.0 * math.log(2.0 / delta)))
    draws = sampler.draw(per_round * rounds).reshape(rounds, per_round).astype(float)
    means = draws.mean(axis=1)
    vars_ = draws.var(axis=1, ddof=1) if per_round > 1 else np.zeros(rounds)
    return float(np.median(means)), float(np.median(vars_))


# ----------------------------------------------------- hypothesis selection


@dataclass
class PairRecord:
    i: int
    j: int
    p1: float
    p2: float
    tau: float
    decision: str  # "H1", "H2" or "draw"

    def to_json(self) -> dict:
        return {"i": self.i, "j": self.j, "p1": self.p1, "p2": self.p2,
                "tau": self.tau, "decision": self.decision}


@dataclass
class HypothesisReport:
    winner: int
    records: list = field(default_factory=list)
    samples_used: int = 0
    flagged: bool = False

    def to_json(self) -> dict:
        return {"winner": self.winner, "samples_used": self.samples_used,
                "flagged": self.flagged, "records": [r.to_json() for r in self.records]}


def selection_samples(eps: float, delta: float, constants: Constants | None = None) -> int:
    c = resolve(constants)
    return int(math.ceil(c.c_h * math.log(1.0 / delta) / eps**2))


def _decide(p1: float, p2: float, tau: float, eps: float) -> str:
    first = tau > p1 - eps
    second = tau < p2 + eps
    if first and not second:
        return "H1"
    if second and not first:
        return "H2"
    return "draw"


def _stack(tables: Sequence[PMFTable]):
    lo = min(t.lo for t in tables)
    hi = max(t.hi for t in tables)
    arr = np.zeros((len(tables), hi - lo + 1))
    for r, t in enumerate(tables):
        arr[r, t.lo - lo:t.hi - lo + 1] = t.probs
    return lo, arr


def _compete(h1: np.ndarray, h2: np.ndarray, lo: int, samples: np.ndarray, eps: float):
    W1 = h1 > h2
    p1 = float(h1[W1].sum())
    p2 = float(h2[W1].sum())
    idx = samples - lo
    inside = (idx >= 0) & (idx < W1.size)
    tau = float(W1[idx[inside]].sum()) / max(samples.size, 1)
    return p1, p2, tau, _decide(p1, p2, tau, eps)


def select_hypothesis(sampler: CountingSampler, H1: PMFTable, H2: PMFTable, eps: float,
                      delta: float, constants: Constants | None = None):
    """Scheffe competition on W1 = {x : H1(x) > H2(x)}.

    H1 wins when tau > p1 - eps and not tau < p2 + eps; H2 symmetrically;
    anything else is a draw, resolved to H1.  Returns (1 or 2, record).
    """
    lo, arr = _stack([H1, H2])
    m = selection_samples(eps, delta, constants)
    samples = sampler.draw(m)
    p1, p2, tau, decision = _compete(arr[0], arr[1], lo, samples, eps)
    rec = PairRecord(0, 1, p1, p2, tau, decision)
    return (2 if decision == "H2" else 1), rec


def tournament(sampler: CountingSampler, hypotheses: Sequence[PMFTable], eps: float,
               delta: float, constants: Constants | None = None,
               reuse_samples: bool = False) -> HypothesisReport:
    """All-pairs competitions at confidence delta/M^2.

    The winner is the first hypothesis that never lost; if every one lost
    at least once, the one with fewest losses is returned and flagged.
    """
    M = len(hypotheses)
    if M == 0:
        raise ConfigError("tournament needs at least one hypothesis")
    before = sampler.count
    if M == 1:
        return HypothesisReport(0, [], 0, False)
    lo, arr = _stack(hypotheses)
    m = selection_samples(eps, delta / M**2, constants)
    shared = sampler.draw(m) if reuse_samples else None
    losses = np.zeros(M, dtype=int)
    records = []
    for i in range(M):
        for j in range(i + 1, M):
            samples = shared if reuse_samples else sampler.draw(m)
            p1, p2, tau, decision = _compete(arr[i], arr[j], lo, samples, eps)
            if decision == "H1":
                losses[j] += 1
            elif decision == "H2":
                losses[i] += 1
            records.append(PairRecord(i, j, p1, p2, tau, decision))
    clean = np.flatnonzero(losses == 0)
    if clean.size:
        return HypothesisReport(int(clean[0]), records, sampler.count - before, False)
    return HypothesisReport(int(np.argmin(losses)), records, sampler.count - before, True)


# ----------------------------------------------------------------- learners


@dataclass
class LearnOutcome:
    table: PMFTable
    spec: SIIRVSpec | None
    branch: str  # "sparse" or "dense"
    x_samples: int
    report: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"branch": self.branch, "x_samples": self.x_samples, "report": self.report}
        if self.spec is not None:
            out["terms"] = [list(map(float, t.a)) for t in self.spec.terms]
        return out


def _gauss_table(mu: float, var: float) -> PMFTable:
    if var <= 0:
        return pmf_core.point_mass(int(round(mu)))
    return approx.disc_gauss_pmf(approx.GaussianParams(mu, var))


def _empirical(samples: np.ndarray) -> PMFTable:
    lo = int(samples.min())
    counts = np.bincount(samples - lo).astype(float)
    return PMFTable(lo, counts / counts.sum(), 0.0)


def learn_siiurv(sampler: CountingSampler, n: int, L: float, B: float, gamma: float,
                 cfg: LearnConfig, constants: Constants | None = None) -> LearnOutcome:
    """Improper learner for order-n SIIURVs.

    Sparse branch: lattice roundings of the empirical pmf on every interval
    I_S, one candidate per mode sum S, then a tournament.  It runs only when
    the interval is desk-sized (cfg.siiurv_interval_cap); otherwise it is
    skipped and recorded.  Dense branch: discretized Gaussian with
    median-boosted moment estimates.  The two meet in a final selection.
    """
    c = resolve(constants)
    eps, d3 = cfg.eps, cfg.delta / 3.0
    R = covers.siiurv_radius(B, eps, n)
    length = 2 * n * R + 1
    report: dict = {"interval_length": length, "R": R}
    start = sampler.count

    mu, var = estimate_mean_var(sampler, eps, d3)
    H_D = _gauss_table(mu, var)
    report["dense_estimate"] = {"mu": mu, "sigma2": var}

    if length > cfg.siiurv_interval_cap:
        if cfg.strict:
            raise GridOverflow(f"interval length {length} exceeds the desk-scale cap "
                               f"{cfg.siiurv_interval_cap}")
        report["sparse"] = "skipped: interval beyond desk scale"
        return LearnOutcome(H_D, None, "dense", sampler.count - start, report)

    K = int(math.ceil(length / (eps / 2.0)))
    screen = int(math.ceil(c.c_h * (length + math.log(3.0 / cfg.delta)) / eps**2))
    emp = _empirical(sampler.draw(screen))
    cl = int(math.ceil(max(L, 0.0)))
    cands = []
    for S in range(-n * cl, n * cl + 1):
        lo = S - n * R
        w = emp.at(np.arange(lo, lo + length))
        if w.sum() <= 0:
            continue
        cands.append(PMFTable(lo, covers._lattice_round(w / w.sum(), K), 0.0))
    if not cands:
        report["sparse"] = "no interval holds empirical mass"
        return LearnOutcome(H_D, None, "dense", sampler.count - start, report)
    tour = tournament(sampler, cands, eps, d3, constants, cfg.reuse_samples)
    H_S = cands[tour.winner]
    report["sparse"] = {"candidates": len(cands), "tournament": tour.to_json()}
    choice, rec = select_hypothesis(sampler, H_S, H_D, eps, d3, constants)
    report["final"] = rec.to_json()
    branch = "sparse" if choice == 1 else "dense"
    return LearnOutcome(H_S if choice == 1 else H_D, None, branch, sampler.count - start, report)


def _spec_table(family: ExpFamilySpec, spec: SIIRVSpec) -> PMFTable:
    terms = spec.terms
    if all(t == terms[0] for t in terms):
        from .expfam import pmf_member

        base = pmf_member(family, terms[0], CANDIDATE_TAIL / len(terms))
        return pmf_core.convolve_power(base, len(terms))
    return pmf_core.sum_pmf(spec, family, CANDIDATE_TAIL)


def _sparse_candidates(cover: covers.CoverSet, family: ExpFamilySpec, emp: PMFTable,
                       cfg: LearnConfig) -> tuple[list[tuple], bool]:
    """Candidate index multisets: all of them within budget, else two-point
    mixtures ranked by the Gaussian bound against the empirical moments."""
    if cover.sparse_size() <= cfg.candidate_budget:
        return list(cover.sparse_candidates()), False
    arr = cover.sparse.array
    n = cover.sparse_terms
    mom = [covers.member_moments(family, row) for row in arr]
    em = pmf_core.moments(emp)
    target = approx.GaussianParams(em.mean, max(em.variance, 1e-9))
    P = len(arr)
    stride = max(1, P // 64)
    picks = list(range(0, P, stride))
    scored = []
    for ii, i in enumerate(picks):
        for j in picks[ii:]:
            for cnt in range(0, n + 1, max(1, n // 64)):
                mean = cnt * mom[i][0] + (n - cnt) * mom[j][0]
                var = cnt * mom[i][1] + (n - cnt) * mom[j][1]
                g = approx.GaussianParams(mean, max(var, 1e-9))
                scored.append((approx.tv_gauss_bound(target, g), (i, cnt, j)))
    scored.sort(key=lambda s: s[0])
    out = []
    for _, (i, cnt, j) in scored[:cfg.screen_keep * 4]:
        out.append(tuple(sorted([i] * cnt + [j] * (n - cnt))))
    return list(dict.fromkeys(out)), True


def _local_net(family: ExpFamilySpec, b: ParamVector, radius: float, reach: int = 2) -> list:
    """Points of a radius-spaced lattice around b, projected into the base region."""
    k = family.k
    offsets = np.array(np.meshgrid(*[np.arange(-reach, reach + 1)] * k, indexing="ij"))
    offsets = offsets.reshape(k, -1).T
    pts = []
    seen = set()
    for off in offsets:
        p = family.base_region.project(b.a + radius * off)
        key = tuple(np.round(p, 12))
        if key not in seen:
            seen.add(key)
            pts.append(ParamVector(p))
    return pts


def learn_siierv(sampler: CountingSampler, family: ExpFamilySpec, n: int, cfg: LearnConfig,
                 constants: Constants | None = None) -> LearnOutcome:
    """Weakly proper learner for order-n sums of family members.

    The returned spec has every term in the base region and order at most
    ceil(n sqrt(B) / gamma).
    """
    eps, d3 = cfg.eps, cfg.delta / 3.0
    rng_sparse, rng_gauss = cfg.streams(2)
    start = sampler.count
    report: dict = {}
    m_max = int(math.ceil(n * math.sqrt(family.B) / family.gamma))

    # sparse branch
    sparse_spec = None
    sparse_table = None
    cover = covers.cover_siierv(family, n, eps, constants)
    report["regime"] = cover.regime
    report["n_crit"] = cover.n_crit
    if cover.sparse is not None:
        screen_m = int(math.ceil(resolve(constants).c_h * math.log(3.0 / cfg.delta) / eps**2))
        emp = _empirical(sampler.draw(screen_m))
        ids, heuristic = _sparse_candidates(cover, family, emp, cfg)
        specs = [cover.candidate_spec(cid) for cid in ids]
        tables = [_spec_table(family, s) for s in specs]
        scores = [pmf_core.tv_distance(emp, t)[0] for t in tables]
        keep = list(np.argsort(scores, kind="stable")[:cfg.screen_keep])
        tour = tournament(sampler, [tables[i] for i in keep], eps, d3, constants,
                          cfg.reuse_samples)
        win = keep[tour.winner]
        sparse_spec, sparse_table = specs[win], tables[win]
        report["sparse"] = {"candidates": len(ids), "heuristic": heuristic,
                            "tournament": tour.to_json()}

    # dense branch: X-samples only inside estimate_mean_var
    mu, var = estimate_mean_var(sampler, eps, d3)
    report["dense_estimate"] = {"mu": mu, "sigma2": var}
    dense_spec = None
    dense_table = None
    if var > 0:
        try:
            b0, m0 = covers.moment_match(family, mu, var)
        except BracketFailure as exc:
            b0 = None
            report["dense"] = f"moment matching failed: {exc}"
        if b0 is not None:
            radius = (eps / m_max) * math.sqrt(2.0 / family.Lambda)
            pts = _local_net(family, b0, radius)
            cands = [(b, m) for b in pts for m in (m0 - 1, m0, m0 + 1) if 1 <= m <= m_max]
            specs = [SIIRVSpec(tuple([b] * m), max(m, n)) for b, m in cands]
            tables = [_spec_table(family, s) for s in specs]
            gsampler = table_sampler(_gauss_table(mu, var), rng_gauss)
            tour = tournament(gsampler, tables, eps, d3, constants, cfg.reuse_samples)
            dense_spec, dense_table = specs[tour.winner], tables[tour.winner]
            report["dense"] = {"moment_match": {"b": list(map(float, b0.a)), "m": m0},
                               "candidates": len(cands), "gaussian_draws": gsampler.count,
                               "tournament": tour.to_json()}

    if sparse_spec is None and dense_spec is None:
        raise BudgetExceeded("neither branch produced a candidate")
    if sparse_spec is None:
        out = LearnOutcome(dense_table, dense_spec, "dense", 0, report)
    elif dense_spec is None:
        out = LearnOutcome(sparse_table, sparse_spec, "sparse", 0, report)
    else:
        choice, rec = select_hypothesis(sampler, sparse_table, dense_table, eps, d3, constants)
        report["final"] = rec.to_json()
        out = (LearnOutcome(sparse_table, sparse_spec, "sparse", 0, report) if choice == 1
               else LearnOutcome(dense_table, dense_spec, "dense", 0, report))
    out.x_samples = sampler.count - start
    return out


def is_proper(family: ExpFamilySpec, spec: SIIRVSpec, n: int) -> bool:
    """All terms in the rho-cone and order at most ceil(n sqrt(B)/gamma)."""
    limit = int(math.ceil(n * math.sqrt(family.B) / family.gamma))
    return spec.order <= limit and all(family.in_rho_cone(t) for t in spec.terms)
