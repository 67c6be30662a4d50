"""Batch runner: ``siirv-lab --scenario s.json --out results/``.

A scenario file holds one JSON object or a list of them.  Each object has a
``kind`` (cover, learn, verify or bench), a ``seed`` and kind-specific
fields; see README.md for the schema.  Every run writes ``<name>.csv`` and
``<name>.json`` into the output directory.

Exit codes: 0 ok, 2 configuration error, 3 assumption check failed,
4 budget or grid overflow.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import approx, covers, families, geometry, learning, pmf_core
from .constants import get_constants
from .errors import (AssumptionViolation, BudgetExceeded, ConfigError, GridOverflow,
                     WindowOverflow)
from .expfam import ExpFamilySpec, ParamVector, pmf_member, verify_assumptions

KINDS = ("cover", "learn", "verify", "bench")
EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_OVERFLOW = 0, 2, 3, 4


def config_hash(scenario: dict) -> str:
    canon = json.dumps(scenario, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def build_family(desc: dict) -> ExpFamilySpec:
    if not isinstance(desc, dict):
        raise ConfigError("family must be an object")
    if "catalog" in desc:
        name = desc["catalog"]
        if name not in families.CATALOG:
            raise ConfigError(f"unknown catalog family {name!r}")
        try:
            return families.CATALOG[name](**desc.get("args", {}))
        except TypeError as exc:
            raise ConfigError(f"bad arguments for {name}: {exc}") from exc
    if "spec" in desc:
        return ExpFamilySpec.from_json(desc["spec"])
    raise ConfigError("family needs either 'catalog' or 'spec'")


def _require(sc: dict, key: str, kind=None):
    if key not in sc:
        raise ConfigError(f"scenario is missing {key!r}")
    value = sc[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{key!r} has the wrong type")
    return value


def _eps(sc: dict) -> float:
    eps = float(_require(sc, "eps"))
    if not 0 < eps < 1:
        raise ConfigError(f"eps must lie in (0, 1), got {eps}")
    return eps


def _random_terms(family: ExpFamilySpec, rng: np.random.Generator, n: int) -> list:
    return [ParamVector(a) for a in family.base_region.sample(rng, n)]


def _truth(family: ExpFamilySpec, terms: list) -> pmf_core.PMFTable:
    return pmf_core.sum_pmf(pmf_core.SIIRVSpec(tuple(terms), len(terms)), family, 1e-10)


# ------------------------------------------------------------------ kinds


def run_cover(sc: dict, rng: np.random.Generator):
    family = build_family(_require(sc, "family"))
    n = int(_require(sc, "n"))
    eps = _eps(sc)
    instances = int(sc.get("instances", 10))
    cover = covers.cover_siierv(family, n, eps)
    rows = []
    for i in range(instances):
        terms = _random_terms(family, rng, n)
        res = covers.nearest_in_cover(_truth(family, terms), cover, family, hint=terms)
        rows.append({"instance": i, "n": n, "eps": eps, "regime": cover.regime,
                     "sparse_points": 0 if cover.sparse is None else len(cover.sparse),
                     "dense_candidates": 0 if cover.dense is None else len(cover.dense),
                     "tv": f"{res.tv:.12g}", "slack": f"{res.slack:.3g}",
                     "method": res.method, "within_eps": res.tv <= eps + res.slack})
    summary = {"n_crit": cover.n_crit, "regime": cover.regime,
               "max_tv": max(float(r["tv"]) for r in rows) if rows else None}
    return rows, summary, EXIT_OK


def run_learn(sc: dict, rng: np.random.Generator):
    learner = sc.get("learner", "siierv")
    n = int(_require(sc, "n"))
    eps = _eps(sc)
    delta = float(sc.get("delta", 0.1))
    runs = int(sc.get("runs", 5))
    rows = []
    if learner == "siierv":
        family = build_family(_require(sc, "family"))
    elif learner == "siiurv":
        lo, hi = sc.get("p_range", [0.3, 0.9])
        family = families.geometric_family(families.success_to_param(lo),
                                           families.success_to_param(hi))
    else:
        raise ConfigError(f"unknown learner {learner!r}")
    for r in range(runs):
        seed = int(rng.integers(0, 2**63))
        terms = _random_terms(family, rng, n)
        truth = _truth(family, terms)
        cfg = learning.LearnConfig(eps, delta, seed=seed)
        sampler = learning.table_sampler(truth, np.random.default_rng(seed + 1))
        if learner == "siierv":
            out = learning.learn_siierv(sampler, family, n, cfg)
        else:
            out = learning.learn_siiurv(sampler, n, family.L, family.B, family.gamma, cfg)
        tv, slack = pmf_core.tv_distance(out.table, truth)
        rows.append({"run": r, "seed": seed, "n": n, "eps": eps, "delta": delta,
                     "branch": out.branch, "tv": f"{tv:.12g}", "slack": f"{slack:.3g}",
                     "x_samples": out.x_samples, "within_eps": tv <= eps})
    summary = {"learner": learner,
               "fraction_within_eps": sum(r["within_eps"] for r in rows) / max(len(rows), 1)}
    return rows, summary, EXIT_OK


def _validator_rows(rng: np.random.Generator, count: int) -> list:
    rows = []

    def add(name, v):
        rows.append({"check": name, "passed": v.ok, "bound": f"{v.bound:.6g}",
                     "oracle": f"{v.oracle:.6g}", "slack": f"{v.slack:.3g}"})

    for _ in range(count):
        s1, s2 = rng.uniform(0.5, 20, 2)
        add("tv_gauss_bound", approx.validate_gauss(
            approx.GaussianParams(rng.uniform(-5, 5), s1**2),
            approx.GaussianParams(rng.uniform(-5, 5), s2**2)))
        l1 = rng.uniform(0.1, 20)
        add("tv_poisson_bound", approx.validate_poisson(l1, l1 + rng.uniform(0, 0.5)))
        tabs = [pmf_core.geometric(p) for p in rng.uniform(0.3, 0.95, rng.integers(2, 30))]
        add("shift_distance_bound", approx.validate_shift(tabs))
        add("berry_esseen_bound", approx.validate_berry_esseen(tabs))
        probs = rng.uniform(0.5, 0.99, rng.integers(1, 8))
        lam = float(np.sum((1 - probs) / probs))
        value, slack = pmf_core.tv_distance(
            pmf_core.convolve_all([pmf_core.geometric(p) for p in probs]), pmf_core.poisson(lam))
        add("poisson_approx_bound",
            approx.Validation(covers.poisson_approx_bound(probs), value, slack))
    return rows


def run_verify(sc: dict, rng: np.random.Generator):
    family = build_family(_require(sc, "family"))
    count = int(sc.get("samples", 20))
    lo, hi = sc.get("window", [-200, 2000])
    samples = list(family.base_region.sample(rng, count))
    # a few rho-cone points beyond the base region, along the generators
    for z in family.cone.Z.T:
        for scale in (1.0, 2.0, 4.0):
            p = scale * max(family.rho, family.base_region.max_norm()) * z
            samples.append(p)
    report = verify_assumptions(family, samples, (lo, hi))
    rows = [{"check": c.name, "passed": c.passed, "bound": "", "oracle":
             "" if c.worst is None else f"{c.worst:.6g}", "slack": ""}
            for c in report.conditions.values()]
    rows += _validator_rows(rng, int(sc.get("validator_instances", 5)))
    ok = all(r["passed"] for r in rows)
    summary = {"assumptions": report.to_json(), "all_passed": ok}
    return rows, summary, (EXIT_OK if ok else EXIT_ASSUMPTION)


def run_bench(sc: dict, rng: np.random.Generator):
    family = build_family(sc.get("family", {"catalog": "geometric"}))
    eps = float(sc.get("eps", 0.2))
    n = int(sc.get("n", 20))
    repeats = int(sc.get("repeats", 3))
    a = family.base_region.sample(rng, 1)[0]
    terms = _random_terms(family, rng, n)
    truth = _truth(family, terms)
    ops = {
        "pmf_member": lambda: pmf_member(family, a * (1 + 1e-12 * rng.random()), 1e-12),
        "sum_pmf": lambda: _truth(family, terms),
        "theta_for_cone": lambda: geometry.theta_for_cone(family.cone),
        "sparsify_family": lambda: covers.sparsify_family(family, eps),
        "cover_siierv": lambda: covers.cover_siierv(family, n, eps),
        "moment_match": lambda: covers.moment_match(
            family, pmf_core.moments(truth).mean, pmf_core.moments(truth).variance),
        "tournament": lambda: learning.tournament(
            learning.table_sampler(truth, np.random.default_rng(0)),
            [truth, pmf_core.shift(truth, 1), pmf_core.shift(truth, 3)], eps, 0.1),
    }
    rows = []
    for name, fn in ops.items():
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        rows.append({"operation": name, "repeats": repeats,
                     "best_seconds": f"{min(times):.6f}",
                     "median_seconds": f"{float(np.median(times)):.6f}"})
    return rows, {"note": "wall times are not reproducible"}, EXIT_OK


RUNNERS = {"cover": run_cover, "learn": run_learn, "verify": run_verify, "bench": run_bench}


# ----------------------------------------------------------------- driver


def _write(out_dir: Path, name: str, rows: list, meta: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    (out_dir / f"{name}.csv").write_text(buf.getvalue(), encoding="utf-8")
    (out_dir / f"{name}.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def run(scenario: dict, out_dir: Path, seed_override: int | None = None) -> int:
    """Run one scenario and write its artifacts; returns the exit code."""
    try:
        if not isinstance(scenario, dict):
            raise ConfigError("scenario must be a JSON object")
        kind = _require(scenario, "kind")
        if kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        seed = int(seed_override if seed_override is not None else _require(scenario, "seed"))
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        name = str(scenario.get("name", kind))
        constants = get_constants()
        rng = np.random.default_rng(seed)
        rows, summary, code = RUNNERS[kind](scenario, rng)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolation as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (GridOverflow, BudgetExceeded, WindowOverflow) as exc:
        print(f"overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except (KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    meta = {"kind": kind, "seed": seed, "config_hash": config_hash(scenario),
            "constants": constants.to_json(), "scenario": scenario, "summary": summary,
            "exit_code": code}
    _write(out_dir, name, rows, meta)
    return code


def _run_args(args):
    scenario, out, seed = args
    return run(scenario, Path(out), seed)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="siirv-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--scenario", required=True, help="JSON scenario file")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--workers", type=int, default=1, help="parallel scenarios")
    parser.add_argument("--seed-override", type=int, default=None,
                        help="replace every scenario's seed")
    args = parser.parse_args(argv)
    try:
        with open(args.scenario, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        get_constants()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    scenarios = data if isinstance(data, list) else [data]
    jobs = [(sc, args.out, args.seed_override) for sc in scenarios]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            codes = list(pool.map(_run_args, jobs))
    else:
        codes = [_run_args(j) for j in jobs]
    return max(codes) if codes else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
