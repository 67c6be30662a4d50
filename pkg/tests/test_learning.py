import math

import numpy as np
import pytest

from siirv_lab import expfam, learning, pmf_core
from siirv_lab.errors import BudgetExceeded, ConfigError
from siirv_lab.learning import CountingSampler, LearnConfig


def _const_sampler(c, rng):
    return CountingSampler(lambda r, k: np.full(k, c), rng)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            LearnConfig(0.0, 0.1)
        with pytest.raises(ConfigError):
            LearnConfig(0.1, 1.0)
        with pytest.raises(ConfigError):
            LearnConfig(0.1, 0.1, beta=0.1)
        LearnConfig(0.8, 0.1, beta=0.04)

    def test_streams_deterministic(self):
        a = [g.random() for g in LearnConfig(0.1, 0.1, seed=7).streams(3)]
        b = [g.random() for g in LearnConfig(0.1, 0.1, seed=7).streams(3)]
        assert a == b and len(set(a)) == 3


class TestSampler:
    def test_budget(self, rng):
        s = CountingSampler(lambda r, k: np.zeros(k), rng, cap=10)
        s.draw(6)
        with pytest.raises(BudgetExceeded):
            s.draw(5)
        assert s.count == 6

    def test_table_sampler_frequencies(self, rng):
        t = pmf_core.make_table(-1, [0.2, 0.5, 0.3])
        x = learning.table_sampler(t, rng).draw(200_000)
        freq = np.bincount(x + 1) / x.size
        assert np.allclose(freq, [0.2, 0.5, 0.3], atol=0.005)


class TestEstimate:
    def test_constant(self, rng):
        assert learning.estimate_mean_var(_const_sampler(4, rng), 0.1, 0.1) == (4.0, 0.0)

    def test_deterministic(self):
        t = pmf_core.convolve_power(pmf_core.geometric(0.5), 20)
        out = [learning.estimate_mean_var(learning.table_sampler(t, np.random.default_rng(3)),
                                          0.1, 0.1) for _ in range(2)]
        assert out[0] == out[1]

    def test_geometric_sum_accuracy(self):
        t = pmf_core.convolve_power(pmf_core.geometric(0.5), 100)
        hits = 0
        for seed in range(100):
            mu, _ = learning.estimate_mean_var(
                learning.table_sampler(t, np.random.default_rng(seed)), 0.1, 0.1)
            hits += abs(mu - 100) <= 0.1 * math.sqrt(200) * 3
        assert hits >= 90


class TestSelection:
    def test_identical_hypotheses_draw(self, rng):
        h = pmf_core.geometric(0.4)
        choice, rec = learning.select_hypothesis(learning.table_sampler(h, rng), h, h, 0.1, 0.1)
        assert choice == 1 and rec.decision == "draw"

    def test_point_masses(self, rng):
        choice, rec = learning.select_hypothesis(
            _const_sampler(0, rng), pmf_core.point_mass(0), pmf_core.point_mass(1), 0.1, 0.1)
        assert choice == 1 and rec.tau == 1.0 and rec.p1 == 1.0
        choice, _ = learning.select_hypothesis(
            _const_sampler(1, rng), pmf_core.point_mass(0), pmf_core.point_mass(1), 0.1, 0.1)
        assert choice == 2

    def test_sample_count(self, rng):
        s = _const_sampler(0, rng)
        learning.select_hypothesis(s, pmf_core.point_mass(0), pmf_core.point_mass(1), 0.1, 0.1)
        assert s.count == math.ceil(8 * math.log(10) / 0.01)

    def test_tournament_single_and_pair(self, rng):
        h = [pmf_core.point_mass(0), pmf_core.point_mass(3)]
        rep = learning.tournament(_const_sampler(3, rng), h[:1], 0.1, 0.1)
        assert rep.winner == 0 and rep.samples_used == 0
        rep = learning.tournament(_const_sampler(3, rng), h, 0.1, 0.1)
        assert rep.winner == 1 and not rep.flagged

    def test_tournament_finds_truth_among_decoys(self):
        truth = pmf_core.convolve_power(pmf_core.geometric(0.5), 5)
        decoys = [pmf_core.shift(truth, s) for s in range(3, 23)]
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            order = rng.permutation(21)
            hyps = [([truth] + decoys)[i] for i in order]
            rep = learning.tournament(learning.table_sampler(truth, rng), hyps, 0.1, 0.1)
            hits += pmf_core.tv_distance(hyps[rep.winner], truth)[0] <= 0.6
        assert hits >= 19

    def test_reuse_flag_draws_once(self, rng):
        s = _const_sampler(0, rng)
        hyps = [pmf_core.point_mass(i) for i in range(4)]
        rep = learning.tournament(s, hyps, 0.1, 0.1, reuse_samples=True)
        assert rep.samples_used == learning.selection_samples(0.1, 0.1 / 16)


class TestLearners:
    def test_siiurv_bernoulli(self):
        t = pmf_core.bernoulli(0.3)
        cfg = LearnConfig(0.2, 0.1, seed=1)
        out = learning.learn_siiurv(learning.table_sampler(t, np.random.default_rng(1)),
                                    1, 1.0, 1.0, 0.2, cfg)
        assert pmf_core.tv_distance(out.table, t)[0] <= 0.2
        assert out.report["interval_length"] <= cfg.siiurv_interval_cap

    def test_siiurv_deterministic(self):
        t = pmf_core.convolve_all([pmf_core.geometric(p) for p in (0.6, 0.7)])
        cfg = LearnConfig(0.25, 0.1)
        outs = [learning.learn_siiurv(learning.table_sampler(t, np.random.default_rng(5)),
                                      2, 1.0, 20.0, 0.3, cfg) for _ in range(2)]
        assert np.array_equal(outs[0].table.probs, outs[1].table.probs)
        assert outs[0].report == outs[1].report

    def test_siiurv_strict_overflow(self):
        from siirv_lab.errors import GridOverflow

        t = pmf_core.convolve_power(pmf_core.geometric(0.5), 150)
        cfg = LearnConfig(0.2, 0.1, strict=True)
        with pytest.raises(GridOverflow):
            learning.learn_siiurv(learning.table_sampler(t, np.random.default_rng(0)),
                                  150, 1.0, 30.0, 0.5, cfg)
        loose = learning.learn_siiurv(learning.table_sampler(t, np.random.default_rng(0)),
                                      150, 1.0, 30.0, 0.5, LearnConfig(0.2, 0.1))
        assert loose.branch == "dense" and loose.report["sparse"].startswith("skipped")

    def test_siierv_small_sparse(self, geo_narrow):
        terms = [expfam.ParamVector([0.9]), expfam.ParamVector([1.1])]
        truth = pmf_core.sum_pmf(pmf_core.SIIRVSpec(tuple(terms), 2), geo_narrow)
        cfg = LearnConfig(0.2, 0.1, seed=4)
        sampler = learning.table_sampler(truth, np.random.default_rng(4))
        out = learning.learn_siierv(sampler, geo_narrow, 2, cfg)
        assert out.branch == "sparse"
        assert learning.is_proper(geo_narrow, out.spec, 2)
        assert pmf_core.tv_distance(pmf_core.sum_pmf(out.spec, geo_narrow), truth)[0] <= 0.2
        assert out.x_samples == sampler.count

    def test_siierv_dense_sample_accounting(self, geo_narrow):
        from siirv_lab.constants import Constants

        c = Constants(c_n1=1e-12, c_n2=1e-12, c_n3=1e-12, c_n4=1e-12)
        truth = pmf_core.convolve_power(expfam.pmf_member(geo_narrow, [1.0]), 40)
        cfg = LearnConfig(0.2, 0.1, seed=2)
        sampler = learning.table_sampler(truth, np.random.default_rng(2))
        out = learning.learn_siierv(sampler, geo_narrow, 40, cfg, c)
        per_round = math.ceil(3 / 0.04)
        rounds = math.ceil(18 * math.log(2 / (0.1 / 3)))
        final = learning.selection_samples(0.2, 0.1 / 3)
        assert out.report["regime"] == "dense"
        assert out.x_samples == per_round * rounds
        assert "final" not in out.report or out.x_samples == per_round * rounds + final
        assert out.report["dense"]["gaussian_draws"] > 0
        assert learning.is_proper(geo_narrow, out.spec, 40)
        assert pmf_core.tv_distance(out.table, truth)[0] <= 0.2
