import itertools

import numpy as np
import pytest

from dualrrm.baselines import (
    FullReusePolicy,
    ItlinqConfig,
    ItlinqPolicy,
    early_stopped_baseline,
    full_reuse,
    itlinq_schedule,
)
from dualrrm.core import RrmProblemConfig, rates
from dualrrm.errors import ConfigError
from dualrrm.execution import ExecConfig, evaluate_suite
from dualrrm.policy import GnnConfig
from dualrrm.training import TrainConfig, train

from conftest import make_realizations, relabel_matrix


def random_channel(rng, m, scale=1e-5):
    return scale * (rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m)))


class TestFullReuse:
    def test_definition(self, rng):
        cfg = RrmProblemConfig(m=5)
        h = random_channel(rng, 5)
        assert np.array_equal(full_reuse(h, cfg), np.full(5, cfg.p_max))

    def test_single_user_optimum_at_box_edge(self, rng):
        # m = 1: the rate is increasing in power, so p_max is the optimum
        cfg = RrmProblemConfig(m=1)
        h = random_channel(rng, 1)
        best = max(
            rates(h, np.array([p]), cfg)[0] for p in np.linspace(0, cfg.p_max, 101)
        )
        assert rates(h, full_reuse(h, cfg), cfg)[0] == best


class TestItlinq:
    def test_single_link_always_scheduled(self, rng):
        cfg = RrmProblemConfig(m=1)
        p = itlinq_schedule(random_channel(rng, 1), cfg, ItlinqConfig())
        assert p[0] == cfg.p_max

    def test_zero_cross_gain_schedules_both(self):
        cfg = RrmProblemConfig(m=2)
        h = np.diag([1e-4, 1e-4]).astype(complex)
        h[0, 1] = h[1, 0] = 1e-300  # effectively zero interference
        p = itlinq_schedule(h, cfg, ItlinqConfig())
        assert np.array_equal(p, np.full(2, cfg.p_max))

    def test_binary_output(self, rng):
        cfg = RrmProblemConfig(m=6)
        for _ in range(10):
            p = itlinq_schedule(random_channel(rng, 6), cfg, ItlinqConfig())
            assert set(np.unique(p)).issubset({0.0, cfg.p_max})

    def test_greedy_set_satisfies_conditions_and_is_maximal(self, rng):
        # brute-force verification of the pairwise admission conditions in
        # greedy order, on random 4-link instances
        cfg = RrmProblemConfig(m=4)
        icfg = ItlinqConfig()
        margin = 10 ** (icfg.m_margin_db / 10)
        for _ in range(25):
            h = random_channel(rng, 4)
            p = itlinq_schedule(h, cfg, icfg)
            chosen = set(np.flatnonzero(p > 0))
            inr = cfg.p_max * np.abs(h) ** 2 / cfg.noise
            snr = np.diagonal(inr)
            cap = margin * snr**icfg.eta_exponent

            def admissible(i, j):
                return inr[i, j] <= cap[i] and inr[j, i] <= cap[j]

            # every scheduled pair satisfies both conditions
            for i, j in itertools.combinations(sorted(chosen), 2):
                assert admissible(i, j)
            # greedy maximality: replay the greedy order and compare
            order = sorted(range(4), key=lambda i: (-snr[i], i))
            replay = []
            for j in order:
                if all(admissible(i, j) for i in replay):
                    replay.append(j)
            assert set(replay) == chosen

    def test_by_index_ordering(self, rng):
        cfg = RrmProblemConfig(m=4)
        h = random_channel(rng, 4)
        p = itlinq_schedule(h, cfg, ItlinqConfig(ordering="by-index"))
        inr = cfg.p_max * np.abs(h) ** 2 / cfg.noise
        snr = np.diagonal(inr)
        cap = 10 ** (25 / 10) * snr**0.7
        replay = []
        for j in range(4):
            if all(inr[i, j] <= cap[i] and inr[j, i] <= cap[j] for i in replay):
                replay.append(j)
        assert set(np.flatnonzero(p > 0)) == set(replay)

    def test_huge_margin_degenerates_to_full_reuse(self, rng):
        cfg = RrmProblemConfig(m=6)
        icfg = ItlinqConfig(m_margin_db=300.0)
        for _ in range(5):
            h = random_channel(rng, 6)
            assert np.array_equal(itlinq_schedule(h, cfg, icfg), full_reuse(h, cfg))

    def test_permutation_equivariant_with_snr_order(self, rng):
        cfg = RrmProblemConfig(m=5)
        icfg = ItlinqConfig()
        h = random_channel(rng, 5)
        p = itlinq_schedule(h, cfg, icfg)
        for _ in range(10):
            perm = rng.permutation(5)
            pp = itlinq_schedule(relabel_matrix(h, perm), cfg, icfg)
            assert np.array_equal(pp, p[perm])

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ItlinqConfig(eta_exponent=0.0).validate()
        with pytest.raises(ConfigError):
            ItlinqConfig(ordering="random").validate()


@pytest.fixture(scope="module")
def trained():
    problem = RrmProblemConfig(m=3)
    dataset = make_realizations(m=3, count=3, seed=61, area=400.0)
    cfg = TrainConfig(n_iters=60, batch_size=8, episode_len=10, seed=61)
    params, _ = train(cfg, problem, GnnConfig(f1=16, f2=16), dataset)
    test_set = make_realizations(m=3, count=2, seed=62, area=400.0)
    return problem, params, test_set


class TestEarlyStoppedBaseline:
    def test_t_stop_horizon_equals_unablated(self, trained):
        problem, params, test_set = trained
        cfg = ExecConfig(T=20, T0=5, eta_mu=20.0)
        base, base_traces = evaluate_suite(params, test_set, cfg, problem)
        ablated, traces = early_stopped_baseline(params, test_set, cfg, problem, t_stop=20)
        assert base == ablated
        for a, b in zip(base_traces, traces):
            assert np.array_equal(a.powers, b.powers)

    def test_t_stop_zero_freezes_duals(self, trained):
        problem, params, test_set = trained
        cfg = ExecConfig(T=20, T0=5, eta_mu=20.0)
        _, traces = early_stopped_baseline(params, test_set, cfg, problem, t_stop=0)
        for trace in traces:
            assert np.array_equal(trace.duals, np.zeros_like(trace.duals))

    def test_policy_wrappers_ignore_duals(self, rng):
        cfg = RrmProblemConfig(m=3)
        h = random_channel(rng, 3)
        fr = FullReusePolicy()
        assert np.array_equal(
            fr.powers(h, np.zeros(3), cfg), fr.powers(h, np.ones(3), cfg)
        )
        il = ItlinqPolicy(ItlinqConfig())
        assert np.array_equal(
            il.powers(h, np.zeros(3), cfg), il.powers(h, np.ones(3), cfg)
        )
