import math

import numpy as np
import pytest

from dualrrm.channel import (
    FadingState,
    PathlossConfig,
    TopologyConfig,
    channel_at,
    fading_step,
    init_fading,
    load_realization,
    pathloss_db,
    realization_from_dict,
    realization_to_dict,
    sample_topology,
    save_realization,
)
from dualrrm.errors import ConfigError, DimensionMismatch, PlacementInfeasible

from conftest import make_realizations


class TestPathloss:
    def test_continuous_at_break(self):
        cfg = PathlossConfig()
        d = cfg.break_distance_m
        near = cfg.ref_loss_db_at_1m + 10 * cfg.exponent_near * math.log10(d)
        assert abs(pathloss_db(d, cfg) - near) < 1e-9
        # approaching from above converges to the same value
        assert abs(pathloss_db(d * (1 + 1e-12), cfg) - near) < 1e-6

    def test_monotone_in_distance(self):
        cfg = PathlossConfig()
        d = np.linspace(1.0, 1000.0, 2000)
        pl = pathloss_db(d, cfg)
        assert np.all(np.diff(pl) >= 0)

    def test_gain_at_break_matches_near_slope(self):
        # zero shadowing: the sampled gain formula reduces to pure path loss
        cfg = TopologyConfig(m=1, area_side_m=300.0, shadowing_sigma_db=0.0)
        large = sample_topology(cfg, 3)
        d = np.linalg.norm(large.tx_positions[0] - large.rx_positions[0])
        expected = 10 ** (-pathloss_db(d, cfg.pathloss) / 10)
        assert large.gains_linear[0, 0] == pytest.approx(expected, rel=1e-12)


class TestTopology:
    def test_variable_density_area(self):
        assert TopologyConfig(m=50, density_mode="variable").resolved_area_side_m() == 2000.0

    def test_fixed_density_area(self):
        side = TopologyConfig(m=80, density_mode="fixed").resolved_area_side_m()
        assert side == pytest.approx(math.sqrt(80 / 20) * 2000)

    @pytest.mark.parametrize("m", [20, 45, 80, 125])
    def test_fixed_density_is_five_users_per_km2(self, m):
        side = TopologyConfig(m=m, density_mode="fixed").resolved_area_side_m()
        assert m / (side / 1000.0) ** 2 == pytest.approx(5.0)

    def test_explicit_area_flags_nonstandard(self):
        assert TopologyConfig(m=50, area_side_m=900.0).nonstandard_area
        assert not TopologyConfig(m=50).nonstandard_area
        assert not TopologyConfig(m=50, area_side_m=2000.0).nonstandard_area

    def test_separation_and_annulus_respected(self):
        cfg = TopologyConfig(m=10, area_side_m=1200.0)
        large = sample_topology(cfg, 17)
        tx, rx = large.tx_positions, large.rx_positions
        for i in range(10):
            for j in range(i + 1, 10):
                assert np.linalg.norm(tx[i] - tx[j]) >= cfg.min_tx_separation_m
            r = np.linalg.norm(rx[i] - tx[i])
            assert cfg.rx_annulus_inner_m <= r <= cfg.rx_annulus_outer_m

    def test_deterministic_given_seed(self):
        cfg = TopologyConfig(m=8, area_side_m=900.0)
        a = sample_topology(cfg, 5)
        b = sample_topology(cfg, 5)
        assert np.array_equal(a.gains_linear, b.gains_linear)
        assert np.array_equal(a.tx_positions, b.tx_positions)
        c = sample_topology(cfg, 6)
        assert not np.array_equal(a.gains_linear, c.gains_linear)

    def test_all_gains_positive(self):
        large = sample_topology(TopologyConfig(m=12, area_side_m=1500.0), 2)
        assert np.all(large.gains_linear > 0)

    def test_placement_infeasible(self):
        cfg = TopologyConfig(m=30, area_side_m=120.0)
        with pytest.raises(PlacementInfeasible):
            sample_topology(cfg, 0)

    def test_invalid_configs_rejected(self):
        with pytest.raises(ConfigError):
            TopologyConfig(m=4, rx_annulus_inner_m=60.0, rx_annulus_outer_m=50.0).validate()
        with pytest.raises(ConfigError):
            TopologyConfig(m=4, density_mode="bogus").validate()
        with pytest.raises(ConfigError):
            PathlossConfig(exponent_near=3.0, exponent_far=2.0).validate()


class TestFading:
    def test_rho_one_never_changes(self):
        state = init_fading(4, 1.0, 9)
        stepped = fading_step(fading_step(state))
        assert np.array_equal(stepped.coeffs, state.coeffs)

    def test_rho_zero_is_full_innovation(self):
        # with rho = 0 the output is the innovation alone, whatever the input
        a = init_fading(3, 0.0, 11)
        b = FadingState(coeffs=np.full((3, 3), 7 + 7j), rho=0.0, seed=11, step=0)
        assert np.array_equal(fading_step(a).coeffs, fading_step(b).coeffs)

    def test_unit_mean_power(self):
        # 10^5 i.i.d. stationary draws
        state = init_fading(317, 0.956, 123)
        mean_power = np.mean(np.abs(state.coeffs) ** 2)
        assert 0.98 <= mean_power <= 1.02

    def test_lag1_autocorrelation_rho_zero(self):
        n = 100_000
        trace = np.empty(n, dtype=complex)
        state = init_fading(1, 0.0, 77)
        for t in range(n):
            trace[t] = state.coeffs[0, 0]
            state = fading_step(state)
        corr = np.mean(trace[1:] * np.conj(trace[:-1])).real
        assert abs(corr) < 0.02

    def test_lag1_autocorrelation_default_rho(self):
        n = 100_000
        rho = 0.956
        trace = np.empty(n, dtype=complex)
        state = init_fading(1, rho, 31)
        for t in range(n):
            trace[t] = state.coeffs[0, 0]
            state = fading_step(state)
        num = np.mean(trace[1:] * np.conj(trace[:-1])).real
        den = np.mean(np.abs(trace) ** 2)
        assert num / den == pytest.approx(rho, abs=0.01)

    def test_stationarity_after_thousand_steps(self):
        # 10^5 entries pooled over independent streams, stepped 1000 times
        total = 0.0
        count = 0
        for seed in range(10):
            state = init_fading(100, 0.956, 400 + seed)
            for _ in range(1000):
                state = fading_step(state)
            total += np.sum(np.abs(state.coeffs) ** 2)
            count += state.coeffs.size
        assert count == 100_000
        assert total / count == pytest.approx(1.0, abs=0.02)

    def test_trajectory_deterministic_and_replayable(self):
        state = init_fading(3, 0.956, 5)
        once = [fading_step(state).coeffs, fading_step(fading_step(state)).coeffs]
        again = init_fading(3, 0.956, 5)
        assert np.array_equal(again.coeffs, state.coeffs)
        assert np.array_equal(fading_step(again).coeffs, once[0])

    def test_rho_validated(self):
        with pytest.raises(ConfigError):
            init_fading(2, 1.5, 0)


class TestChannelAt:
    def test_unit_everything(self):
        large = sample_topology(TopologyConfig(m=2, area_side_m=300.0), 1)
        large.gains_linear = np.ones((2, 2))
        fading = FadingState(coeffs=np.ones((2, 2), dtype=complex), rho=0.5, seed=0)
        assert np.array_equal(channel_at(large, fading), np.ones((2, 2)))

    def test_scalar_arithmetic(self):
        large = sample_topology(TopologyConfig(m=1, area_side_m=300.0), 1)
        large.gains_linear = np.array([[4.0]])
        fading = FadingState(coeffs=np.array([[0.5 + 0j]]), rho=0.5, seed=0)
        assert channel_at(large, fading)[0, 0] == 1.0 + 0j

    def test_second_moment_matches_gain(self):
        m = 317  # 100489 > 10^5 samples in one draw
        large = sample_topology(TopologyConfig(m=2, area_side_m=300.0), 1)
        large.gains_linear = np.full((m, m), 4.0)
        large.tx_positions = np.zeros((m, 2))
        large.rx_positions = np.zeros((m, 2))
        fading = init_fading(m, 0.956, 9)
        h = channel_at(large, fading)
        assert np.mean(np.abs(h) ** 2) == pytest.approx(4.0, rel=0.02)

    def test_dimension_mismatch(self):
        large = sample_topology(TopologyConfig(m=2, area_side_m=300.0), 1)
        with pytest.raises(DimensionMismatch):
            channel_at(large, init_fading(3, 0.5, 0))


class TestRealizationIO:
    def test_roundtrip(self, tmp_path):
        (real,) = make_realizations(m=4, count=1, seed=42)
        path = tmp_path / "r.json"
        save_realization(path, real, config_echo={"m": 4})
        loaded = load_realization(path)
        assert np.array_equal(loaded.large.gains_linear, real.large.gains_linear)
        assert np.array_equal(loaded.large.tx_positions, real.large.tx_positions)
        assert loaded.fading_seed == real.fading_seed
        assert loaded.rho == real.rho
        # fading trajectory replays identically from the stored seed
        assert np.array_equal(loaded.episode(3), real.episode(3))

    def test_dict_shape_validation(self):
        (real,) = make_realizations(m=3, count=1, seed=1)
        d = realization_to_dict(real)
        d["m"] = 5
        with pytest.raises(DimensionMismatch):
            realization_from_dict(d)

    def test_episode_matches_manual_stepping(self):
        (real,) = make_realizations(m=3, count=1, seed=8)
        ep = real.episode(4)
        state = init_fading(3, real.rho, real.fading_seed)
        manual = []
        for _ in range(4):
            manual.append(channel_at(real.large, state))
            state = fading_step(state)
        assert np.array_equal(ep, np.stack(manual))
