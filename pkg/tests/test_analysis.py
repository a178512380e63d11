"""Analysis layer: divergences, extinction/survival, hitting, stability."""

import math

import numpy as np
import pytest

from shockrep import analysis as an
from shockrep import fields as fl
from shockrep import games as gm
from shockrep.engine import IntegratorConfig, Trajectory, simulate_ensemble
from shockrep.errors import DomainError
from shockrep.games import MixedStrategy


def make_traj(times, states):
    states = np.asarray(states, dtype=np.float64)
    return Trajectory(times=np.asarray(times, dtype=np.float64), states=states,
                      seed=0, path=0, kind="test", dt=1.0,
                      floor_count=np.zeros(states.shape[1], dtype=np.int64),
                      floor_first=np.full(states.shape[1], -1, dtype=np.int64),
                      max_drift=0.0,
                      labels=[f"p0_{i}" for i in range(states.shape[1])])


class TestDivergences:
    def test_identity_is_zero(self):
        x = np.array([0.2, 0.3, 0.5])
        assert an.kl_divergence(x, x) == 0.0

    def test_vertex_against_uniform(self):
        assert an.kl_divergence([1.0, 0.0], [0.5, 0.5]) == \
            pytest.approx(math.log(2.0), abs=1e-15)

    def test_infinite_outside_support(self):
        assert an.kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            an.kl_divergence([-0.1, 1.1], [0.5, 0.5])

    def test_gap_vanishes_for_equal_strategies(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = rng.dirichlet((1, 1, 1))
            x = rng.dirichlet((1, 1, 1))
            assert an.cross_entropy_gap(p, p, x) == 0.0

    def test_nonnegative_and_zero_iff_equal(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            p = rng.dirichlet((1, 1, 1, 1))
            x = rng.dirichlet((1, 1, 1, 1))
            d = an.kl_divergence(p, x)
            assert d >= 0.0
            if d == 0.0:
                assert np.allclose(p, x)


class TestWilson:
    def test_interval_brackets_estimate(self):
        lo, hi = an.wilson_interval(30, 100)
        assert lo < 0.3 < hi
        assert 0.0 <= lo and hi <= 1.0

    def test_edge_counts(self):
        lo, hi = an.wilson_interval(0, 50)
        assert lo == 0.0 and hi > 0.0
        lo, hi = an.wilson_interval(50, 50)
        assert hi == 1.0 and lo < 1.0


class TestExtinction:
    def test_interior_trajectory_survives(self):
        traj = make_traj([0.0, 1.0, 2.0], [[0.4, 0.6]] * 3)
        rep = an.detect_extinction(traj, 0, threshold=1e-4)
        assert not rep.extinct
        assert math.isnan(rep.first_crossing_time)

    def test_pinned_at_other_vertex(self):
        traj = make_traj([0.0, 1.0], [[0.0, 1.0], [0.0, 1.0]])
        rep = an.detect_extinction(traj, 0, threshold=1e-4)
        assert rep.extinct
        assert rep.first_crossing_time == 0.0

    def test_mixed_strategy_uses_support_minimum(self):
        states = [[0.5, 0.4, 0.1], [0.5, 0.49, 0.01], [0.6, 0.39999, 1e-5]]
        traj = make_traj([0.0, 1.0, 2.0], states)
        mixed = MixedStrategy(0, np.array([0.5, 0.0, 0.5]))
        rep = an.detect_extinction(traj, mixed, threshold=1e-4)
        assert rep.extinct
        assert rep.first_crossing_time == 2.0
        pure_part = an.detect_extinction(traj, 0, threshold=1e-4)
        assert not pure_part.extinct

    def test_simulated_dominated_strategy_dies(self):
        game = gm.constant_game([[0.0, 1.0]])
        noise = gm.StrategyNoise([0.5, 0.5])
        field = fl.stochastic_replicator_field(game, noise)
        cfg = IntegratorConfig(dt=1e-3, horizon=40.0, record_stride=1000)
        from shockrep.engine import integrate
        traj = integrate(field, [0.5, 0.5], cfg, seed=33)
        rep = an.detect_extinction(traj, 0, threshold=1e-4)
        assert rep.extinct


class TestSurvival:
    def _ensemble(self, terminal, x0=None):
        terminal = np.asarray(terminal, dtype=np.float64)
        from shockrep.engine import EnsembleResult
        return EnsembleResult(
            times=np.array([0.0]), terminal=terminal, snapshots=None,
            seed=0, path0=0, n_paths=terminal.shape[0], kind="test",
            dt=1.0, horizon=1.0,
            x0=np.asarray(x0 if x0 is not None else terminal[0]),
            floor_count=None, floor_first=None, max_drift=0.0,
            labels=["p0_0", "p0_1"])

    def test_counts_and_interval(self):
        ens = self._ensemble([[0.9, 0.1]] * 7 + [[1e-6, 1.0 - 1e-6]] * 3)
        rep = an.survival_probability(ens, 0, threshold=1e-3)
        assert rep["estimate"] == pytest.approx(0.7)
        assert rep["ci95"][0] < 0.7 < rep["ci95"][1]

    def test_complement_identity(self):
        rng = np.random.default_rng(2)
        xa = rng.uniform(0, 1, 50)
        ens = self._ensemble(np.stack([xa, 1 - xa], axis=1))
        for thr in (1e-3, 0.2, 0.7):
            surv = an.survival_probability(ens, 0, threshold=thr)["estimate"]
            ext = an.extinction_fraction(ens, 0, threshold=thr)
            assert surv + ext == pytest.approx(1.0, abs=0)


class TestMartingaleCheck:
    def test_frozen_dynamics_z_is_zero(self):
        game = gm.constant_game([[1.0, 1.0]])
        field = fl.stochastic_replicator_field(game,
                                               gm.StrategyNoise([0.0, 0.0]))
        cfg = IntegratorConfig(dt=1e-3, horizon=1.0, record_stride=100)
        ens = simulate_ensemble(field, [0.3, 0.7], cfg, seed=1, n_paths=10)
        rep = an.martingale_check(ens, 0, t=1.0)
        assert rep["z"] == 0.0

    def test_time_zero_z_is_zero(self):
        game = gm.constant_game([[1.0, 1.0]])
        field = fl.stochastic_replicator_field(game,
                                               gm.StrategyNoise([1.0, 1.0]))
        cfg = IntegratorConfig(dt=1e-3, horizon=1.0, record_stride=100)
        ens = simulate_ensemble(field, [0.3, 0.7], cfg, seed=2, n_paths=10)
        rep = an.martingale_check(ens, 0, t=0.0)
        assert rep["z"] == 0.0


class TestHitting:
    def test_closed_form_values(self):
        assert an.hitting_probability_closed_form(1.0, 1.0) == \
            pytest.approx(math.exp(-2.0), abs=1e-15)
        assert an.hitting_probability_closed_form(1.0, -0.5) == 1.0
        assert an.hitting_probability_closed_form(2.0, 0.25) == \
            pytest.approx(math.exp(-1.0), abs=1e-15)
        assert an.hitting_probability_closed_form(0.0, 3.0) == 1.0
        # symmetric in the barrier's sign
        assert an.hitting_probability_closed_form(-1.0, -1.0) == \
            pytest.approx(math.exp(-2.0), abs=1e-15)

    def test_mc_matches_closed_form(self):
        rep = an.hitting_probability_mc(2.0, 0.25, horizon=400.0,
                                        n_paths=4000, dt=1e-3, seed=5)
        assert abs(rep["estimate"] - math.exp(-1.0)) < 0.025
        assert rep["ci95"][0] < rep["estimate"] < rep["ci95"][1]

    def test_finite_horizon_is_lower_bound(self):
        # truncating the horizon can only lose crossings
        short = an.hitting_probability_mc(1.0, 0.0, horizon=5.0,
                                          n_paths=2000, dt=1e-3, seed=6)
        longer = an.hitting_probability_mc(1.0, 0.0, horizon=50.0,
                                           n_paths=2000, dt=1e-3, seed=6)
        assert short["estimate"] <= longer["estimate"]
        assert longer["estimate"] <= 1.0

    def test_bias_is_nonnegative(self):
        rep = an.hitting_probability_mc(1.0, 1.0, horizon=50.0, n_paths=2000,
                                        dt=1e-2, seed=7)
        assert rep["discretization_bias"] >= 0.0
        # coarser grids miss more crossings
        fine = an.hitting_probability_mc(1.0, 1.0, horizon=50.0, n_paths=2000,
                                         dt=1e-3, seed=7)
        assert fine["discretization_bias"] <= rep["discretization_bias"]

    def test_zero_offset_trivial(self):
        rep = an.hitting_probability_mc(0.0, 1.0, horizon=1.0, n_paths=100,
                                        dt=1e-3, seed=8)
        assert rep["estimate"] == 1.0

    def test_finite_horizon_below_closed_form_plus_ci(self):
        # truncation only removes crossing mass, never adds it
        for a, b, seed in [(1.0, 1.0, 9), (0.5, 0.5, 10), (2.0, 0.25, 11)]:
            rep = an.hitting_probability_mc(a, b, horizon=200.0, n_paths=3000,
                                            dt=1e-3, seed=seed)
            half = rep["ci95"][1] - rep["estimate"]
            assert rep["estimate"] <= rep["closed_form"] + half


class TestQuadraticFit:
    def test_recovers_planted_curvature(self):
        t = np.linspace(0.0, 10.0, 401)
        c = -0.37
        xa = np.exp(c * t * t)
        states = np.stack([xa / (1 + xa), 1 / (1 + xa)], axis=1)
        traj = make_traj(t, states)
        slope = an.quadratic_decay_fit(traj, 0, 1)
        assert slope == pytest.approx(c, abs=1e-12)

    def test_symmetric_rest_gives_zero(self):
        t = np.linspace(0.0, 5.0, 100)
        traj = make_traj(t, np.tile([0.5, 0.5], (100, 1)))
        assert an.quadratic_decay_fit(traj, 0, 1) == 0.0

    def test_deterministic_second_order_slope(self):
        # margin-1 dominance without noise: slope approaches -1/2
        game = gm.constant_game([[0.0, 1.0]])
        field = fl.second_order_field(game, gm.StrategyNoise([0.0, 0.0]))
        cfg = IntegratorConfig(dt=1e-3, horizon=15.0, record_stride=15,
                               floor=1e-250)
        from shockrep.engine import integrate
        traj = integrate(field, [0.5, 0.5], cfg)
        slope = an.quadratic_decay_fit(traj, 0, 1)
        assert slope == pytest.approx(-0.5, abs=0.05)

    def test_degenerate_window_rejected(self):
        traj = make_traj([0.0], [[0.5, 0.5]])
        with pytest.raises(DomainError):
            an.quadratic_decay_fit(traj, 0, 1)


class TestStability:
    def test_deterministic_strict_equilibrium(self):
        game = gm.constant_game([[1.0, 0.0]])
        field = fl.stochastic_replicator_field(game,
                                               gm.StrategyNoise([0.0, 0.0]))
        cfg = IntegratorConfig(dt=1e-3, horizon=30.0, record_stride=1000)
        target = np.array([1.0, 0.0])
        ens = simulate_ensemble(field, [0.9, 0.1], cfg, seed=3, n_paths=4,
                                ref_point=target)
        est = an.stability_probability(ens, target, radius=0.2,
                                       delta_conv=1e-3)
        assert est.staying_fraction == 1.0
        assert est.converging_fraction == 1.0

    def test_converging_never_exceeds_staying(self):
        game = gm.constant_game([[1.0, 1.0]])
        field = fl.stochastic_replicator_field(game,
                                               gm.StrategyNoise([1.5, 1.5]))
        cfg = IntegratorConfig(dt=1e-3, horizon=20.0, record_stride=1000)
        target = np.array([1.0, 0.0])
        ens = simulate_ensemble(field, [0.8, 0.2], cfg, seed=4, n_paths=200,
                                ref_point=target)
        est = an.stability_probability(ens, target, radius=0.4,
                                       delta_conv=1e-2)
        assert est.converging_fraction <= est.staying_fraction

    def test_snapshot_fallback(self):
        game = gm.constant_game([[1.0, 0.0]])
        field = fl.stochastic_replicator_field(game,
                                               gm.StrategyNoise([0.3, 0.3]))
        cfg = IntegratorConfig(dt=1e-3, horizon=5.0, record_stride=100)
        ens = simulate_ensemble(field, [0.9, 0.1], cfg, seed=5, n_paths=20)
        est = an.stability_probability(ens, np.array([1.0, 0.0]), radius=0.5,
                                       delta_conv=0.05)
        assert 0.0 <= est.converging_fraction <= est.staying_fraction <= 1.0
