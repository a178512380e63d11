"""Drift/diffusion maps: hand-checked values, structure, and identities."""

import numpy as np
import pytest

from shockrep import fields as fl
from shockrep import games as gm
from shockrep.errors import DomainError, KindError, ShapeError, UnsupportedError

X_HALF = np.array([0.5, 0.5])
X_SKEW = np.array([0.75, 0.25])


@pytest.fixture
def game10():
    return gm.constant_game([[1.0, 0.0]])


@pytest.fixture
def pure_noise_game():
    return gm.constant_game([[2.0, 2.0]])


@pytest.fixture
def unit_noise():
    return gm.StrategyNoise([1.0, 1.0])


def diffusion_matrix(field, x):
    """Columns: response to each unit Wiener coordinate."""
    cols = []
    for j in range(field.noise_dim):
        dw = np.zeros(field.noise_dim)
        dw[j] = 1.0
        cols.append(field.diffusion(x, dw))
    return np.stack(cols, axis=-1)


class TestReplicator:
    def test_hand_value(self, game10):
        f = fl.replicator_field(game10)
        assert np.allclose(f.drift(X_HALF), [0.25, -0.25], atol=0)

    def test_equal_payoffs_rest(self, pure_noise_game):
        f = fl.replicator_field(pure_noise_game)
        assert np.all(f.drift(np.array([0.3, 0.7])) == 0.0)

    def test_vertex_rest(self, game10):
        f = fl.replicator_field(game10)
        assert np.all(f.drift(np.array([1.0, 0.0])) == 0.0)


class TestDirectShocks:
    def test_diffusion_rows(self, game10, unit_noise):
        f = fl.stochastic_replicator_field(game10, unit_noise)
        m = diffusion_matrix(f, X_HALF)
        assert np.allclose(m, [[0.25, -0.25], [-0.25, 0.25]], atol=0)

    def test_vertex_diffusion_vanishes(self, game10, unit_noise):
        f = fl.stochastic_replicator_field(game10, unit_noise)
        assert np.all(diffusion_matrix(f, np.array([1.0, 0.0])) == 0.0)

    def test_zero_noise_equals_replicator(self, game10):
        f0 = fl.stochastic_replicator_field(game10, gm.StrategyNoise([0., 0.]))
        fr = fl.replicator_field(game10)
        for x in [X_HALF, X_SKEW, np.array([0.01, 0.99])]:
            assert np.array_equal(f0.drift(x), fr.drift(x))
            assert np.all(f0.diffusion(x, np.ones(2)) == 0.0)

    def test_pure_noise_has_zero_drift(self, pure_noise_game, unit_noise):
        f = fl.stochastic_replicator_field(pure_noise_game, unit_noise)
        rng = np.random.default_rng(0)
        xs = rng.dirichlet((1, 1), size=64)
        assert np.abs(f.drift(xs)).max() < 1e-15

    def test_quadratic_variation_identity(self, game10):
        # sum of squared diffusion coefficients reproduces
        # x_a^2 [(1 - 2 x_a) s_a^2 + sum_b s_b^2 x_b^2]
        rng = np.random.default_rng(1)
        for _ in range(30):
            n = int(rng.integers(2, 5))
            game = gm.constant_game([rng.normal(size=n)])
            sig = rng.uniform(0.1, 2.0, size=n)
            f = fl.stochastic_replicator_field(game, gm.StrategyNoise(sig))
            x = rng.dirichlet(np.ones(n))
            m = diffusion_matrix(f, x)
            qv = (m * m).sum(axis=-1)
            expect = x ** 2 * ((1 - 2 * x) * sig ** 2 + np.sum(sig ** 2 * x ** 2))
            assert np.allclose(qv, expect, atol=1e-14)

    def test_kind_mismatch(self, game10):
        with pytest.raises(KindError):
            fl.stochastic_replicator_field(
                game10, gm.MatrixEntryNoise(np.ones((2, 2))))


class TestComparisonModels:
    def test_aggregate_correction_value(self, game10):
        f = fl.aggregate_shocks_field(game10, gm.StrategyNoise([1.0, 0.0]))
        fr = fl.replicator_field(game10)
        corr = f.drift(X_SKEW) - fr.drift(X_SKEW)
        assert corr[0] == pytest.approx(-0.140625, abs=1e-15)

    def test_explearn_correction_value(self, game10):
        f = fl.exponential_learning_field(game10, gm.StrategyNoise([1.0, 0.0]))
        fr = fl.replicator_field(game10)
        corr = f.drift(X_SKEW) - fr.drift(X_SKEW)
        assert corr[0] == pytest.approx(-0.046875, abs=1e-15)

    def test_corrections_vanish_by_symmetry(self, game10, unit_noise):
        fr = fl.replicator_field(game10)
        for build in (fl.aggregate_shocks_field, fl.exponential_learning_field):
            f = build(game10, unit_noise)
            assert np.allclose(f.drift(X_HALF), fr.drift(X_HALF), atol=1e-16)

    def test_require_constant_noise(self, game10):
        varying = gm.StrategyNoise(lambda x: x, dim=2)
        for build in (fl.aggregate_shocks_field, fl.exponential_learning_field,
                      fl.stratonovich_field):
            with pytest.raises(UnsupportedError):
                build(game10, varying)

    def test_zero_noise_reduction(self, game10):
        zero = gm.StrategyNoise([0.0, 0.0])
        fr = fl.replicator_field(game10)
        for build in (fl.aggregate_shocks_field, fl.exponential_learning_field,
                      fl.stratonovich_field):
            f = build(game10, zero)
            for x in [X_HALF, X_SKEW]:
                assert np.allclose(f.drift(x), fr.drift(x), atol=1e-16)


class TestStratonovichConversion:
    def test_correction_value(self, game10):
        f = fl.stratonovich_field(game10, gm.StrategyNoise([1.0, 0.0]))
        fr = fl.replicator_field(game10)
        corr = f.drift(X_SKEW) - fr.drift(X_SKEW)
        assert corr[0] == pytest.approx(-0.046875, abs=1e-14)

    def test_matches_exponential_learning_drift(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            game = gm.constant_game([rng.normal(size=n)])
            noise = gm.StrategyNoise(rng.uniform(0.0, 2.0, size=n))
            fs = fl.stratonovich_field(game, noise)
            fe = fl.exponential_learning_field(game, noise)
            xs = rng.dirichlet(np.ones(n), size=100)
            assert np.abs(fs.drift(xs) - fe.drift(xs)).max() <= 1e-12


class TestBimatrixShocks:
    def test_entry_coefficient(self):
        game = gm.matrix_game([[0.0, 1.0], [1.0, 0.0]])
        f = fl.bimatrix_shock_field(game, gm.MatrixEntryNoise(np.ones((2, 2))))
        assert f.noise_dim == 4
        dw = np.zeros(4)
        dw[0] = 1.0  # entry (0, 0)
        g = f.diffusion(X_HALF, dw)
        assert g[0] == pytest.approx(0.125, abs=0)

    def test_zero_noise_equals_replicator(self):
        game = gm.matrix_game([[0.0, 1.0], [1.0, 0.0]])
        f = fl.bimatrix_shock_field(game, gm.MatrixEntryNoise(np.zeros((2, 2))))
        fr = fl.replicator_field(game)
        assert np.array_equal(f.drift(X_SKEW), fr.drift(X_SKEW))
        assert np.all(f.diffusion(X_SKEW, np.ones(4)) == 0.0)

    def test_vertex_vanishes(self):
        game = gm.matrix_game([[0.0, 1.0], [1.0, 0.0]])
        f = fl.bimatrix_shock_field(game, gm.MatrixEntryNoise(np.ones((2, 2))))
        v = np.array([1.0, 0.0])
        assert np.all(f.drift(v) == 0.0)
        assert np.abs(f.diffusion(v, np.ones(4))).max() == 0.0

    def test_requires_matrix_game(self, game10):
        with pytest.raises(KindError):
            fl.bimatrix_shock_field(game10, gm.MatrixEntryNoise(np.ones((2, 2))))


class TestMutationShocks:
    def test_pair_coefficients(self, game10):
        noise = gm.MutationNoise(np.array([[0.0, 1.0], [1.0, 0.0]]))
        f = fl.random_mutation_field(game10, noise)
        assert f.noise_dim == 1
        g = f.diffusion(X_HALF, np.array([1.0]))
        assert np.allclose(g, [0.25, -0.25], atol=0)

    def test_three_strategy_pair_layout(self):
        game = gm.constant_game([[0.0, 0.0, 0.0]])
        eta = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 3.0, 0.0]])
        f = fl.random_mutation_field(game, gm.MutationNoise(eta))
        assert f.noise_dim == 3  # pairs (0,1), (0,2), (1,2)
        x = np.array([0.2, 0.3, 0.5])
        g = f.diffusion(x, np.array([1.0, 0.0, 0.0]))
        assert g[0] == pytest.approx(x[0] * x[1] * 1.0, abs=0)
        assert g[1] == pytest.approx(-x[1] * x[0] * 1.0, abs=0)
        assert g[2] == 0.0

    def test_tangency(self):
        rng = np.random.default_rng(3)
        game = gm.constant_game([[0.5, -0.5, 0.1, 0.2]])
        eta = rng.uniform(0.1, 2.0, (4, 4))
        eta = np.triu(eta, 1) + np.triu(eta, 1).T
        f = fl.random_mutation_field(game, gm.MutationNoise(eta))
        xs = rng.dirichlet(np.ones(4), size=50)
        dws = rng.normal(size=(50, f.noise_dim))
        assert np.abs(f.diffusion(xs, dws).sum(axis=-1)).max() < 1e-15


class TestSecondOrder:
    def test_rest_velocity_reduces_to_replicator(self, game10, unit_noise):
        f = fl.second_order_field(game10, unit_noise)
        state = np.concatenate([X_HALF, np.zeros(2)])
        d = f.drift(state)
        assert np.allclose(d[:2], 0.0, atol=0)
        assert np.allclose(d[2:], [0.25, -0.25], atol=0)

    def test_velocity_rows_sum_to_zero(self, game10, unit_noise):
        f = fl.second_order_field(game10, unit_noise)
        rng = np.random.default_rng(4)
        for _ in range(40):
            x = rng.dirichlet((1, 1))
            v = rng.normal(size=2)
            v -= v.mean()
            d = f.drift(np.concatenate([x, v]))
            assert abs(d[2:].sum()) < 1e-12

    def test_noise_enters_velocity_only(self, game10, unit_noise):
        f = fl.second_order_field(game10, unit_noise)
        state = np.concatenate([X_SKEW, np.array([0.1, -0.1])])
        g = f.diffusion(state, np.array([1.0, -1.0]))
        assert np.all(g[:2] == 0.0)
        assert abs(g[2:].sum()) < 1e-15

    def test_boundary_rejected(self, game10, unit_noise):
        f = fl.second_order_field(game10, unit_noise)
        with pytest.raises(DomainError):
            f.drift(np.array([1.0, 0.0, 0.0, 0.0]))


class TestLogShares:
    def test_drift_values(self, game10, unit_noise):
        zero = gm.StrategyNoise([0.0, 0.0])
        f = fl.log_share_field(game10, zero)
        y = np.log(X_HALF)
        assert np.allclose(f.drift(y), [0.5, -0.5], atol=1e-15)
        fpn = fl.log_share_field(gm.constant_game([[2.0, 2.0]]), unit_noise)
        assert np.allclose(fpn.drift(y), [-0.25, -0.25], atol=1e-15)

    def test_diffusion_rows(self, game10, unit_noise):
        f = fl.log_share_field(game10, unit_noise)
        y = np.log(X_HALF)
        m = diffusion_matrix(f, y)
        assert np.allclose(m, [[0.5, -0.5], [-0.5, 0.5]], atol=0)

    def test_share_recovery(self, game10, unit_noise):
        f = fl.log_share_field(game10, unit_noise)
        rng = np.random.default_rng(5)
        x = rng.dirichlet((1, 1), size=16)
        assert np.allclose(f.to_shares(np.log(x)), x, atol=1e-15)


class TestClosedForms:
    def test_zero_path_is_identity_for_explearn(self):
        t = np.linspace(0.0, 3.0, 7)
        w = np.zeros((7, 2))
        x = fl.pure_noise_closed_form("explearn", X_HALF, [1.0, 1.0], t, w)
        assert np.allclose(x, X_HALF, atol=0)

    def test_zero_path_aggregate_hand_value(self):
        t = np.array([0.0, 2.0])
        w = np.zeros((2, 2))
        x = fl.pure_noise_closed_form("aggregate", X_HALF, [1.0, 0.0], t, w)
        expect = np.exp(-1.0) / (1.0 + np.exp(-1.0))
        assert x[1, 0] == pytest.approx(expect, abs=1e-15)

    def test_zero_noise_frozen(self):
        t = np.linspace(0.0, 5.0, 11)
        w = np.random.default_rng(6).normal(size=(11, 2))
        for model in ("aggregate", "explearn"):
            x = fl.pure_noise_closed_form(model, X_SKEW, [0.0, 0.0], t, w)
            assert np.allclose(x, X_SKEW, atol=1e-15)

    def test_shape_and_kind_errors(self):
        with pytest.raises(ShapeError):
            fl.pure_noise_closed_form("explearn", X_HALF, [1.0, 1.0],
                                      np.zeros(3), np.zeros((2, 2)))
        with pytest.raises(KindError):
            fl.pure_noise_closed_form("srd", X_HALF, [1.0, 1.0],
                                      np.zeros(1), np.zeros((1, 2)))


class TestStructuralInvariants:
    def test_tangency_all_fields(self):
        rng = np.random.default_rng(7)
        n = 3
        cgame = gm.constant_game([rng.normal(size=n)])
        mgame = gm.matrix_game(rng.normal(size=(n, n)))
        pnoise = gm.StrategyNoise(rng.uniform(0.1, 1.5, size=n))
        enoise = gm.MatrixEntryNoise(rng.uniform(0.1, 1.5, size=(n, n)))
        eta = rng.uniform(0.1, 1.5, size=(n, n))
        mnoise = gm.MutationNoise(np.triu(eta, 1) + np.triu(eta, 1).T)
        fields = [
            fl.replicator_field(cgame),
            fl.stochastic_replicator_field(cgame, pnoise),
            fl.aggregate_shocks_field(cgame, pnoise),
            fl.exponential_learning_field(cgame, pnoise),
            fl.stratonovich_field(cgame, pnoise),
            fl.bimatrix_shock_field(mgame, enoise),
            fl.random_mutation_field(cgame, mnoise),
        ]
        xs = rng.dirichlet(np.ones(n), size=200)
        for field in fields:
            assert np.abs(field.drift(xs).sum(axis=-1)).max() < 1e-12
            if field.noise_dim:
                dw = rng.normal(size=(200, field.noise_dim))
                assert np.abs(field.diffusion(xs, dw).sum(axis=-1)).max() < 1e-12

    def test_multi_population_tangency_per_block(self):
        rng = np.random.default_rng(8)
        game = gm.multilinear_game([rng.normal(size=(2, 3)),
                                    rng.normal(size=(3, 2))])
        noise = gm.StrategyNoise(rng.uniform(0.2, 1.0, size=5))
        f = fl.stochastic_replicator_field(game, noise)
        x = np.concatenate([rng.dirichlet((1, 1)), rng.dirichlet((1, 1, 1))])
        d = f.drift(x)
        g = f.diffusion(x, rng.normal(size=5))
        assert abs(d[:2].sum()) < 1e-14 and abs(d[2:].sum()) < 1e-14
        assert abs(g[:2].sum()) < 1e-14 and abs(g[2:].sum()) < 1e-14

    def test_field_for_dispatch(self, game10, unit_noise):
        assert fl.field_for("rd", game10, unit_noise).kind == "rd"
        assert fl.field_for("srd", game10, unit_noise).kind == "srd"
        with pytest.raises(KindError):
            fl.field_for("nope", game10, unit_noise)
