"""Back-door and front-door estimators, effect curves, and the ATE dispatch."""

import itertools
import math

import numpy as np
import pytest
from scipy import stats as sstats

from causal_nade import dgp
from causal_nade import effects as fx
from causal_nade import graph as g
from causal_nade import heads as hd
from causal_nade import model as md
from causal_nade import netcore as nc
from conftest import exact_binary_model, joint_probability, kidney_dag


def rng(seed=0):
    return np.random.default_rng(seed)


def query(adjustment="backdoor-discrete", x=(1.0, 0.0), **kw):
    return fx.EffectQuery("T", "R", x, adjustment, **kw)


@pytest.fixture
def table_fitted_model():
    """Heads set to the published fitted probabilities (percent, 2 dp)."""
    return exact_binary_model(
        p_large=0.4897,
        p_treat_a={0: 0.24, 1: 0.77},  # only the structure matters here
        p_recover={(1, 1): 0.7558, (1, 0): 0.6968, (0, 1): 0.9568, (0, 0): 0.8894},
    )


class TestBackdoorDiscrete:
    def test_published_fitted_probabilities_give_632(self, table_fitted_model):
        est = fx.backdoor_discrete_ate(table_fitted_model, query())
        assert est.point == pytest.approx(0.0632, abs=5e-4)

    def test_generating_probabilities_give_537(self, generating_model):
        est = fx.backdoor_discrete_ate(generating_model, query())
        assert est.point == pytest.approx(dgp.binary_true_ate(), abs=1e-12)
        assert est.point == pytest.approx(0.0537, abs=5e-4)

    def test_outcome_independent_of_treatment_gives_zero(self):
        m = exact_binary_model(
            p_large=0.3,
            p_treat_a={0: 0.2, 1: 0.8},
            p_recover={(0, 0): 0.4, (0, 1): 0.4, (1, 0): 0.9, (1, 1): 0.9},
        )
        assert fx.backdoor_discrete_ate(m, query()).point == pytest.approx(0.0, abs=1e-12)

    def test_brute_force_truncated_factorization_oracle(self, generating_model):
        """Exact sum over all joint binary states of the mutilated chain."""
        m = generating_model

        def interventional_mean(t):
            total = 0.0
            for ks, r in itertools.product((0.0, 1.0), repeat=2):
                p_ks = joint_probability(m, ks, 0.0, 0.0) + joint_probability(m, ks, 0.0, 1.0) \
                    + joint_probability(m, ks, 1.0, 0.0) + joint_probability(m, ks, 1.0, 1.0)
                raw = md.node_raw(m, "R", {"KS": np.asarray(ks), "T": np.asarray(t)}, 1)
                p_r1 = hd.mean(m.heads["R"], raw[0])
                total += p_ks * (p_r1 if r == 1.0 else 0.0)
            return total

        oracle = interventional_mean(1.0) - interventional_mean(0.0)
        est = fx.backdoor_discrete_ate(m, query()).point
        assert abs(est - oracle) < 1e-10

    def test_non_discrete_rejected(self):
        ds = dgp.generate(dgp.DgpSpec("continuous-confounder-gamma", 400, 1))
        m, _ = md.train_model(
            dgp.observed_dag("continuous-confounder-gamma"), ds,
            md.TrainConfig(seed=1, epochs=2),
        )
        with pytest.raises(fx.EffectError) as exc:
            fx.backdoor_discrete_ate(m, query())
        assert exc.value.kind == "non-discrete-variables"

    def test_no_confounder_pattern_rejected(self):
        dag = g.Dag([("T", "binary"), ("R", "binary")], {"R": ["T"]})
        m = md.build(dag, seed=1)
        with pytest.raises(fx.EffectError) as exc:
            fx.backdoor_discrete_ate(m, query())
        assert exc.value.kind == "adjustment-set-not-found"


class TestBackdoorMc:
    @pytest.fixture
    def linear_gamma_model(self):
        ds = dgp.generate(dgp.DgpSpec("continuous-confounder-gamma", 10_000, 3))
        cfg = md.TrainConfig(seed=3, epochs=150, learning_rate=1e-2,
                             activation="linear", hidden=(4,))
        m, _ = md.train_model(dgp.observed_dag("continuous-confounder-gamma"), ds, cfg)
        return m

    def test_ate_constant_across_sample_counts(self, linear_gamma_model):
        values = []
        for count in (1, 5, 25, 50):
            q = query("backdoor-mc", mc_outer=count, seed=77)
            values.append(fx.ate(linear_gamma_model, q).point)
        assert max(values) - min(values) < 1e-9
        assert values[0] == pytest.approx(4.0, abs=0.5)

    def test_outcome_ignoring_inputs_gives_constant(self):
        dag = dgp.observed_dag("continuous-confounder-gamma")
        m = md.build(dag, hidden=(4,), activation="linear", seed=5)
        r_net = m.nets["R"]
        for w in r_net.weights:
            w[:] = 0.0
        r_net.biases[-1][0] = 7.25  # head mean fixed at 7.25 regardless of inputs
        mean1, _ = fx.backdoor_mc(m, query("backdoor-mc", mc_outer=64, seed=1), 1.0)
        mean0, _ = fx.backdoor_mc(m, query("backdoor-mc", mc_outer=64, seed=1), 0.0)
        assert mean1 == pytest.approx(7.25, abs=1e-12)
        assert mean0 == pytest.approx(7.25, abs=1e-12)

    def test_common_random_numbers_share_confounder_draws(self, linear_gamma_model):
        q = query("backdoor-mc", x=(1.0, 1.0), mc_outer=500, seed=9)
        assert fx.ate(linear_gamma_model, q).point == 0.0

    def test_zero_samples_rejected(self, linear_gamma_model):
        with pytest.raises(fx.EffectError) as exc:
            fx.backdoor_mc(linear_gamma_model, query("backdoor-mc", mc_outer=0), 1.0)
        assert exc.value.kind == "mc-samples-zero"

    def test_converges_across_independent_runs(self, linear_gamma_model):
        a = fx.ate(linear_gamma_model, query("backdoor-mc", mc_outer=100_000, seed=1)).point
        b = fx.ate(linear_gamma_model, query("backdoor-mc", mc_outer=100_000, seed=2)).point
        assert abs(a - b) < 0.05

    def test_matches_mutilated_ancestral_sampling(self, linear_gamma_model):
        q = query("backdoor-mc", mc_outer=200_000, seed=5)
        mean1, _ = fx.backdoor_mc(linear_gamma_model, q, 1.0)
        ds = md.ancestral_sample(linear_gamma_model, 200_000, rng(6),
                                 g.Intervention({"T": 1.0}))
        assert mean1 == pytest.approx(ds.column("R").mean(), abs=0.05)


class TestCateCurve:
    def test_analytic_reference_at_ks_ten(self):
        assert dgp.true_effect(dgp.DgpSpec("nonlinear", 10, 1), 10.0) == pytest.approx(
            50.0 / 13.0, abs=1e-12
        )
        assert 50.0 / 13.0 == pytest.approx(3.846, abs=1e-3)

    def test_linear_model_curve_is_affine(self):
        ds = dgp.generate(dgp.DgpSpec("nonlinear", 4000, 3))
        cfg = md.TrainConfig(seed=3, epochs=60, learning_rate=1e-2,
                             activation="linear", hidden=(4,))
        m, _ = md.train_model(dgp.observed_dag("nonlinear"), ds, cfg)
        grid = np.linspace(8.0, 18.0, 60)
        curve = fx.cate_curve(m, query("backdoor-mc"), grid)
        second = np.diff(curve, 2)
        assert np.max(np.abs(second)) < 1e-9

    def test_additive_treatment_gives_flat_linear_curve(self):
        ds = dgp.generate(dgp.DgpSpec("continuous-confounder-gamma", 4000, 4))
        cfg = md.TrainConfig(seed=4, epochs=60, learning_rate=1e-2,
                             activation="linear", hidden=(4,))
        m, _ = md.train_model(dgp.observed_dag("continuous-confounder-gamma"), ds, cfg)
        grid = np.linspace(4.0, 16.0, 40)
        curve = fx.cate_curve(m, query("backdoor-mc"), grid)
        assert np.max(curve) - np.min(curve) < 1e-9

    def test_empty_grid_rejected(self, generating_model):
        with pytest.raises(fx.EffectError) as exc:
            fx.cate_curve(generating_model, query("backdoor-mc"), [])
        assert exc.value.kind == "empty-grid"

    def test_support_grid_quantile_window(self):
        values = np.linspace(0.0, 1.0, 10_001)
        grid = fx.support_grid(values, points=100)
        assert grid[0] == pytest.approx(0.01, abs=1e-3)
        assert grid[-1] == pytest.approx(0.99, abs=1e-3)
        assert len(grid) == 100


@pytest.fixture(scope="module")
def trained_frontdoor():
    ds = dgp.generate(dgp.DgpSpec("frontdoor", 6000, 11))
    cfg = md.TrainConfig(seed=11, epochs=250, learning_rate=1e-3, hidden=(16,))
    m, _ = md.train_model(dgp.observed_dag("frontdoor"), ds, cfg)
    aux, _ = md.fit_auxiliary(ds, ("Mg", "T"), "R", hd.Head("gaussian"), cfg)
    return m, aux


class TestFrontdoor:
    def test_missing_aux(self, trained_frontdoor):
        m, _ = trained_frontdoor
        with pytest.raises(fx.EffectError) as exc:
            fx.frontdoor_mc(m, None, 0.0, 10, 1, rng(1))
        assert exc.value.kind == "missing-aux"

    def test_zero_samples(self, trained_frontdoor):
        m, aux = trained_frontdoor
        with pytest.raises(fx.EffectError) as exc:
            fx.frontdoor_mc(m, aux, 0.0, 10, 0, rng(1))
        assert exc.value.kind == "mc-samples-zero"

    def test_kidney_graph_rejected(self, generating_model):
        with pytest.raises(fx.EffectError) as exc:
            fx.ate(generating_model, query("frontdoor-mc"))
        assert exc.value.kind == "adjustment-graph-mismatch"

    def test_treatment_shifts_distribution(self, trained_frontdoor):
        m, aux = trained_frontdoor
        d0 = fx.frontdoor_mc(m, aux, 0.0, 500, 16, rng(2))
        d5 = fx.frontdoor_mc(m, aux, 0.5, 500, 16, rng(2))
        # raising the treatment raises the mediator and lowers the outcome
        assert d5.mean() < d0.mean() - 0.3

    def test_aux_ignoring_treatment_matches_two_stage_sampling(self, trained_frontdoor):
        m, aux = trained_frontdoor
        blind = md.AuxEstimator(aux.inputs, aux.target, aux.head,
                                nc.Mlp(aux.net.sizes, aux.net.activation,
                                       [w.copy() for w in aux.net.weights],
                                       [b.copy() for b in aux.net.biases]),
                                aux.means.copy(), aux.stds.copy())
        blind.net.weights[0][:, 1] = 0.0  # sever the treatment input
        inner = fx.frontdoor_mc(m, blind, 0.0, 400, 16, rng(3))

        # oracle: marginalize the mediator only, no inner treatment loop
        treatment, mediator, outcome = fx.frontdoor_roles(m.dag)
        n = 6400
        mg_raw = md.node_raw(m, mediator, {treatment: np.full(n, 0.0)}, n)
        mg = hd.sample_column(m.heads[mediator], mg_raw, rng(4))
        raw = blind.raw({mediator: mg, treatment: np.zeros(n)}, n)
        direct = hd.sample_column(blind.head, raw, rng(5))
        assert sstats.ks_2samp(inner, direct).pvalue > 0.01

    def test_inner_outer_bookkeeping_invariant_at_inner_one(self, trained_frontdoor):
        m, aux = trained_frontdoor
        draws = fx.frontdoor_mc(m, aux, 0.5, 4000, 1, rng(6))

        # swapped bookkeeping: one mediator draw per (inner) treatment draw
        treatment, mediator, outcome = fx.frontdoor_roles(m.dag)
        n = 4000
        r = rng(7)
        t_prime = hd.sample_column(m.heads[treatment], md.node_raw(m, treatment, {}, n), r)
        mg_raw = md.node_raw(m, mediator, {treatment: np.full(n, 0.5)}, n)
        mg = hd.sample_column(m.heads[mediator], mg_raw, r)
        swapped = hd.sample_column(aux.head, aux.raw({mediator: mg, treatment: t_prime}, n), r)
        assert sstats.ks_2samp(draws, swapped).pvalue > 0.01


class TestAteDispatch:
    def test_identical_treatment_values_zero_everywhere(self, generating_model):
        for adj in ("backdoor-discrete", "none"):
            q = query(adj, x=(1.0, 1.0), mc_outer=200, seed=3)
            assert fx.ate(generating_model, q).point == 0.0

    def test_direct_sampling_matches_discrete_adjustment(self, generating_model):
        exact = fx.ate(generating_model, query()).point
        sampled = fx.ate(
            generating_model, query("none", mc_outer=400_000, seed=8)
        ).point
        assert sampled == pytest.approx(exact, abs=0.005)

    def test_unknown_adjustment_rejected(self):
        with pytest.raises(ValueError):
            query("propensity")

    def test_treatment_equal_outcome_rejected(self):
        with pytest.raises(ValueError):
            fx.EffectQuery("R", "R", (1.0, 0.0))
