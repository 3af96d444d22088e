import itertools
import math

import numpy as np
import pytest

from conftest import active_ramp_points, fd_gradient, ramp_fd, relative_errors
from directrank.exceptions import InvalidConfigError, SkipStep, TrainingDiverged
from directrank.inference import (
    LossAugConfig,
    Sign,
    augmented_objective,
    brute_force_interleavings,
    dp_loss_augmented,
    predicted_interleaving,
)
from directrank.neural import MlpParams, mlp_init, sample_coefficients, scores
from directrank.ranking import NEG, POS, Interleaving, RankingInstance, interleaving_ap_loss, score_F
from directrank.synthdata import Dataset
from directrank.trainers import (
    LOG_HEADER,
    Method,
    TaskLoss,
    TrainConfig,
    cross_entropy_step,
    direct_loss_step_01,
    direct_loss_step_ap,
    grid_search,
    hinge_step,
    l2_gradient,
    perceptron_step,
    run_training,
    step,
)


def bias_net(values):
    """A net whose output is its bias alone: phi_i = values[i] via one-hot inputs."""
    n = len(values)
    return (MlpParams((n, 1), [np.asarray(values, float)[:, None]], [np.zeros(1)]), np.eye(n))


def cfg_for(method, **kw):
    kw.setdefault("learning_rate", 0.1)
    kw.setdefault("iterations", 1)
    if Method(method).is_direct:
        kw.setdefault("epsilon", 1.0)
    return TrainConfig(method=method, **kw)


def toy_data(rng, n=40, dim=4):
    X = rng.standard_normal((n, dim))
    labels = (X[:, 0] + 0.3 * X[:, 1] > 0.4).astype(np.int8)
    labels[:2] = [1, 0]
    return Dataset.from_arrays(X, labels)


class TestConfig:
    def test_direct_needs_epsilon(self):
        with pytest.raises(InvalidConfigError):
            TrainConfig(Method.POS_AP, 0.1, 10)

    def test_baseline_rejects_epsilon(self):
        with pytest.raises(InvalidConfigError):
            TrainConfig(Method.XENT, 0.1, 10, epsilon=0.1)

    @pytest.mark.parametrize("kw", [{"iterations": 0}, {"learning_rate": -1.0}, {"l2_weight": -0.1},
                                    {"batch_size": 0}, {"eval_every": 0}])
    def test_bad_values(self, kw):
        base = dict(method=Method.XENT, learning_rate=0.1, iterations=5)
        base.update(kw)
        with pytest.raises(InvalidConfigError):
            TrainConfig(**base)

    def test_method_properties(self):
        assert Method("pos-ap").sign is Sign.POSITIVE
        assert Method("neg-01").sign is Sign.NEGATIVE
        assert {m for m in Method if m.is_direct} == {Method.POS_AP, Method.NEG_AP, Method.POS_01, Method.NEG_01}
        assert len(Method) == 9


class TestDirectAP:
    def test_running_example_zero_gradient(self):
        params, X = bias_net([0.2, 0.5])
        res = direct_loss_step_ap(params, X, [1, 0], cfg_for(Method.POS_AP))
        assert np.all(res.grad.flatten() == 0.0)

    def test_tiny_epsilon_zero_gradient(self, rng):
        p = mlp_init((4, 8, 8, 1), 3)
        X = rng.standard_normal((12, 4))
        labels = rng.permutation([1] * 5 + [0] * 7)
        for method in (Method.POS_AP, Method.NEG_AP):
            res = direct_loss_step_ap(p, X, labels, cfg_for(method, epsilon=1e-12))
            assert np.all(res.grad.flatten() == 0.0)

    def test_coefficients_formula(self, rng):
        phi = rng.standard_normal(7)
        labels = np.array([1, 0, 0, 1, 0, 1, 0])
        params, X = bias_net(phi)
        for method in (Method.POS_AP, Method.NEG_AP):
            cfg = cfg_for(method, epsilon=0.5)
            inst = RankingInstance.from_scores(phi, labels)
            y_w = predicted_interleaving(inst)
            y_d, _ = dp_loss_augmented(inst, LossAugConfig(0.5, method.sign))
            expected = float(method.sign) / 0.5 * (sample_coefficients(inst, y_d) - sample_coefficients(inst, y_w))
            np.testing.assert_allclose(direct_loss_step_ap(params, X, labels, cfg).grad.weights[0][:, 0], expected,
                                       atol=1e-15)

    @pytest.mark.parametrize("sign", [Sign.POSITIVE, Sign.NEGATIVE])
    @pytest.mark.parametrize("eps", [0.1, 1.0])
    def test_matches_ramp_fd(self, rng, sign, eps):
        method = Method.POS_AP if sign is Sign.POSITIVE else Method.NEG_AP
        checked = 0
        for p, X, labels, g in active_ramp_points(rng, method, eps, 4, "ap"):
            est, excluded = ramp_fd(p, X, labels, eps, sign, "ap")
            keep = ~excluded
            checked += keep.sum()
            assert relative_errors(g[keep], est[keep]).max() <= 1e-4
        assert checked > 100

    def test_objective_is_ramp(self, rng):
        phi = rng.standard_normal(6)
        labels = np.array([1, 1, 0, 0, 0, 1])
        params, X = bias_net(phi)
        inst = RankingInstance.from_scores(phi, labels)
        for sign in (Sign.POSITIVE, Sign.NEGATIVE):
            cfg = LossAugConfig(0.3, sign)
            _, aug = brute_force_interleavings(inst, cfg)
            _, top = brute_force_interleavings(inst, cfg, epsilon_override=0.0)
            method = Method.POS_AP if sign is Sign.POSITIVE else Method.NEG_AP
            res = direct_loss_step_ap(params, X, labels, cfg_for(method, epsilon=0.3))
            assert res.objective == pytest.approx(float(sign) / 0.3 * (aug - top), abs=1e-12)

    def test_permutation_invariance(self, rng):
        p = mlp_init((4, 8, 8, 1), 5)
        X = rng.standard_normal((10, 4))
        labels = rng.permutation([1] * 4 + [0] * 6)
        perm = rng.permutation(10)
        cfg = cfg_for(Method.POS_AP, epsilon=0.5)
        a = direct_loss_step_ap(p, X, labels, cfg)
        b = direct_loss_step_ap(p, X[perm], labels[perm], cfg)
        np.testing.assert_allclose(a.grad.flatten(), b.grad.flatten(), rtol=1e-12, atol=1e-13)
        assert a.objective == pytest.approx(b.objective, abs=1e-13)

    def test_single_class_skips(self, rng):
        p = mlp_init((4, 3, 1), 0)
        with pytest.raises(SkipStep):
            direct_loss_step_ap(p, rng.standard_normal((5, 4)), [1] * 5, cfg_for(Method.POS_AP))


class TestDirect01:
    def test_tiny_epsilon_zero_gradient(self, rng):
        p = mlp_init((4, 8, 1), 1)
        X = rng.standard_normal((20, 4))
        labels = rng.integers(0, 2, 20)
        for method in (Method.POS_01, Method.NEG_01):
            res = direct_loss_step_01(p, X, labels, cfg_for(method, epsilon=1e-12))
            assert np.all(res.grad.flatten() == 0.0)

    @pytest.mark.parametrize("phi,method", [(-0.1, Method.POS_01), (-0.6, Method.POS_01), (-0.6, Method.NEG_01)])
    def test_single_sample_examples(self, phi, method):
        params, X = bias_net([phi])
        res = direct_loss_step_01(params, X, [1], cfg_for(method, epsilon=1.0))
        assert np.all(res.grad.flatten() == 0.0)

    def test_flip_when_margin_small(self):
        # y = +1, phi = -0.1, NEGATIVE sign: -1 gives 0.1 - 1, +1 gives -0.1, so y_direct = +1
        params, X = bias_net([-0.1])
        res = direct_loss_step_01(params, X, [1], cfg_for(Method.NEG_01, epsilon=1.0))
        # -(1/eps) * (+1 - (-1)) / N
        assert res.grad.weights[0][0, 0] == pytest.approx(-2.0)

    @pytest.mark.parametrize("sign", [Sign.POSITIVE, Sign.NEGATIVE])
    @pytest.mark.parametrize("eps", [0.1, 1.0])
    def test_matches_ramp_fd(self, rng, sign, eps):
        method = Method.POS_01 if sign is Sign.POSITIVE else Method.NEG_01
        checked = 0
        for p, X, labels, g in active_ramp_points(rng, method, eps, 3, "01"):
            est, excluded = ramp_fd(p, X, labels, eps, sign, "01")
            keep = ~excluded
            checked += keep.sum()
            assert relative_errors(g[keep], est[keep]).max() <= 1e-4
        assert checked > 50


class TestHinge:
    def test_running_example(self):
        params, X = bias_net([0.2, 0.5])
        res = hinge_step(params, X, [1, 0], cfg_for(Method.HINGE_AP))
        inst = RankingInstance.from_scores([0.2, 0.5], [1, 0])
        expected = (sample_coefficients(inst, Interleaving.from_sequence([NEG, POS]))
                    - sample_coefficients(inst, Interleaving.from_sequence([POS, NEG])))
        np.testing.assert_allclose(res.grad.weights[0][:, 0], expected, atol=1e-15)
        assert res.objective == pytest.approx(0.8 - (-0.3), abs=1e-12)

    def test_large_margin_zero(self):
        params, X = bias_net([50.0, 40.0, -30.0, -45.0])
        for loss in TaskLoss:
            res = hinge_step(params, X, [1, 1, 0, 0], cfg_for(Method.HINGE_AP), loss)
            assert np.all(res.grad.flatten() == 0.0)
            assert res.objective == 0.0

    def test_upper_bounds_task_loss(self, rng):
        for _ in range(200):
            p_count = int(rng.integers(1, 6))
            n_count = int(rng.integers(1, 8 - p_count))
            phi = rng.standard_normal(p_count + n_count)
            labels = rng.permutation([1] * p_count + [0] * n_count)
            params, X = bias_net(phi)
            res = hinge_step(params, X, labels, cfg_for(Method.HINGE_AP), TaskLoss.AP)
            inst = RankingInstance.from_scores(phi, labels)
            # enumerate the prediction's loss directly
            best_F, best_loss = -np.inf, None
            for pos in itertools.combinations(range(inst.size), inst.n_pos):
                y = Interleaving(np.isin(np.arange(inst.size), pos).astype(np.int8))
                f = score_F(inst, y)
                if f > best_F:
                    best_F, best_loss = f, interleaving_ap_loss(y)
            assert res.objective >= best_loss - 1e-12

    def test_zero_one_upper_bound(self, rng):
        for _ in range(100):
            phi = rng.standard_normal(7)
            labels = rng.integers(0, 2, 7)
            params, X = bias_net(phi)
            res = hinge_step(params, X, labels, cfg_for(Method.HINGE_01), TaskLoss.ZERO_ONE)
            pred = (phi > 0).astype(int)
            assert res.objective >= np.mean(pred != labels) - 1e-12


class TestPositiveUpdate:
    def test_away_from_worse(self, rng):
        for _ in range(200):
            p_count = int(rng.integers(1, 5))
            n_count = int(rng.integers(1, 5))
            inst = RankingInstance.from_scores(rng.standard_normal(p_count + n_count),
                                               rng.permutation([1] * p_count + [0] * n_count))
            cfg = LossAugConfig(float(rng.choice([0.1, 1.0])), Sign.POSITIVE)
            y_d, _ = dp_loss_augmented(inst, cfg)
            y_w = predicted_interleaving(inst)
            assert augmented_objective(inst, y_d, cfg) >= augmented_objective(inst, y_w, cfg) - 1e-12
            if score_F(inst, y_d) <= score_F(inst, y_w):
                assert interleaving_ap_loss(y_d) >= interleaving_ap_loss(y_w) - 1e-12


class TestPerceptron:
    def test_zero_when_correct(self):
        params, X = bias_net([0.9, 0.8, -0.1])
        for loss in TaskLoss:
            res = perceptron_step(params, X, [1, 1, 0], cfg_for(Method.PER_AP), loss)
            assert np.all(res.grad.flatten() == 0.0)

    def test_running_example_direction(self):
        params, X = bias_net([0.2, 0.5])
        g = perceptron_step(params, X, [1, 0], cfg_for(Method.PER_AP)).grad.weights[0][:, 0]
        # descending raises the positive score and lowers the negative one
        assert g[0] < 0 < g[1]

    def test_converges_on_separable_data(self, rng):
        X = rng.standard_normal((60, 3))
        w_true = np.array([1.0, -2.0, 0.5])
        labels = (X @ w_true > 0).astype(int)
        train = Dataset.from_arrays(X, labels)
        params = mlp_init((3, 1), 0)
        log = run_training(train, train, params, TrainConfig(Method.PER_01, 1.0, 2000, eval_every=2000))
        assert np.mean((scores(log.params, X) > 0).astype(int) != labels) == 0.0


class TestCrossEntropy:
    def test_zero_scores(self):
        params = MlpParams((3, 1), [np.zeros((3, 1))], [np.zeros(1)])
        X = np.eye(3)
        labels = np.array([1, 0, 1])
        g = cross_entropy_step(params, X, labels, cfg_for(Method.XENT)).grad
        np.testing.assert_allclose(g.weights[0][:, 0], (0.5 - labels) / 3, atol=1e-15)

    def test_saturation(self):
        params, X = bias_net([20.0, -20.0, 20.0])
        g = cross_entropy_step(params, X, [1, 0, 1], cfg_for(Method.XENT)).grad
        assert np.all(np.abs(g.weights[0]) <= 1e-8)

    def test_matches_fd(self, rng):
        p = mlp_init((4, 6, 6, 1), 7)
        X = 0.3 * rng.standard_normal((9, 4))
        labels = rng.integers(0, 2, 9)
        g = cross_entropy_step(p, X, labels, cfg_for(Method.XENT)).grad.flatten()
        y = labels.astype(np.longdouble)

        def nll(s):
            return np.mean(np.log1p(np.exp(-np.abs(s))) + np.maximum(s, 0) - y * s)

        est, kink = fd_gradient(p, X, nll)
        assert relative_errors(g[~kink], est[~kink]).max() <= 1e-6


class TestL2:
    @pytest.mark.parametrize("method", list(Method))
    def test_l2_term_is_exact(self, rng, method):
        p = mlp_init((4, 6, 1), 2)
        X = rng.standard_normal((10, 4))
        labels = rng.permutation([1] * 4 + [0] * 6)
        plain = step(p, X, labels, cfg_for(method))
        reg = step(p, X, labels, cfg_for(method, l2_weight=0.25))
        np.testing.assert_allclose((reg.grad - plain.grad).flatten(), 0.5 * p.flatten(), rtol=1e-13, atol=1e-14)
        np.testing.assert_array_equal(l2_gradient(p, 0.25).flatten(), 0.5 * p.flatten())
        assert reg.objective == pytest.approx(plain.objective + 0.25 * p.sq_norm())


class TestRunTraining:
    def test_zero_lr_keeps_params(self, rng):
        data = toy_data(rng)
        p = mlp_init((4, 8, 1), 0)
        for method in Method:
            log = run_training(data, data, p, cfg_for(method, learning_rate=0.0, iterations=5))
            assert log.params.equals(p)
            assert log.final().test_ap == log.records[0].test_ap

    def test_deterministic(self, rng):
        data = toy_data(rng)
        p = mlp_init((4, 8, 1), 0)
        cfg = cfg_for(Method.POS_AP, iterations=10, batch_size=16, seed=3)
        a = run_training(data, data, p, cfg, record_time=False)
        b = run_training(data, data, p, cfg, record_time=False)
        assert a.to_csv() == b.to_csv()
        assert a.params.equals(b.params)

    def test_record_layout(self, rng):
        data = toy_data(rng)
        log = run_training(data, data, mlp_init((4, 8, 1), 0),
                           cfg_for(Method.XENT, iterations=7, eval_every=3), record_time=False)
        assert [r.iteration for r in log.records] == [0, 3, 6, 7]
        assert math.isnan(log.records[0].objective)
        csv = log.to_csv().splitlines()
        assert csv[0] == LOG_HEADER
        assert len(csv) == 5
        assert all(r.wall_ms == 0.0 for r in log.records)

    def test_minibatch_skips_single_class(self, rng):
        X = rng.standard_normal((30, 4))
        labels = np.zeros(30, np.int8)
        labels[:2] = 1
        data = Dataset.from_arrays(X, labels)
        log = run_training(data, data, mlp_init((4, 3, 1), 0),
                           cfg_for(Method.POS_AP, iterations=20, batch_size=2, seed=1))
        assert log.skipped > 0
        assert len(log.records) == 21

    def test_training_improves(self, rng):
        data = toy_data(rng, n=200)
        p = mlp_init((4, 16, 1), 0)
        log = run_training(data, data, p, cfg_for(Method.POS_AP, learning_rate=1.0, iterations=50, epsilon=0.1))
        assert log.final().train_ap > log.records[0].train_ap

    def test_divergence_reported(self, rng):
        data = toy_data(rng)
        with pytest.raises(TrainingDiverged):
            run_training(data, data, mlp_init((4, 8, 8, 1), 0), cfg_for(Method.XENT, learning_rate=1e300, iterations=5))

    def test_dimension_mismatch(self, rng):
        data = toy_data(rng)
        with pytest.raises(InvalidConfigError):
            run_training(data, data, mlp_init((3, 2, 1), 0), cfg_for(Method.XENT))

    def test_grid_search_picks_best_train_ap(self, rng):
        data = toy_data(rng, n=100)
        p = mlp_init((4, 8, 1), 0)
        cfg = cfg_for(Method.XENT, iterations=20, eval_every=20)
        lr, best = grid_search(data, data, p, cfg, [1e-4, 1e-1, 1e300], record_time=False)
        finals = {x: run_training(data, data, p, cfg_for(Method.XENT, learning_rate=x, iterations=20,
                                                         eval_every=20)).final().train_ap for x in (1e-4, 1e-1)}
        assert lr == max(finals, key=finals.get)
        assert best.final().train_ap == finals[lr]

    def test_grid_search_all_diverge(self, rng):
        data = toy_data(rng)
        with pytest.raises(TrainingDiverged):
            grid_search(data, data, mlp_init((4, 8, 8, 1), 0), cfg_for(Method.XENT, iterations=3), [1e300])
