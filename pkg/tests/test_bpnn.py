import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oamdetect.bpnn import (
    BpnnModel,
    TrainConfig,
    bpnn_forward,
    bpnn_gradient,
    bpnn_predict_class,
    bpnn_train,
    init_model,
    model_from_dict,
    model_to_dict,
    residual_jacobian,
    tanh_act,
)
from oamdetect.dataset import LabelScheme, Normalizer, SampleSet
from oamdetect.errors import DimensionError, TrainingError


def regression_set(x, y):
    x = np.asarray(x, dtype=float).reshape(len(y), -1)
    n = len(y)
    return SampleSet(x, np.asarray(y, float), np.zeros(n, int), np.full(n, 300.0), np.zeros(n),
                     LabelScheme.single_mode([0]))


def unit_norm(d):
    return Normalizer(np.full(d, -1.0), np.full(d, 1.0), -1.0, 1.0)


def random_model(seed, d=4, h=10, norm=None):
    rng = np.random.default_rng(seed)
    return BpnnModel(rng.normal(size=(h, d)), rng.normal(size=h), rng.normal(size=(1, h)),
                     float(rng.normal()), norm or unit_norm(d))


class TestActivation:
    def test_zero(self):
        assert tanh_act(0.0) == 0.0

    def test_saturates_without_overflow(self):
        with np.errstate(all="raise"):
            assert tanh_act(50.0) == 1.0
            assert tanh_act(-1e5) == -1.0

    def test_against_high_precision(self):
        mpmath.mp.dps = 40
        for x in (1.0, 1e-8, 0.3, -2.7, 7.5):
            assert abs(tanh_act(x) - float(mpmath.tanh(x))) <= 1e-15 * max(1.0, abs(float(mpmath.tanh(x))))

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-50, 50))
    def test_odd_bounded_and_consistent(self, x):
        t = tanh_act(x)
        assert -1.0 <= t <= 1.0
        assert tanh_act(-x) == -t
        assert t == pytest.approx(math.tanh(x), abs=1e-15)


class TestForward:
    def test_zero_weights_give_label_midpoint(self):
        norm = Normalizer(np.zeros(3), np.ones(3), 2.0, 6.0)
        m = BpnnModel(np.zeros((10, 3)), np.zeros(10), np.zeros((1, 10)), 0.0, norm)
        np.testing.assert_allclose(bpnn_forward(m, np.random.default_rng(0).normal(size=(5, 3))), 4.0)

    def test_output_bias_only(self):
        norm = Normalizer(np.zeros(2), np.ones(2), -3.0, 3.0)
        m = BpnnModel(np.ones((4, 2)), np.ones(4), np.zeros((1, 4)), 0.5, norm)
        assert bpnn_forward(m, [[0.2, 0.9]])[0] == pytest.approx(1.5)

    def test_matches_explicit_loops(self):
        norm = Normalizer(np.array([-math.pi] * 3), np.array([math.pi] * 3), -3.0, 3.0)
        m = random_model(1, d=3, h=10, norm=norm)
        x = np.random.default_rng(2).uniform(-3, 3, (20, 3))
        got = bpnn_forward(m, x)
        for row, g in zip(x, got):
            u = [2 * (v + math.pi) / (2 * math.pi) - 1 for v in row]
            out = m.b2
            for j in range(10):
                s = m.b1[j] + sum(m.w1[j, i] * u[i] for i in range(3))
                out += m.w2[0, j] * math.tanh(s)
            assert g == pytest.approx(3.0 * out, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            bpnn_forward(random_model(0), np.zeros((1, 3)))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_normalised_output_bounded(self, seed):
        m = random_model(seed)
        u = np.random.default_rng(seed).uniform(-5, 5, (50, 4))
        y, _ = m.forward_normalized(u)
        assert np.all(np.abs(y) <= np.abs(m.w2).sum() + abs(m.b2) + 1e-12)


class TestGradient:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_jacobian_central_differences(self, seed):
        m = random_model(seed, d=5, h=10)
        u = np.random.default_rng(seed + 10).uniform(-1, 1, (8, 5))
        jac = residual_jacobian(m, u)
        w = m.params()
        step = 1e-6
        for p in range(w.size):
            wp, wm = w.copy(), w.copy()
            wp[p] += step
            wm[p] -= step
            fd = (m.with_params(wp).forward_normalized(u)[0] - m.with_params(wm).forward_normalized(u)[0]) / (2 * step)
            scale = max(np.max(np.abs(fd)), 1e-3)
            assert np.max(np.abs(jac[:, p] - fd)) / scale < 1e-5

    def test_backprop_equals_jacobian_form(self):
        m = random_model(3, d=4)
        x = np.random.default_rng(4).uniform(-1, 1, (30, 4))
        t = np.random.default_rng(5).uniform(-1, 1, 30)
        grad, jac, r = bpnn_gradient(m, x, t)
        np.testing.assert_allclose(grad, 2 * jac.T @ r, atol=1e-10)

    def test_zero_residual_zero_gradient(self):
        m = random_model(6, d=4)
        x = np.random.default_rng(7).uniform(-1, 1, (12, 4))
        grad, _, r = bpnn_gradient(m, x, bpnn_forward(m, x))
        assert np.max(np.abs(r)) < 1e-15
        assert np.max(np.abs(grad)) < 1e-13


@pytest.fixture(scope="module")
def identity_fit():
    x = np.linspace(-1, 1, 50)
    return bpnn_train(regression_set(x, x), 10, TrainConfig(max_epochs=200, mse_goal=1e-7, seed=0))


class TestTraining:
    def test_fits_identity(self, identity_fit):
        model, report = identity_fit
        x = np.linspace(-1, 1, 50)
        assert report.epochs <= 200
        assert np.mean((bpnn_forward(model, x[:, None]) - x) ** 2) < 1e-6

    def test_objective_decreases_on_every_accepted_step(self, identity_fit):
        _, report = identity_fit
        assert report.accepted
        assert all(after < before for before, after in report.accepted)

    def test_report_columns_line_up(self, identity_fit):
        _, report = identity_fit
        lens = {len(report.mse), len(report.mu), len(report.gamma_eff), len(report.mu_d), len(report.mu_w)}
        assert len(lens) == 1
        assert report.to_csv().splitlines()[0] == "epoch,mse,mu,gamma_eff,mu_d,mu_w"

    def test_regularisation_changes_solution(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(-1, 1, (40, 2))
        y = np.sin(3 * x[:, 0]) + 0.1 * rng.normal(size=40)
        s = regression_set(x, y)
        plain, _ = bpnn_train(s, 10, TrainConfig(max_epochs=60, bayesian=False, mu_w=0.0, mse_goal=0))
        reg, rep = bpnn_train(s, 10, TrainConfig(max_epochs=60, bayesian=True, mse_goal=0))
        assert rep.mu_w[-1] > 0
        assert np.max(np.abs(plain.params() - reg.params())) > 1e-6

    def test_same_seed_reproducible(self):
        x = np.linspace(-1, 1, 20)
        s = regression_set(x, x**2)
        a, _ = bpnn_train(s, 5, TrainConfig(max_epochs=20, seed=3))
        b, _ = bpnn_train(s, 5, TrainConfig(max_epochs=20, seed=3))
        np.testing.assert_array_equal(a.params(), b.params())

    def test_singular_system_raises(self, monkeypatch):
        def broken(*args, **kwargs):
            raise np.linalg.LinAlgError("singular")

        monkeypatch.setattr(np.linalg, "solve", broken)
        x = np.linspace(-1, 1, 10)
        with pytest.raises(TrainingError, match="singular"):
            bpnn_train(regression_set(x, x), 3, TrainConfig(max_epochs=5, mu_max=1e-1))

    def test_affine_label_invariance(self):
        rng = np.random.default_rng(9)
        x = rng.uniform(-1, 1, (30, 3))
        y = x @ np.array([0.5, -1.0, 0.2])
        cfg = TrainConfig(max_epochs=30, mse_goal=0, seed=1)
        m1, _ = bpnn_train(regression_set(x, y), 6, cfg)
        m2, _ = bpnn_train(regression_set(x, 4.0 * y - 7.0), 6, cfg)
        q = rng.uniform(-1, 1, (20, 3))
        np.testing.assert_allclose(bpnn_forward(m2, q), 4.0 * bpnn_forward(m1, q) - 7.0, atol=1e-8)


class TestClassDecision:
    def test_nearest_label(self):
        scheme = LabelScheme.multi_mode([(0, 1), (1, 2), (0, 2), (-1, 1)])
        norm = Normalizer(np.zeros(1), np.ones(1), 1.0, 4.0)

        def constant(value):
            # output bias alone sets the prediction
            return BpnnModel(np.zeros((2, 1)), np.zeros(2), np.zeros((1, 2)),
                             float(norm.apply_label(value)), norm)

        assert bpnn_predict_class(constant(2.49), [[0.5]], scheme)[0] == 1
        assert bpnn_predict_class(constant(2.51), [[0.5]], scheme)[0] == 2
        assert bpnn_predict_class(constant(-5.0), [[0.5]], scheme)[0] == 0
        assert bpnn_predict_class(constant(9.0), [[0.5]], scheme)[0] == 3

    def test_json_round_trip(self):
        m = init_model(10, 10, unit_norm(10), seed=4)
        back = model_from_dict(model_to_dict(m, TrainConfig()))
        np.testing.assert_array_equal(back.params(), m.params())
