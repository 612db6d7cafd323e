import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import central_diff, rel_err
from rsgnet.errors import ConfigurationError, ParameterError, ShapeError
from rsgnet.networks import (
    NetworkSpec,
    add_bias,
    corrupt,
    gradient_mapping,
    init_weights,
    loss_and_grad_1nn,
    loss_and_grad_da,
    loss_and_grad_lnn,
    project_box,
    projected_gradient,
    sigmoid,
)


class TestSigmoid:
    def test_zero(self):
        assert sigmoid([0.0])[0] == 0.5

    def test_one(self):
        assert sigmoid([1.0])[0] == pytest.approx(0.7310585786300049, abs=1e-15)

    @given(st.floats(-700, 700))
    def test_symmetry(self, t):
        a, b = sigmoid([-t, t])
        assert a + b == pytest.approx(1.0, abs=1e-15)

    def test_no_overflow(self):
        with np.errstate(over="raise"):
            out = sigmoid(np.array([-1e4, 1e4]))
        assert out[0] == 0.0 and out[1] == 1.0


class TestNetworkSpec:
    def test_shapes(self):
        spec = NetworkSpec((5, 4, 2))
        assert spec.n_layers == 2
        assert spec.layer_shapes == [(4, 5), (2, 4)]
        assert spec.box_limits == (None, None)

    def test_bias_adds_column(self):
        assert NetworkSpec((5, 2), bias=True).layer_shapes == [(2, 6)]

    @pytest.mark.parametrize("kw", [dict(widths=(3,)), dict(widths=(3, 0)),
                                    dict(widths=(3, 2), box_limits=(0.1, 0.2)),
                                    dict(widths=(3, 2), box_limits=(-1.0,))])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            NetworkSpec(**kw)

    @pytest.mark.parametrize("zeta", [0.0, -0.1, 1.5])
    def test_keep_prob_range(self, zeta):
        with pytest.raises(ParameterError):
            NetworkSpec((3, 2), keep_prob=zeta)

    def test_init_inside_box(self, rng):
        spec = NetworkSpec((50, 40), (0.01,))
        (W,) = init_weights(spec, rng)
        assert W.shape == (40, 50)
        assert np.abs(W).max() <= 0.01

    def test_init_default_scale(self, rng):
        (W,) = init_weights(NetworkSpec((4, 4)), rng)
        assert np.abs(W).max() <= 0.25


class TestOneLayer:
    def test_zero_weights_half_target(self):
        W = np.zeros((3, 4))
        loss, g = loss_and_grad_1nn(W, np.ones(4), np.full(3, 0.5))
        assert loss == 0.0
        assert not g.any()

    def test_zero_weights_unit_target(self, rng):
        loss, _ = loss_and_grad_1nn(np.zeros((3, 4)), rng.random(4), np.ones(3))
        assert loss == pytest.approx(0.25 * 3)

    def test_finite_differences(self, rng):
        W = rng.normal(size=(3, 6))
        x, y = rng.random(6), rng.random(3)
        _, g = loss_and_grad_1nn(W, x, y)
        num = central_diff(lambda V: loss_and_grad_1nn(V, x, y)[0], W)
        assert rel_err(g, num) <= 1e-5

    def test_batch_is_mean_of_samples(self, rng):
        W = rng.normal(size=(2, 5))
        X, Y = rng.random((4, 5)), rng.random((4, 2))
        loss, g = loss_and_grad_1nn(W, X, Y)
        parts = [loss_and_grad_1nn(W, X[i], Y[i]) for i in range(4)]
        assert loss == pytest.approx(np.mean([p[0] for p in parts]))
        np.testing.assert_allclose(g, np.mean([p[1] for p in parts], axis=0))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            loss_and_grad_1nn(np.zeros((3, 4)), np.zeros(5), np.zeros(3))
        with pytest.raises(ShapeError):
            loss_and_grad_1nn(np.zeros((3, 4)), np.zeros(4), np.zeros(2))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_loss_zero_iff_exact(self, seed):
        r = np.random.default_rng(seed)
        W, x = r.normal(size=(2, 3)), r.random(3)
        y = sigmoid(W @ x)
        assert loss_and_grad_1nn(W, x, y)[0] == 0.0
        assert loss_and_grad_1nn(W, x, np.clip(y + 0.01, 0, 1))[0] > 0.0


class TestCorrupt:
    def test_keep_all(self, rng):
        x = rng.random(7)
        state = rng.bit_generator.state
        xt, z = corrupt(x, 1.0, rng)
        np.testing.assert_array_equal(xt, x)
        assert (z == 1).all()
        assert rng.bit_generator.state == state

    def test_rate(self):
        _, z = corrupt(np.ones(100_000), 0.5, np.random.default_rng(0))
        assert 0.495 <= z.mean() <= 0.505

    def test_deterministic(self):
        a = corrupt(np.ones(20), 0.3, np.random.default_rng(5))[1]
        b = corrupt(np.ones(20), 0.3, np.random.default_rng(5))[1]
        np.testing.assert_array_equal(a, b)

    def test_dropped_units_are_zero(self, rng):
        x = rng.random(50) + 0.1
        xt, z = corrupt(x, 0.4, rng)
        assert set(np.unique(z)) <= {0.0, 1.0}
        np.testing.assert_array_equal(xt == 0, z == 0)


class TestDenoisingAutoencoder:
    def test_zero_weights(self, rng):
        x = rng.random(5)
        loss, _ = loss_and_grad_da(np.zeros((3, 5)), x, box_limit=0.1)
        assert loss == pytest.approx(np.sum((x - 0.5) ** 2))

    def test_zero_input(self, rng):
        W = rng.uniform(-0.1, 0.1, (3, 5))
        mask = (rng.random(5) < 0.5).astype(float)
        loss, _ = loss_and_grad_da(W, np.zeros(5), mask, box_limit=0.1)
        r = sigmoid(W.T @ np.full(3, 0.5))
        assert loss == pytest.approx(np.sum(r * r))

    def test_finite_differences_tied_weights(self, rng):
        W = rng.normal(scale=0.5, size=(4, 6))
        x = rng.random(6)
        mask = np.array([1, 0, 1, 1, 0, 1.0])
        _, g = loss_and_grad_da(W, x, mask, box_limit=1.0)
        num = central_diff(lambda V: loss_and_grad_da(V, x, mask, box_limit=1.0)[0], W)
        assert rel_err(g, num) <= 1e-5

    def test_per_row_masks(self, rng):
        W = rng.normal(size=(3, 4))
        X = rng.random((5, 4))
        Z = (rng.random((5, 4)) < 0.5).astype(float)
        loss, g = loss_and_grad_da(W, X, Z, box_limit=1.0)
        parts = [loss_and_grad_da(W, X[i], Z[i], box_limit=1.0) for i in range(5)]
        assert loss == pytest.approx(np.mean([p[0] for p in parts]))
        np.testing.assert_allclose(g, np.mean([p[1] for p in parts], axis=0))

    def test_requires_box(self):
        with pytest.raises(ConfigurationError):
            loss_and_grad_da(np.zeros((2, 3)), np.zeros(3))

    def test_unit_mask_matches_no_mask(self, rng):
        W, x = rng.normal(size=(3, 4)), rng.random(4)
        a = loss_and_grad_da(W, x, None, box_limit=1.0)
        b = loss_and_grad_da(W, x, np.ones(4), box_limit=1.0)
        assert a[0] == b[0]
        np.testing.assert_array_equal(a[1], b[1])


class TestMultiLayer:
    def test_reduces_to_single_layer(self, rng):
        W, x, y = rng.normal(size=(2, 5)), rng.random(5), rng.random(2)
        l1, g1 = loss_and_grad_1nn(W, x, y)
        l2, g2, hidden = loss_and_grad_lnn([W], x, y, [np.ones(5)])
        assert l1 == l2 and hidden == []
        np.testing.assert_array_equal(g1, g2[0])

    def test_finite_differences(self, rng):
        widths = (5, 4, 4, 2)
        params = [rng.normal(size=(widths[l + 1], widths[l])) for l in range(3)]
        masks = [np.array([1, 0, 1, 1, 1.0]), np.array([1, 1, 0, 1.0]), np.array([0, 1, 1, 1.0])]
        x, y = rng.random(5), rng.random(2)
        _, grads, _ = loss_and_grad_lnn(params, x, y, masks)
        for l in range(3):
            def f(V, l=l):
                ps = list(params)
                ps[l] = V
                return loss_and_grad_lnn(ps, x, y, masks)[0]
            assert rel_err(grads[l], central_diff(f, params[l])) <= 1e-5

    def test_dropped_columns_are_zero(self, rng):
        widths = (6, 5, 4, 3)
        params = [rng.normal(size=(widths[l + 1], widths[l])) for l in range(3)]
        masks = [(rng.random(w) < 0.5).astype(float) for w in widths[:-1]]
        _, grads, _ = loss_and_grad_lnn(params, rng.random((4, 6)), rng.random((4, 3)), masks)
        for g, z in zip(grads, masks):
            zero_cols = np.all(g == 0.0, axis=0)
            np.testing.assert_array_equal(zero_cols, z == 0)

    def test_unit_masks_bitwise_identical(self, rng):
        params = [rng.normal(size=(4, 5)), rng.normal(size=(2, 4))]
        x, y = rng.random((3, 5)), rng.random((3, 2))
        a = loss_and_grad_lnn(params, x, y)
        b = loss_and_grad_lnn(params, x, y, [np.ones(5), np.ones(4)])
        assert a[0] == b[0]
        for ga, gb in zip(a[1], b[1]):
            np.testing.assert_array_equal(ga, gb)

    def test_activations_returned(self, rng):
        params = [rng.normal(size=(4, 5)), rng.normal(size=(3, 4)), rng.normal(size=(2, 3))]
        _, _, hidden = loss_and_grad_lnn(params, rng.random(5), rng.random(2))
        assert [h.shape for h in hidden] == [(4,), (3,)]

    def test_mask_count(self, rng):
        with pytest.raises(ShapeError):
            loss_and_grad_lnn([np.zeros((2, 3))], np.zeros(3), np.zeros(2), [np.ones(3), np.ones(2)])

    def test_bias_augmentation(self):
        np.testing.assert_array_equal(add_bias(np.zeros((2, 3)))[:, -1], [1.0, 1.0])


class TestProjection:
    def test_clip(self):
        assert project_box(np.array([[0.5]]), 0.1)[0, 0] == 0.1

    def test_inside_unchanged(self, rng):
        W = rng.uniform(-0.1, 0.1, (3, 3))
        np.testing.assert_array_equal(project_box(W, 0.1), W)

    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 10))
    @settings(max_examples=50)
    def test_idempotent_and_feasible(self, seed, w_m):
        W = np.random.default_rng(seed).normal(scale=5, size=(4, 3))
        P = project_box(W, w_m)
        assert np.abs(P).max() <= w_m
        np.testing.assert_array_equal(project_box(P, w_m), P)

    def test_mapping_interior_exact(self, rng):
        W = rng.uniform(-0.05, 0.05, (3, 4))
        g = rng.normal(size=(3, 4))
        np.testing.assert_array_equal(gradient_mapping(W, g, 1e-4, 0.1), g)

    def test_mapping_at_boundary_inward(self):
        W, g = np.full((1, 1), 0.1), np.full((1, 1), 0.3)
        np.testing.assert_array_equal(gradient_mapping(W, g, 0.01, 0.1), g)

    def test_mapping_at_boundary_outward(self):
        W, g = np.full((1, 1), 0.1), np.full((1, 1), -0.3)
        assert gradient_mapping(W, g, 0.01, 0.1)[0, 0] == 0.0

    def test_mapping_no_box(self, rng):
        g = rng.normal(size=(2, 2))
        np.testing.assert_array_equal(gradient_mapping(rng.normal(size=(2, 2)), g, 0.1, None), g)

    def test_mapping_rejects_nonpositive_step(self):
        with pytest.raises(ParameterError):
            gradient_mapping(np.zeros((1, 1)), np.zeros((1, 1)), 0.0, 0.1)

    def test_clip_mode(self):
        g = np.array([[0.5, -0.5, 0.01]])
        np.testing.assert_array_equal(projected_gradient(np.zeros((1, 3)), g, 0.1, 0.1, "clip"),
                                      [[0.1, -0.1, 0.01]])
        with pytest.raises(ParameterError):
            projected_gradient(np.zeros((1, 3)), g, 0.1, 0.1, "other")
