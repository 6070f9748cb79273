import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varshape.errors import BadDims, BadLabel, LengthMismatch, SchemaError, ShapeMismatch
from varshape.generate import blob
from varshape.mesh import permute_mesh
from varshape.model import (
    AffineFunctional,
    Mlp,
    backward,
    forward,
    forward_batch,
    init,
    lipschitz_upper_bound,
    load_checkpoint,
    model_output,
    mse_loss,
    new_model,
    param_count,
    param_count_with_bias,
    save_checkpoint,
    softmax_cross_entropy,
    spectral_norm,
)
from varshape.varifold import DiscreteVarifold, from_mesh


def reference_forward(mlp, point):
    """Independent re-implementation: per-neuron loops, no matrix ops."""
    a = [float(x) for x in point]
    n_layers = len(mlp.dims) - 1
    for l in range(n_layers):
        out = []
        for j in range(mlp.dims[l + 1]):
            z = mlp.biases[l][j] + sum(mlp.weights[l][j][k] * a[k] for k in range(mlp.dims[l]))
            if l < n_layers - 1:
                z = 1.0 / (1.0 + np.exp(-z))
            out.append(z)
        a = out
    return np.array(a)


class TestInit:
    def test_shapes(self):
        mlp = init((6, 16, 64, 10), seed=0)
        assert [w.shape for w in mlp.weights] == [(16, 6), (64, 16), (10, 64)]
        assert [b.shape for b in mlp.biases] == [(16,), (64,), (10,)]

    def test_deterministic(self):
        a, b = init((6, 16, 64, 10), seed=5), init((6, 16, 64, 10), seed=5)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_glorot_bound(self):
        mlp = init((6, 16, 64, 10), seed=1)
        assert np.abs(mlp.weights[0]).max() <= np.sqrt(6 / (6 + 16))

    def test_zero_biases(self):
        mlp = init((6, 16, 1), seed=2)
        assert all(np.all(b == 0) for b in mlp.biases)

    def test_bad_dims(self):
        with pytest.raises(BadDims):
            init((6,), seed=0)
        with pytest.raises(BadDims):
            init((6, 0, 1), seed=0)


class TestParamCount:
    @pytest.mark.parametrize("dims,expected", [
        ((6, 8, 32, 10), 674),
        ((6, 16, 64, 10), 1850),
        ((6, 32, 128, 10), 5738),
        ((6, 64, 10), 1098),
        ((6, 16, 64, 64, 10), 6010),
        ((6, 16, 64, 12), 1980),
    ])
    def test_reference_architectures(self, dims, expected):
        assert param_count(dims) == expected

    def test_with_output_bias(self):
        assert param_count_with_bias((6, 16, 64, 10)) == 1850 + 10


class TestForward:
    def test_zero_net_outputs_zero(self):
        mlp = Mlp((4, 3, 2), [np.zeros((3, 4)), np.zeros((2, 3))], [np.zeros(3), np.zeros(2)])
        # hidden sigmoids sit at 1/2, but the zero output layer kills them
        np.testing.assert_array_equal(forward(mlp, [1.0, -2.0, 3.0, 0.5]), [0.0, 0.0])

    def test_single_affine_layer(self):
        w = np.array([[1.0, 2.0], [3.0, -1.0]])
        b = np.array([0.5, -0.5])
        mlp = Mlp((2, 2), [w], [b])
        x = np.array([2.0, 1.0])
        np.testing.assert_allclose(forward(mlp, x), w @ x + b)

    def test_matches_independent_reimplementation(self):
        rng = np.random.default_rng(0)
        mlp = init((6, 5, 4, 3), seed=7)
        for b in mlp.biases:
            b += rng.standard_normal(b.shape)
        for _ in range(10):
            x = rng.standard_normal(6)
            np.testing.assert_allclose(forward(mlp, x), reference_forward(mlp, x), atol=1e-12)

    def test_shape_mismatch(self):
        mlp = init((6, 4, 1), seed=0)
        with pytest.raises(ShapeMismatch):
            forward(mlp, np.zeros(5))


class TestModelOutput:
    def test_zero_net_gives_bias(self, unit_cube):
        mlp = Mlp((6, 2), [np.zeros((2, 6))], [np.zeros(2)])
        model = AffineFunctional(mlp, np.array([1.5, -2.0]))
        np.testing.assert_array_equal(model_output(model, from_mesh(unit_cube)), [1.5, -2.0])

    def test_linear_in_weights(self, unit_cube):
        mu = from_mesh(unit_cube)
        model = new_model((6, 8, 3), seed=4)
        lam = 3.5
        scaled = DiscreteVarifold(mu.positions, mu.directions, lam * mu.weights)
        np.testing.assert_allclose(
            model_output(model, scaled) - model.bias,
            lam * (model_output(model, mu) - model.bias),
            rtol=1e-12,
        )

    def test_permutation_invariance(self):
        mesh = blob(resolution=7, seed=2)
        model = new_model((6, 16, 4), seed=1)
        a = model_output(model, from_mesh(mesh))
        b = model_output(model, from_mesh(permute_mesh(mesh, seed=77)))
        np.testing.assert_allclose(a, b, rtol=1e-9)


class TestBackward:
    def test_zero_upstream(self, unit_cube):
        model = new_model((6, 8, 2), seed=0)
        g = backward(model, from_mesh(unit_cube), np.zeros(2))
        assert all(np.all(w == 0) for w in g.weights)
        assert np.all(g.bias == 0)

    def test_single_affine_closed_form(self):
        # d/dW of u . (w h(p)) for h = Wx + b is u outer (w p)
        point = np.array([1.0, -2.0, 0.5, 0.25, 3.0, -1.0])
        direction = point[3:] / np.linalg.norm(point[3:])
        mu = DiscreteVarifold(point[None, :3], direction[None], np.array([2.0]))
        support = np.concatenate([point[:3], direction])
        model = new_model((6, 2), seed=3)
        upstream = np.array([0.7, -0.3])
        g = backward(model, mu, upstream)
        np.testing.assert_allclose(g.weights[0], np.outer(upstream, 2.0 * support), atol=1e-12)
        np.testing.assert_allclose(g.biases[0], 2.0 * upstream)
        np.testing.assert_allclose(g.bias, upstream)

    def test_beta_gradient_is_upstream(self, unit_cube):
        model = new_model((6, 16, 3), seed=2)
        up = np.array([1.0, 2.0, -1.0])
        np.testing.assert_array_equal(backward(model, from_mesh(unit_cube), up).bias, up)


class TestLosses:
    def test_mse_zero_at_labels(self):
        loss, ups = mse_loss([np.array([1.0, 2.0])], [np.array([1.0, 2.0])])
        assert loss == 0.0
        np.testing.assert_array_equal(ups[0], [0.0, 0.0])

    def test_mse_scalar_case(self):
        loss, ups = mse_loss([np.array([1.0])], [np.array([0.0])])
        assert loss == pytest.approx(1.0)
        np.testing.assert_allclose(ups[0], [2.0])

    def test_mse_two_residuals(self):
        loss, _ = mse_loss([np.array([1.0]), np.array([-1.0])], [np.array([0.0]), np.array([0.0])])
        assert loss == pytest.approx(1.0)

    def test_mse_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            mse_loss([np.zeros(1)], [])

    def test_xent_uniform(self):
        loss, up = softmax_cross_entropy(np.array([0.0, 0.0]), 0)
        assert loss == pytest.approx(np.log(2.0))
        np.testing.assert_allclose(up, [-0.5, 0.5])

    def test_xent_stabilized(self):
        loss, _ = softmax_cross_entropy(np.array([50.0, -50.0]), 0)
        assert 0 <= loss < 1e-10

    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=6))
    @settings(max_examples=50, deadline=None)
    def test_xent_gradient_sums_to_zero(self, logits):
        _, up = softmax_cross_entropy(np.array(logits), 0)
        assert abs(up.sum()) < 1e-12

    def test_xent_bad_label(self):
        with pytest.raises(BadLabel):
            softmax_cross_entropy(np.zeros(3), 3)


class TestLipschitz:
    def test_single_affine_scaled_identity(self):
        mlp = Mlp((3, 3), [3.0 * np.eye(3)], [np.zeros(3)])
        assert lipschitz_upper_bound(mlp) == pytest.approx(3.0)

    def test_sigmoid_layer_quarters_bound(self):
        base = Mlp((3, 3), [2.0 * np.eye(3)], [np.zeros(3)])
        deeper = Mlp(
            (3, 3, 3), [np.eye(3), 2.0 * np.eye(3)], [np.zeros(3), np.zeros(3)]
        )
        assert lipschitz_upper_bound(deeper) == pytest.approx(
            0.25 * lipschitz_upper_bound(base)
        )

    def test_spectral_norm_matches_svd(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            w = rng.standard_normal((rng.integers(2, 9), rng.integers(2, 9)))
            assert spectral_norm(w) == pytest.approx(np.linalg.norm(w, 2), rel=1e-9)

    def test_empirical_slope_never_exceeds_bound(self):
        rng = np.random.default_rng(3)
        mlp = init((6, 16, 64, 2), seed=9)
        k = lipschitz_upper_bound(mlp)
        p = rng.standard_normal((100_000, 6)) * 3
        q = p + rng.standard_normal((100_000, 6))
        slopes = np.linalg.norm(forward_batch(mlp, p) - forward_batch(mlp, q), axis=1) / np.linalg.norm(p - q, axis=1)
        assert slopes.max() <= k


class TestCheckpoints:
    def test_roundtrip_bitwise(self, tmp_path):
        model = new_model((6, 16, 4), seed=13)
        model.bias += np.pi
        model.meta = {"seed": 13, "epochs": 0, "representation": "varifold"}
        path = tmp_path / "model.json"
        save_checkpoint(model, path)
        back = load_checkpoint(path)
        assert back.mlp.dims == model.mlp.dims
        for a, b in zip(back.mlp.weights, model.mlp.weights):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(back.mlp.biases, model.mlp.biases):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(back.bias, model.bias)
        assert back.meta == model.meta

    def test_mismatched_shapes_rejected(self, tmp_path):
        model = new_model((6, 8, 2), seed=0)
        path = tmp_path / "model.json"
        save_checkpoint(model, path)
        import json

        payload = json.loads(path.read_text())
        payload["dims"] = [6, 9, 2]
        path.write_text(json.dumps(payload))
        with pytest.raises(SchemaError):
            load_checkpoint(path)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError):
            load_checkpoint(path)
