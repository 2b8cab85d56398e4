import numpy as np
import pytest

from toolbody.mlp import (Adam, Mlp, MomentumSGD, NormStats, backward, fit_normalization,
                          forward, from_bytes, init_mlp, load_model, save_model, to_bytes)


def small_net(seed=0, du=3, dp=2, hidden=(5, 4)):
    rng = np.random.default_rng(seed)
    m = init_mlp(du, dp, hidden, 3, seed=seed,
                 in_norm=NormStats(rng.normal(size=du), rng.uniform(0.5, 2.0, du)),
                 out_norm=NormStats(rng.normal(size=3), rng.uniform(0.5, 2.0, 3)))
    for b in m.biases:
        b[:] = rng.normal(scale=0.3, size=b.shape)
    return m


def test_forward_matches_manual_two_layer():
    W0 = np.array([[0.5, -1.0], [0.25, 0.0], [1.0, 2.0]])
    b0 = np.array([0.1, -0.2])
    W1 = np.array([[1.0, 0.0, -1.0], [0.5, 0.5, 0.5]])
    b1 = np.array([0.0, 1.0, 2.0])
    m = Mlp([W0, W1], [b0, b1], NormStats([1.0, 0.0], [2.0, 1.0]),
            NormStats([10.0, 20.0, 30.0], [2.0, 2.0, 2.0]), latent_dim=1)
    u = np.array([3.0, -1.0])
    p = np.array([0.5])
    z = np.array([(3.0 - 1.0) / 2.0, -1.0, 0.5])
    h = np.tanh(z @ W0 + b0)
    expected = (h @ W1 + b1) * 2.0 + np.array([10.0, 20.0, 30.0])
    np.testing.assert_allclose(forward(m, u, p), expected, rtol=1e-14)


def test_zero_network_returns_output_mean():
    m = init_mlp(4, 2, (6,), seed=1, out_norm=NormStats([1.0, 2.0, 3.0], [5.0, 5.0, 5.0]))
    for W in m.weights:
        W[:] = 0.0
    np.testing.assert_array_equal(forward(m, np.ones(4), np.zeros(2)), [1.0, 2.0, 3.0])


def test_default_layer_dims():
    m = init_mlp(7, 2)
    assert m.layer_dims == [9, 300, 300, 300, 300, 300, 3]


def test_batched_forward_equals_rowwise():
    m = small_net()
    rng = np.random.default_rng(3)
    U = rng.normal(size=(6, 3))
    P = rng.normal(size=(6, 2))
    batch = forward(m, U, P)
    for i in range(6):
        np.testing.assert_allclose(batch[i], forward(m, U[i], P[i]), rtol=1e-13)


def test_dimension_mismatch_raises():
    m = small_net()
    with pytest.raises(ValueError, match="command"):
        forward(m, np.zeros(4), np.zeros(2))
    with pytest.raises(ValueError, match="latent"):
        forward(m, np.zeros(3), np.zeros(3))


def _fd(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    m = small_net(seed)
    rng = np.random.default_rng(100 + seed)
    u = rng.normal(size=3)
    p = rng.normal(size=2)
    w = rng.normal(size=3)
    f = lambda: float(w @ forward(m, u, p))
    du, dp, grads = backward(m, u, p, w)
    np.testing.assert_allclose(du, _fd(f, u), rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(dp, _fd(f, p), rtol=1e-6, atol=1e-9)
    for param, g in zip(m.params, grads):
        np.testing.assert_allclose(g, _fd(f, param), rtol=1e-6, atol=1e-9)


def test_shared_latent_gradient_is_batch_sum():
    m = small_net(2)
    rng = np.random.default_rng(0)
    U = rng.normal(size=(4, 3))
    p = rng.normal(size=2)
    w = rng.normal(size=(4, 3))
    _, dp_shared, _ = backward(m, U, p, w)
    _, dp_rows, _ = backward(m, U, np.tile(p, (4, 1)), w)
    np.testing.assert_allclose(dp_shared, dp_rows.sum(0), rtol=1e-13)


def test_nonfinite_upstream_rejected():
    m = small_net()
    with pytest.raises(ValueError):
        backward(m, np.zeros(3), np.zeros(2), [np.nan, 0, 0])


def test_nonfinite_activation_names_layer():
    m = small_net()
    m.weights[1][0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="layer"):
        forward(m, np.ones(3), np.ones(2))


def test_normalization_known_values():
    u = np.array([[0.0, 5.0], [2.0, 5.0]])
    x = np.array([[1.0, 1.0, 1.0], [3.0, 5.0, 1.0]])
    nu, nx = fit_normalization(u, x)
    np.testing.assert_array_equal(nu.mean, [1.0, 5.0])
    # constant columns clamp to the floor instead of dividing by zero
    np.testing.assert_array_equal(nu.std, [1.0, 1e-6])
    np.testing.assert_array_equal(nx.std, [1.0, 2.0, 1e-6])
    np.testing.assert_array_equal(nu.normalize(u)[:, 0], [-1.0, 1.0])


def test_normalization_needs_two_samples():
    with pytest.raises(ValueError):
        fit_normalization(np.zeros((1, 2)), np.zeros((1, 3)))
    with pytest.raises(ValueError):
        fit_normalization(np.zeros((0, 2)), np.zeros((0, 3)))


def test_normalization_roundtrip():
    s = NormStats([1.0, -2.0], [3.0, 0.5])
    x = np.array([[4.0, 7.0], [-1.0, 0.0]])
    np.testing.assert_allclose(s.denormalize(s.normalize(x)), x, rtol=1e-15)


def test_adam_first_steps_scalar_oracle():
    # bias correction makes the first step lr * g / (|g| + eps)
    p = np.array([1.0])
    opt = Adam([p], lr=0.1)
    opt.step([p], [np.array([4.0])])
    np.testing.assert_allclose(p, [1.0 - 0.1 * 4.0 / (4.0 + 1e-8)], rtol=1e-12)
    opt.step([p], [np.array([-2.0])])
    m = 0.9 * 0.1 * 4.0 + 0.1 * -2.0
    v = 0.999 * 0.001 * 16.0 + 0.001 * 4.0
    step = 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    np.testing.assert_allclose(p, [1.0 - 0.1 * 4.0 / (4.0 + 1e-8) - step], rtol=1e-12)


def test_momentum_sgd_sequence():
    p = np.array([0.0])
    opt = MomentumSGD([p], lr=0.1, momentum=0.9)
    opt.step([p], [np.array([1.0])])
    np.testing.assert_allclose(p, [-0.1])
    opt.step([p], [np.array([1.0])])
    np.testing.assert_allclose(p, [-0.1 - 0.19])
    opt.reset()
    opt.step([p], [np.array([0.0])])
    np.testing.assert_allclose(p, [-0.29])


def test_optimizer_shape_mismatch():
    p = np.zeros(2)
    with pytest.raises(ValueError):
        Adam([p]).step([p], [np.zeros(3)])


def test_model_file_roundtrip(tmp_path):
    m = small_net(4)
    lat = {0: np.array([0.1, -0.2]), 7: np.array([1.5, 2.5])}
    path = tmp_path / "m.tbnpb"
    save_model(path, m, lat)
    m2, lat2 = load_model(path)
    assert to_bytes(m2, lat2) == path.read_bytes()
    assert sorted(lat2) == [0, 7]
    np.testing.assert_array_equal(lat2[7], lat[7])
    u = np.array([0.3, 0.1, -2.0])
    np.testing.assert_array_equal(forward(m, u, lat[0]), forward(m2, u, lat2[0]))


def test_model_file_header_layout():
    m = small_net()
    data = to_bytes(m)
    assert data[:6] == b"TBNPB1"
    assert int.from_bytes(data[6:10], "little") == 4  # input, two hidden, output


def test_model_file_rejects_bad_version_and_truncation():
    data = to_bytes(small_net())
    with pytest.raises(ValueError, match="version"):
        from_bytes(b"TBNPB2" + data[6:])
    with pytest.raises(ValueError, match="magic"):
        from_bytes(b"XXXXX1" + data[6:])
    with pytest.raises(ValueError, match="truncated"):
        from_bytes(data[:-20])


def test_copy_is_independent():
    m = small_net()
    c = m.copy()
    c.weights[0][0, 0] += 1.0
    assert m.weights[0][0, 0] != c.weights[0][0, 0]


def test_adam_zero_gradient_is_noop():
    p = np.array([1.5, -2.0])
    Adam([p]).step([p], [np.zeros(2)])
    np.testing.assert_array_equal(p, [1.5, -2.0])


def test_pr2_latent_gradient_has_latent_dim():
    m = init_mlp(7, 2, seed=0)
    gu, gp, _ = backward(m, np.zeros(7), np.zeros(2), np.ones(3))
    assert gu.shape == (7,) and gp.shape == (2,)
