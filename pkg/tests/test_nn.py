import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pulsebench import nn


def dense(in_dim, out_dim, seed=0):
    return nn.Network([nn.LayerSpec("dense", in_dim, out_dim, seed)])


def set_dense(net, w, b):
    net.layers[0].params["weight"][...] = w
    net.layers[0].params["bias"][...] = b


# -- forward ------------------------------------------------------------------

def test_identity_dense_passes_input_through():
    net = dense(3, 3)
    set_dense(net, np.eye(3), 0.0)
    assert np.array_equal(net.forward(np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])


def test_scalar_dense():
    net = dense(1, 1)
    set_dense(net, [[2.0]], [1.0])
    assert net.forward(np.array([3.0]))[0] == 7.0


def test_dense_matches_hand_coded_matvec(rng):
    net = dense(4, 3, seed=5)
    w, b = net.layers[0].params["weight"], rng.standard_normal(3)
    net.layers[0].params["bias"][...] = b
    x = rng.standard_normal(4)
    expected = [sum(w[i, j] * x[j] for j in range(4)) + b[i] for i in range(3)]
    assert np.allclose(net.forward(x), expected, atol=1e-12, rtol=0)


def test_shape_error_names_layer_index():
    net = nn.Network.mlp([5, 4, 2], seed=0)
    with pytest.raises(nn.ShapeError, match="layer 0"):
        net.forward(np.zeros((2, 6)))


def test_mismatched_stack_is_rejected_at_build():
    with pytest.raises(nn.ShapeError, match="layer 1"):
        nn.Network([nn.LayerSpec("dense", 3, 4), nn.LayerSpec("dense", 5, 2)])


def test_unknown_layer_kind():
    with pytest.raises(ValueError):
        nn.LayerSpec("conv", 3, 3)


def test_forward_mode_is_validated():
    with pytest.raises(ValueError):
        dense(2, 2).forward(np.zeros(2), mode="eval")


def test_layer_shapes():
    net = nn.Network([nn.LayerSpec("dense", 6, 4), nn.LayerSpec("batchnorm", 4, 4)])
    assert net.layers[0].params["weight"].shape == (4, 6)
    assert net.layers[0].params["bias"].shape == (4,)
    assert {k: v.shape for k, v in net.layers[1].params.items()} == {"gamma": (4,), "beta": (4,)}
    assert set(net.layers[1].buffers) == {"running_mean", "running_var"}


def test_init_is_seeded_uniform_glorot():
    a = nn.Dense(nn.LayerSpec("dense", 30, 20, init_seed=3)).params["weight"]
    b = nn.Dense(nn.LayerSpec("dense", 30, 20, init_seed=3)).params["weight"]
    c = nn.Dense(nn.LayerSpec("dense", 30, 20, init_seed=4)).params["weight"]
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.abs(a).max() <= math.sqrt(6 / 50)


def test_batchnorm_infer_uses_running_stats(rng):
    net = nn.Network([nn.LayerSpec("batchnorm", 3, 3)])
    bn = net.layers[0]
    bn.buffers["running_mean"][...] = [1.0, 2.0, 3.0]
    bn.buffers["running_var"][...] = [4.0, 1.0, 0.25]
    x = rng.standard_normal((5, 3))
    expected = (x - [1, 2, 3]) / np.sqrt(np.array([4.0, 1.0, 0.25]) + nn.BN_EPS)
    assert np.allclose(net.forward(x), expected, atol=1e-14)


def test_batchnorm_infer_is_affine(rng):
    net = nn.Network([nn.LayerSpec("batchnorm", 4, 4)])
    net.forward(rng.standard_normal((8, 4)) * 3 + 1, "train")
    a, b = rng.standard_normal(4), rng.standard_normal(4)
    f = net.forward
    # superposition for affine maps: f(a + b) - f(0) = (f(a) - f(0)) + (f(b) - f(0))
    zero = np.zeros(4)
    assert np.allclose(f(a + b) - f(zero), (f(a) - f(zero)) + (f(b) - f(zero)), atol=1e-12)


def test_batchnorm_running_stats_update(rng):
    net = nn.Network([nn.LayerSpec("batchnorm", 2, 2)])
    x = rng.standard_normal((10, 2))
    net.forward(x, "train")
    bn = net.layers[0]
    assert np.allclose(bn.buffers["running_mean"], 0.1 * x.mean(0))
    assert np.allclose(bn.buffers["running_var"], 0.9 + 0.1 * x.var(0, ddof=1))


# -- backward -----------------------------------------------------------------

def test_backward_before_forward_is_an_error():
    net = dense(2, 2)
    with pytest.raises(RuntimeError):
        net.backward(np.ones(2))
    net.forward(np.ones(2))  # infer mode does not arm backward
    with pytest.raises(RuntimeError):
        net.backward(np.ones(2))


def test_gradient_shapes_mirror_parameters(rng):
    net = nn.Network.mlp([5, 7, 3], batchnorm=True)
    net.forward(rng.standard_normal((4, 5)), "train")
    net.backward(rng.standard_normal((4, 3)))
    for (_, _, p), g in zip(net.parameters(), net.gradients()):
        assert p.shape == g.shape


def test_zero_upstream_gradient_gives_zero_gradients(rng):
    net = nn.Network.mlp([5, 7, 3], batchnorm=True, output="sigmoid")
    net.forward(rng.standard_normal((4, 5)), "train")
    net.backward(np.zeros((4, 3)))
    assert all(np.all(g == 0) for g in net.gradients())


def test_linear_network_gradient_is_exact(rng):
    net = nn.Network.mlp([4, 3, 2], hidden=(), seed=2)
    x = rng.standard_normal((6, 4))
    t = rng.standard_normal((6, 2))
    # the loss is quadratic along every single coordinate, so a wide step is exact
    err = nn.check_gradients(net, x, lambda o: nn.mse_loss(o, t), eps=1e-3, max_coords=1000)
    assert err < 1e-10


KINDS = ["relu", "leaky_relu", "sigmoid", "tanh", "batchnorm"]


@pytest.mark.parametrize("kind", KINDS + ["dense"])
@pytest.mark.parametrize("seed", range(10))
def test_every_layer_kind_passes_coordinate_gradient_check(kind, seed):
    rng = np.random.default_rng(seed)
    if kind == "dense":
        net = nn.Network([nn.LayerSpec("dense", 5, 4, seed)])
    else:
        net = nn.Network([nn.LayerSpec("dense", 5, 4, seed), nn.LayerSpec(kind, 4, 4, slope=0.1)])
    x = rng.standard_normal((6, 5))
    t = rng.standard_normal((6, 4))
    net.forward(x, "train")
    out = net.forward(x, "train")
    net.backward(nn.mse_loss(out, t)[1])
    analytic = [g.copy() for g in net.gradients()]

    saved = [b.copy() for l in net.layers for b in l.buffers.values()]

    def loss():
        v = nn.mse_loss(net.forward(x, "train"), t)[0]
        for dst, src in zip((b for l in net.layers for b in l.buffers.values()), saved):
            dst[...] = src
        return v

    # one ulp of the loss, seen through a 2 * eps difference, is the finite-difference floor
    floor = 4 * np.spacing(loss()) / 1e-6
    for (_, _, p), ga in zip(net.parameters(), analytic):
        for i in range(p.size):
            fd = nn.numeric_gradient(loss, p.reshape(-1), i, 1e-6)
            a = ga.reshape(-1)[i]
            if max(abs(a), abs(fd)) < 1e-6:
                # both vanish: only absolute agreement is meaningful
                assert abs(a - fd) <= floor
                continue
            assert abs(a - fd) / max(abs(a), abs(fd), 1e-12) < 1e-6


def test_batchnorm_leaky_network_gradient_check(rng):
    net = nn.Network.mlp([6, 8, 5, 2], batchnorm=True, hidden=("leaky_relu",), seed=4)
    x = rng.standard_normal((7, 6))
    t = rng.standard_normal((7, 2))
    assert nn.check_gradients(net, x, lambda o: nn.mse_loss(o, t), max_coords=100) < 1e-6
    assert nn.directional_check(net, x, lambda o: nn.mse_loss(o, t)) < 1e-6


def test_check_gradients_leaves_network_unchanged(rng):
    net = nn.Network.mlp([4, 5, 2], batchnorm=True)
    before = nn.params_digest(net)
    x = rng.standard_normal((5, 4))
    nn.check_gradients(net, x, lambda o: nn.mse_loss(o, np.zeros_like(o)))
    assert nn.params_digest(net) == before


def test_check_gradients_detects_a_wrong_backward(rng, monkeypatch):
    net = nn.Network.mlp([4, 3, 2], hidden=("tanh",))
    x = rng.standard_normal((5, 4))
    orig = nn.Tanh.backward
    monkeypatch.setattr(nn.Tanh, "backward", lambda self, g: 1.1 * orig(self, g))
    assert nn.check_gradients(net, x, lambda o: nn.mse_loss(o, np.zeros_like(o))) > 1e-3


# -- losses ---------------------------------------------------------------------

def test_mse_examples():
    assert nn.mse_loss(np.ones((2, 3)), np.ones((2, 3)))[0] == 0.0
    assert nn.mse_loss(np.array([1.0, 2.0]), np.zeros(2))[0] == 2.5
    value, grad = nn.mse_loss(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros((2, 2)))
    assert value == 3.0
    assert np.array_equal(grad, [[1.0, 2.0], [0.0, 1.0]])


def test_mse_shape_mismatch():
    with pytest.raises(nn.ShapeError):
        nn.mse_loss(np.zeros(3), np.zeros(2))


def test_mse_gradient_matches_finite_differences(rng):
    p = rng.standard_normal((3, 4))
    t = rng.standard_normal((3, 4))
    _, g = nn.mse_loss(p, t)
    for i in range(p.size):
        fd = nn.numeric_gradient(lambda: nn.mse_loss(p, t)[0], p.reshape(-1), i)
        assert abs(fd - g.reshape(-1)[i]) < 1e-8


def test_bce_examples():
    assert math.isclose(nn.bce_loss(np.array([0.5]), 1.0)[0], math.log(2), rel_tol=1e-12)
    assert math.isclose(nn.bce_loss(np.array([0.5]), 0.0)[0], math.log(2), rel_tol=1e-12)
    assert math.isclose(nn.bce_loss(np.array([1 - 1e-7]), 1.0)[0], 1e-7, rel_tol=1e-6)
    pair = nn.bce_loss(np.array([0.5]), 1.0)[0] + nn.bce_loss(np.array([0.5]), 0.0)[0]
    assert math.isclose(pair, 1.386294, abs_tol=1e-6)


def test_bce_clamps_extreme_scores():
    value, grad = nn.bce_loss(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
    assert np.isfinite(value) and np.all(grad == 0)


@given(st.floats(1e-3, 1 - 1e-3), st.sampled_from([0.0, 1.0]))
def test_bce_gradient_matches_finite_differences(s, y):
    arr = np.array([s])
    _, g = nn.bce_loss(arr, y)
    fd = nn.numeric_gradient(lambda: nn.bce_loss(arr, y)[0], arr, 0, 1e-7)
    assert abs(g[0] - fd) <= 1e-5 * max(1.0, abs(fd))


# -- optimizer ------------------------------------------------------------------

def test_sgd_zero_gradient_no_decay_is_identity():
    p = np.array([1.0, -2.0])
    nn.SGD(0.1, 0.9).step([p], [np.zeros(2)])
    assert np.array_equal(p, [1.0, -2.0])


def test_sgd_quadratic_step():
    p = np.array([0.0])
    nn.SGD(0.1, 0.0).step([p], [2 * (p - 3)])
    assert math.isclose(p[0], 0.6, abs_tol=1e-15)


def test_sgd_momentum_second_displacement():
    p = np.array([0.0])
    opt = nn.SGD(0.1, 0.9)
    opt.step([p], [np.array([1.0])])
    first = p[0]
    opt.step([p], [np.array([1.0])])
    assert math.isclose((p[0] - first) / first, 1.9, rel_tol=1e-12)


def test_sgd_non_finite_gradient_aborts():
    with pytest.raises(nn.TrainingDiverged, match="array 0"):
        nn.SGD().step([np.zeros(2)], [np.array([np.nan, 0.0])])


@pytest.mark.parametrize("kw", [dict(learning_rate=0), dict(momentum=1.0), dict(weight_decay=-1)])
def test_sgd_rejects_bad_settings(kw):
    with pytest.raises(ValueError):
        nn.SGD(**kw)


@given(st.floats(1e-3, 0.5), st.floats(1e-3, 1.0))
def test_weight_decay_only_step_shrinks_norm(lr, wd):
    rng = np.random.default_rng(0)
    params = [rng.standard_normal((3, 2)), rng.standard_normal(4)]
    before = [np.linalg.norm(p) for p in params]
    nn.SGD(lr, 0.0, wd).step(params, [np.zeros_like(p) for p in params])
    assert all(np.linalg.norm(p) < b for p, b in zip(params, before))


def test_training_is_deterministic(rng):
    x = rng.standard_normal((32, 5))
    t = rng.standard_normal((32, 2))

    def run():
        net = nn.Network.mlp([5, 8, 2], batchnorm=True, seed=7)
        opt = nn.SGD(0.05, 0.9, 1e-4)
        r = np.random.default_rng(3)
        for _ in range(5):
            for idx in nn.minibatches(32, 8, r):
                nn.train_step(net, opt, x[idx], t[idx])
        return nn.params_digest(net)

    assert run() == run()


def test_minibatches_cover_everything_once():
    idx = np.concatenate(list(nn.minibatches(10, 3, np.random.default_rng(0), drop_singleton=False)))
    assert sorted(idx) == list(range(10))


# -- serialization --------------------------------------------------------------

def test_save_load_round_trip(tmp_path, rng):
    net = nn.Network.mlp([6, 5, 3], batchnorm=True, output="sigmoid", seed=9, role="D2")
    net.forward(rng.standard_normal((4, 6)), "train")
    path = tmp_path / "w.bin"
    nn.save_params(net, path, extra={"note": 1})
    loaded, extra = nn.load_params(path)
    probe = rng.standard_normal((3, 6))
    assert np.array_equal(net.forward(probe), loaded.forward(probe))
    assert nn.params_digest(net) == nn.params_digest(loaded)
    assert loaded.role == "D2" and loaded.seed == 9 and extra == {"note": 1}
    header, _ = nn.read_header(path)
    assert header["layers"][0]["kind"] == "dense"


def test_truncated_blob_is_reported(tmp_path):
    path = tmp_path / "w.bin"
    nn.save_params(dense(3, 2), path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(nn.CorruptWeightsError, match="expected 64 bytes, found 56"):
        nn.load_params(path)


def test_declared_byte_count_mismatch_is_reported(tmp_path):
    import json

    path = tmp_path / "w.bin"
    nn.save_params(dense(3, 2), path)
    head, blob = path.read_bytes().split(b"\n", 1)
    h = json.loads(head)
    h["byte_count"] = 80
    path.write_bytes(json.dumps(h).encode() + b"\n" + blob)
    with pytest.raises(nn.CorruptWeightsError, match="declares 80 bytes.*need 64 bytes"):
        nn.load_params(path)


def test_garbage_header_is_reported(tmp_path):
    path = tmp_path / "w.bin"
    path.write_bytes(b"\xff\xfe not json\n1234")
    with pytest.raises(nn.CorruptWeightsError):
        nn.load_params(path)


def test_blob_layout_is_weights_then_bias_little_endian(tmp_path):
    net = dense(2, 1)
    set_dense(net, [[1.5, -2.0]], [0.25])
    path = tmp_path / "w.bin"
    nn.save_params(net, path)
    blob = path.read_bytes().split(b"\n", 1)[1]
    assert np.array_equal(np.frombuffer(blob, "<f8"), [1.5, -2.0, 0.25])
