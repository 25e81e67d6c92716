import numpy as np
import pytest
from scipy import signal

from gradcheck import tiny_config, unet_gradcheck
from slabrate.neuralseg import layers as L
from slabrate.neuralseg.augment import AugmentConfig, Augmenter
from slabrate.neuralseg.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from slabrate.neuralseg.inference import SharedMaskRNG, predict_eval, predict_mc, predict_mc_batch
from slabrate.neuralseg.losses import LN2, bce_loss, binary_entropy, sigmoid
from slabrate.neuralseg.optim import AdamState, adam_step
from slabrate.neuralseg.training import TrainConfig, TrainingDivergedError, train
from slabrate.neuralseg.unet import ShapeError, UNetConfig, build_unet, forward, output_shape


def expected_param_count(depth, base, c_in):
    def dc(ci, co):
        return 9 * ci * co + 9 * co * co + 4 * co

    ch = [base * 2 ** l for l in range(depth + 1)]
    n = dc(c_in, ch[0]) + sum(dc(ch[l - 1], ch[l]) for l in range(1, depth)) + dc(ch[depth - 1], ch[depth])
    for l in range(depth, 0, -1):
        n += 4 * ch[l] * ch[l - 1] + ch[l - 1] + dc(2 * ch[l - 1], ch[l - 1])
    return n + ch[0] + 1


# -- layers ------------------------------------------------------------------

def test_conv_matches_scipy_correlate(rng):
    x = rng.standard_normal((2, 7, 9, 3))
    w = rng.standard_normal((3, 3, 3, 4))
    b = rng.standard_normal(4)
    out, _ = L.conv2d_forward(x, w, b)
    for n in range(2):
        for o in range(4):
            ref = sum(signal.correlate2d(x[n, :, :, c], w[:, :, c, o], mode="same") for c in range(3)) + b[o]
            np.testing.assert_allclose(out[n, :, :, o], ref, atol=1e-12)


def test_even_kernel_pads_after(rng):
    # 2x2 'same': output (i, j) sees inputs (i..i+1, j..j+1)
    x = rng.standard_normal((1, 4, 5, 1))
    w = rng.standard_normal((2, 2, 1, 1))
    out, _ = L.conv2d_forward(x, w)
    xp = np.pad(x[0, :, :, 0], ((0, 1), (0, 1)))
    ref = np.array([[np.sum(xp[i:i + 2, j:j + 2] * w[:, :, 0, 0]) for j in range(5)] for i in range(4)])
    np.testing.assert_allclose(out[0, :, :, 0], ref, atol=1e-12)


def test_maxpool_tie_routes_to_first():
    x = np.ones((1, 2, 2, 1))
    out, cache = L.maxpool_forward(x)
    d = L.maxpool_backward(np.full((1, 1, 1, 1), 3.0), cache)
    assert out[0, 0, 0, 0] == 1.0
    np.testing.assert_array_equal(d[0, :, :, 0], [[3.0, 0.0], [0.0, 0.0]])


def test_upsample_and_adjoint(rng):
    x = rng.standard_normal((1, 3, 2, 2))
    u = L.upsample_forward(x)
    assert u.shape == (1, 6, 4, 2) and np.all(u[0, 1, 1] == x[0, 0, 0])
    d = rng.standard_normal(u.shape)
    assert np.sum(u * d) == pytest.approx(np.sum(x * L.upsample_backward(d)))


def test_dropout_inverted_scaling(rng):
    x = np.ones((1, 50, 50, 4))
    y, keep = L.dropout_forward(x, 0.5, np.random.default_rng(0))
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1.0) < 0.05


# -- architecture ---------------------------------------------------------------

def test_param_count_tiny():
    p = build_unet(tiny_config())
    assert p.n_params == expected_param_count(2, 2, 3) == 1959


@pytest.mark.parametrize("depth, base, c_in", [(1, 3, 1), (3, 2, 3), (4, 8, 3)])
def test_param_count_formula(depth, base, c_in):
    cfg = UNetConfig(depth=depth, base_channels=base, in_channels=c_in, height=16, width=16)
    assert build_unet(cfg).n_params == expected_param_count(depth, base, c_in)


def test_output_shape_full_size():
    assert output_shape(UNetConfig(depth=4, height=800, width=800)) == (1, 1, 800, 800)


def test_divisibility_error():
    with pytest.raises(ShapeError):
        build_unet(UNetConfig(depth=4, base_channels=2, height=40, width=40))
    with pytest.raises(ShapeError):
        build_unet(UNetConfig(depth=4, base_channels=2, height=64, width=56))
    # 48 = 3 * 16 is a valid depth-4 size
    assert build_unet(UNetConfig(depth=4, base_channels=2, height=48, width=48)).config.height == 48


def test_forward_shapes_and_errors(rng):
    p = build_unet(tiny_config(dtype="float32"))
    z = forward(p, rng.random((1, 3, 16, 16)))
    assert z.shape == (1, 1, 16, 16)
    assert forward(p, rng.random((2, 3, 32, 8))).shape == (2, 1, 32, 8)
    with pytest.raises(ShapeError):
        forward(p, rng.random((1, 1, 16, 16)))
    with pytest.raises(ShapeError):
        forward(p, rng.random((1, 3, 18, 16)))
    with pytest.raises(ValueError):
        forward(p, rng.random((1, 3, 16, 16)), "mc")  # dropout needs an rng


def test_forward_rejects_non_finite(rng):
    p = build_unet(tiny_config())
    p.weights["out.b"][:] = np.inf
    with pytest.raises(FloatingPointError):
        forward(p, rng.random((1, 3, 16, 16)))


def test_init_deterministic():
    a, b = build_unet(tiny_config()), build_unet(tiny_config())
    assert all(np.array_equal(a.weights[k], b.weights[k]) for k in a.weights)
    c = build_unet(tiny_config(seed=8))
    assert not np.array_equal(a.weights["enc1.conv1.w"], c.weights["enc1.conv1.w"])


def test_eval_deterministic_and_mc_without_dropout(rng):
    x = rng.random((2, 3, 16, 16))
    p = build_unet(tiny_config(dropout_p=0.0))
    a, b = forward(p, x, "eval"), forward(p, x, "eval")
    assert np.array_equal(a, b)
    assert np.array_equal(forward(p, x, "mc", rng=np.random.default_rng(1)), a)


def test_mc_mode_uses_running_stats(rng):
    x = rng.random((2, 3, 16, 16))
    p = build_unet(tiny_config())
    before = {k: v.copy() for k, v in p.buffers.items()}
    forward(p, x, "mc", rng=np.random.default_rng(0))
    assert all(np.array_equal(before[k], p.buffers[k]) for k in before)
    forward(p, x, "train", rng=np.random.default_rng(0))
    assert not np.array_equal(before["enc1.bn1.mean"], p.buffers["enc1.bn1.mean"])


def test_dropout_sites_configurable():
    cfg = tiny_config()
    assert cfg.active_dropout_sites() == ("enc2", "mid", "dec2")
    assert tiny_config(dropout_sites=["mid"]).active_dropout_sites() == ("mid",)
    with pytest.raises(ValueError):
        tiny_config(dropout_sites=["enc9"])


@pytest.mark.parametrize("upsample", ["nearest", "transpose"])
def test_gradients_match_finite_differences(upsample):
    worst = unet_gradcheck(tiny_config(upsample=upsample))
    assert max(worst.values()) < 1e-4, max(worst.items(), key=lambda kv: kv[1])


# -- loss, entropy, optimizer -------------------------------------------------------

def test_bce_zero_logits(rng):
    t = (rng.random((2, 1, 4, 4)) > 0.5).astype(float)
    loss, _ = bce_loss(np.zeros_like(t), t)
    assert abs(loss - np.log(2)) <= 1e-12


def test_bce_saturated():
    t = np.array([[1.0, 0.0]])
    assert bce_loss(np.array([[40.0, -40.0]]), t)[0] < 1e-6
    assert np.isfinite(bce_loss(np.array([[1e4, -1e4]]), t)[0])


def test_bce_gradient_finite_difference(rng):
    z = rng.standard_normal((2, 1, 3, 3))
    t = (rng.random(z.shape) > 0.5).astype(float)
    _, g = bce_loss(z, t)
    h = 1e-6
    num = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        num[idx] = (bce_loss(zp, t)[0] - bce_loss(zm, t)[0]) / (2 * h)
    rel = np.abs(g - num) / np.maximum(np.abs(g), np.abs(num))
    assert rel.max() < 1e-5


def test_bce_rejects_bad_targets():
    with pytest.raises(ValueError):
        bce_loss(np.zeros((1, 2)), np.array([[0.5, 1.0]]))
    with pytest.raises(ValueError):
        bce_loss(np.zeros((1, 2)), np.zeros((2, 1)))


def test_sigmoid_stable():
    s = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert s[0] == 0.0 and s[1] == 0.5 and s[2] == 1.0


def test_entropy_values(rng):
    assert abs(binary_entropy(0.5) - LN2) <= 1e-12
    assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
    p = rng.random((20, 20))
    np.testing.assert_allclose(binary_entropy(p), binary_entropy(1 - p), atol=1e-15)


def test_adam_zero_gradient():
    w = {"a": np.array([1.0, -2.0])}
    st = AdamState.zeros_like(w)
    adam_step(w, {"a": np.zeros(2)}, st, 1)
    np.testing.assert_array_equal(w["a"], [1.0, -2.0])


def test_adam_first_step():
    g = np.array([0.3, -2.0, 1e-3])
    w = {"a": np.zeros(3)}
    adam_step(w, {"a": g}, AdamState.zeros_like(w), 1, lr=0.01)
    np.testing.assert_allclose(w["a"], -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)


def test_adam_constant_gradient_limit():
    w = {"a": np.zeros(2)}
    st = AdamState.zeros_like(w)
    g = np.array([0.7, -0.02])
    for t in range(1, 501):
        prev = w["a"].copy()
        adam_step(w, {"a": g}, st, t, lr=0.01)
    np.testing.assert_allclose(w["a"] - prev, -0.01 * np.sign(g), rtol=1e-6)


def test_adam_shape_and_step_errors():
    w = {"a": np.zeros(2)}
    with pytest.raises(ValueError):
        adam_step(w, {"a": np.zeros(3)}, AdamState.zeros_like(w), 1)
    with pytest.raises(ValueError):
        adam_step(w, {"a": np.zeros(2)}, AdamState.zeros_like(w), 0)


# -- training -----------------------------------------------------------------------

def toy_set(n=10, size=16, seed=0):
    r = np.random.default_rng(seed)
    imgs, masks = [], []
    for _ in range(n):
        level = r.integers(4, 12)
        m = np.zeros((size, size), np.uint8)
        m[level:] = 1
        img = np.where(m[None], 0.85, 0.15) + 0.05 * r.standard_normal((3, size, size))
        imgs.append(np.clip(img, 0, 1))
        masks.append(m)
    return np.array(imgs), np.array(masks)


def small_net(**kw):
    return UNetConfig(**{**dict(depth=2, base_channels=4, height=16, width=16, seed=0, dropout_p=0.2), **kw})


def test_train_smoke_reduces_loss():
    data = toy_set()
    _, hist = train(data, None, small_net(), TrainConfig(max_epochs=20, patience=50, batch_size=5))
    assert hist.epochs == 20
    assert hist.train_loss[-1] < hist.train_loss[0]


def test_patience_one_with_frozen_metric():
    _, hist = train(toy_set(4), None, small_net(), TrainConfig(max_epochs=10, patience=1),
                    val_metric=lambda p: 1.0)
    assert hist.epochs == 2 and hist.stop_reason == "patience" and hist.best_epoch == 1


def test_returns_best_parameters():
    data = toy_set(6)
    metrics = iter([3.0, 1.0, 2.0, 2.5])
    snapshots = []

    def metric(p):
        snapshots.append(p.copy())
        return next(metrics)

    best, hist = train(data, None, small_net(), TrainConfig(max_epochs=4, patience=5), val_metric=metric)
    assert hist.best_epoch == 2
    assert all(np.array_equal(best.weights[k], snapshots[1].weights[k]) for k in best.weights)


def test_training_is_deterministic():
    data = toy_set(6)
    aug = Augmenter(AugmentConfig(max_rotation_deg=30))
    runs = [train(data, toy_set(2, seed=1), small_net(), TrainConfig(max_epochs=3, seed=4), aug)
            for _ in range(2)]
    (pa, ha), (pb, hb) = runs
    assert ha.train_loss == hb.train_loss and ha.val_metric == hb.val_metric
    assert all(pa.weights[k].tobytes() == pb.weights[k].tobytes() for k in pa.weights)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_divergence_reports_epoch():
    with pytest.raises(TrainingDivergedError) as exc:
        train(toy_set(4), None, small_net(), TrainConfig(max_epochs=3, learning_rate=1e30))
    assert exc.value.epoch >= 1


def test_train_input_errors():
    with pytest.raises(ValueError):
        train((np.zeros((0, 3, 16, 16)), np.zeros((0, 16, 16))), None, small_net(), TrainConfig())
    with pytest.raises(ValueError):
        train(toy_set(2), None, small_net(in_channels=1), TrainConfig())
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)


def test_augmenter_pairs_image_and_mask(rng):
    img = np.zeros((3, 16, 16))
    img[:, :, 8:] = 1.0
    mask = (img[0] > 0.5).astype(np.uint8)
    for s in range(10):
        a, m = Augmenter(AugmentConfig(max_rotation_deg=0))(img, mask, np.random.default_rng(s))
        assert np.array_equal(a[0] > 0.5, m == 1)
    a, m = Augmenter()(img, mask, np.random.default_rng(3))
    assert set(np.unique(m)) <= {0, 1} and a.min() >= 0 and a.max() <= 1


# -- inference ------------------------------------------------------------------------

def test_predict_mc_without_dropout_equals_eval(rng):
    p = build_unet(tiny_config(dropout_p=0.0))
    x = rng.random((3, 16, 16))
    prob, mask, u = predict_mc(p, x, samples=20)
    ref = predict_eval(p, x[None])[0]
    np.testing.assert_allclose(prob, ref, rtol=1e-12, atol=1e-15)
    assert np.array_equal(mask, (prob >= 0.5).astype(np.uint8))
    np.testing.assert_allclose(u, binary_entropy(prob))


def test_predict_mc_bounds_and_determinism(rng):
    p = build_unet(tiny_config())
    x = rng.random((2, 3, 16, 16))
    a = predict_mc_batch(p, x, samples=5, seed=3)
    b = predict_mc_batch(p, x, samples=5, seed=3)
    for u, v in zip(a, b):
        assert np.array_equal(u, v)
    prob, _, u = a
    assert prob.min() >= 0 and prob.max() <= 1
    assert u.min() >= 0 and u.max() <= LN2


def test_predict_mc_independent_of_batching(rng):
    p = build_unet(tiny_config())
    x = rng.random((3, 3, 16, 16))
    together = predict_mc_batch(p, x, samples=4, seed=1)[0]
    alone = np.stack([predict_mc_batch(p, x[i:i + 1], samples=4, seed=1)[0][0] for i in range(3)])
    np.testing.assert_allclose(together, alone, rtol=0, atol=1e-6)


def test_predict_mc_order_independent(rng):
    p = build_unet(tiny_config())
    x = rng.random((1, 3, 16, 16))
    mean = predict_mc_batch(p, x, samples=6, seed=2)[0]
    probs = []
    for s in reversed(range(6)):
        r = SharedMaskRNG(np.random.default_rng(np.random.SeedSequence(2, spawn_key=(s,))))
        probs.append(sigmoid(forward(p, x.astype(np.float64), "mc", rng=r))[:, 0])
    rev = np.sort(np.array(probs), axis=0).sum(axis=0) / 6
    assert np.array_equal(mean, rev)


def test_predict_mc_needs_samples(rng):
    with pytest.raises(ValueError):
        predict_mc(build_unet(tiny_config()), rng.random((3, 16, 16)), samples=0)


# -- checkpoint -------------------------------------------------------------------------

def test_checkpoint_round_trip_and_bytes(tmp_path):
    data = toy_set(4)
    tc = TrainConfig(max_epochs=2)
    params, hist = train(data, None, small_net(), tc)
    a = save_checkpoint(tmp_path / "a.ckpt", params, tc, hist, hist.optimizer, extra={"note": 1})
    b = save_checkpoint(tmp_path / "b.ckpt", params, tc, hist, hist.optimizer, extra={"note": 1})
    assert a.read_bytes() == b.read_bytes()
    p2, meta, opt = load_checkpoint(a)
    assert p2.config == params.config
    for k in params.weights:
        assert p2.weights[k].dtype == params.weights[k].dtype
        assert np.array_equal(p2.weights[k], params.weights[k])
    for k in params.buffers:
        assert np.array_equal(p2.buffers[k], params.buffers[k])
    assert opt.t == hist.optimizer.t and all(np.array_equal(opt.m[k], hist.optimizer.m[k]) for k in opt.m)
    assert meta["history"]["train_loss"] == hist.train_loss
    assert meta["train"]["batch_size"] == 5 and meta["extra"] == {"note": 1}
    # readable with plain numpy
    with np.load(a) as z:
        assert "weights/out.b.npy" in z.files or "weights/out.b" in z.files


def test_checkpoint_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "none.ckpt")
    (tmp_path / "bad.ckpt").write_bytes(b"garbage")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.ckpt")
