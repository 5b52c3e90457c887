import struct

import numpy as np
import pytest

import svbrdf_uq.predictor as predictor_module
from svbrdf_uq.errors import (
    ContractError,
    DimensionMismatchError,
    TrainingDivergedError,
    WeightsFormatError,
    WeightsVersionError,
)
from svbrdf_uq.material import ImageGrid, MapStack, NormalMap, validate_stack
from svbrdf_uq.metrics import angular_error
from svbrdf_uq.predictor import (
    WEIGHTS_MAGIC,
    Predictor,
    PredictorConfig,
    PredictorWeights,
    feature_planes,
    gather_features,
    init_params,
    load_weights,
    loss_and_grad,
    loss_pixel,
    param_shapes,
    predict,
    save_weights,
    train,
)
from svbrdf_uq.synthdata import make_dataset
from tests.utils import random_directions


@pytest.fixture()
def raise_on_fp_errors():
    with np.errstate(over="raise", invalid="raise"):
        yield


pytestmark = pytest.mark.usefixtures("raise_on_fp_errors")


def make_weights(seed=2032, **kwargs):
    kwargs.setdefault("patch_radius", 1)
    kwargs.setdefault("hidden_widths", (8, 8))
    cfg = PredictorConfig(**kwargs)
    return PredictorWeights(cfg, tuple(init_params(cfg, np.random.default_rng(seed))))


def toy_dataset(n=4, size=16, seed=0):
    """Inputs whose luminance is the specular map; roughness is its complement."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        base = rng.uniform(0.2, 0.8, size=(size, size))
        normals = NormalMap.flat(size, size).vectors
        gt = MapStack.from_arrays(normals, base, 1.0 - base)
        pairs.append((ImageGrid(base), gt))
    return pairs


def test_config():
    cfg = PredictorConfig()
    assert cfg.n_features == 3 * 25
    assert PredictorConfig.from_dict(cfg.to_dict()) == cfg

    assert cfg.replace(hidden_widths=[4]).hidden_widths == (4,)

    with pytest.raises(ContractError):
        PredictorConfig(dropout_rate=1.0)
    with pytest.raises(ContractError):
        PredictorConfig(optimizer="lbfgs")
    with pytest.raises(ContractError):
        PredictorConfig(hidden_widths=())
    with pytest.raises(ContractError, match="Unknown"):
        PredictorConfig.from_dict({"width": 3})


def test_param_shapes():
    cfg = PredictorConfig(patch_radius=1, hidden_widths=(8, 4))
    shapes = dict(param_shapes(cfg))
    assert shapes["trunk.0.W"] == (27, 8)
    assert shapes["trunk.1.W"] == (8, 4)
    assert shapes["normals.W"] == (4, 2)
    assert shapes["roughness.b"] == (1,)

    w = make_weights(hidden_widths=(8, 4))
    w.check()

    bad = PredictorWeights(w.config, w.params[:-1])
    with pytest.raises(DimensionMismatchError):
        bad.check()


def test_features():
    rng = np.random.default_rng(2032)
    image = ImageGrid(rng.uniform(size=(5, 6)))
    planes = feature_planes(image, 1)
    assert planes.shape == (3, 7, 8)
    np.testing.assert_allclose(planes[0, 1:-1, 1:-1], image.data[..., 0] - 0.5)

    rows, cols = np.array([0, 4]), np.array([0, 5])
    x = gather_features(planes, rows, cols, 1)
    assert x.shape == (2, 27)
    # the center of each luminance patch is the pixel itself
    np.testing.assert_allclose(x[:, 4], image.data[rows, cols, 0] - 0.5)

    # a brighter column to the right is a positive x slope
    ramp = ImageGrid(np.tile(np.linspace(0.0, 1.0, 6), (5, 1)))
    planes = feature_planes(ramp, 0)
    assert np.all(planes[1] > 0.0)
    np.testing.assert_allclose(planes[2], 0.0)


def test_loss_pixel():
    a = MapStack.flat(4, 4, specular=0.2, roughness=0.5)
    b = MapStack.flat(4, 4, specular=0.4, roughness=0.4)
    assert loss_pixel(a, a) == 0.0
    assert loss_pixel(a, b) == pytest.approx(0.3)
    assert loss_pixel(a, b, (1.0, 2.0, 0.5)) == pytest.approx(0.45)

    with pytest.raises(DimensionMismatchError):
        loss_pixel(a, MapStack.flat(4, 5))


def test_loss_gradient():
    cfg = PredictorConfig(patch_radius=1, hidden_widths=(8, 8), dropout_rate=0.25)
    rng = np.random.default_rng(2032)
    params = init_params(cfg, rng)
    # keep the biases away from zero so that they are exercised too
    params = [p + rng.normal(0.0, 0.1, size=p.shape) for p in params]

    n_batch = 6
    x = rng.normal(size=(n_batch, cfg.n_features))
    targets = (
        random_directions(rng, n_batch),
        rng.uniform(size=n_batch),
        rng.uniform(size=n_batch),
    )
    mask = (rng.random((n_batch, 8)) >= cfg.dropout_rate).astype(float)

    loss, grads = loss_and_grad(params, x, targets, cfg, mask)
    assert [g.shape for g in grads] == [p.shape for p in params]

    h = 1e-6
    for p, g in zip(params, grads):
        numeric = np.empty_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up, _ = loss_and_grad(params, x, targets, cfg, mask)
            p[idx] = old - h
            down, _ = loss_and_grad(params, x, targets, cfg, mask)
            p[idx] = old
            numeric[idx] = (up - down) / (2 * h)
        np.testing.assert_allclose(g, numeric, rtol=1e-4, atol=1e-7)


def test_predict(monkeypatch):
    w = make_weights(dropout_rate=0.2)
    rng = np.random.default_rng(5)
    image = ImageGrid(rng.uniform(size=(12, 10, 3)), ppi=300.0)

    det = predict(w, image)
    assert det.shape == (12, 10)
    assert det.ppi == 300.0
    assert validate_stack(det) == []
    np.testing.assert_array_equal(predict(w, image).spec(), det.spec())

    s1 = predict(w, image, seed=3)
    s2 = predict(w, image, seed=3)
    s3 = predict(w, image, seed=4)
    np.testing.assert_array_equal(s1.rough(), s2.rough())
    assert not np.array_equal(s1.rough(), s3.rough())
    assert validate_stack(s1) == []

    # predictions are chunked but not chunk dependent
    monkeypatch.setattr(predictor_module, "_PREDICT_CHUNK", 7)
    chunked = predict(w, image, seed=3)
    np.testing.assert_allclose(chunked.rough(), s1.rough(), rtol=1e-12)

    p = Predictor(w, dropout_rate=0.0)
    np.testing.assert_array_equal(
        p.predict(image, seed=9).spec(), p.predict(image).spec()
    )


def test_predict_translation_equivariant():
    w = make_weights(patch_radius=2, dropout_rate=0.2)
    big = np.random.default_rng(8).uniform(size=(40, 40, 3))
    size, dr, dc = 32, 3, 5
    a = predict(w, ImageGrid(big[:size, :size]))
    b = predict(w, ImageGrid(big[dr : dr + size, dc : dc + size]))

    # patches and slope estimates reach one pixel past the patch radius
    m = w.config.patch_radius + 1
    inner_a = (slice(dr + m, size - m), slice(dc + m, size - m))
    inner_b = (slice(m, size - m - dr), slice(m, size - m - dc))
    for x, y in (
        (a.spec(), b.spec()),
        (a.rough(), b.rough()),
        (a.normals.vectors, b.normals.vectors),
    ):
        np.testing.assert_allclose(x[inner_a], y[inner_b], rtol=0, atol=1e-12)

def test_train():
    data = toy_dataset()
    cfg = PredictorConfig(
        patch_radius=1,
        hidden_widths=(16,),
        dropout_rate=0.0,
        learning_rate=1e-2,
        epochs=8,
        steps_per_epoch=20,
        batch_pixels=256,
        seed=3,
    )
    w, curve = train(data, cfg)
    assert curve.shape == (8,)
    assert np.all(np.isfinite(curve))
    assert curve[-1] < 0.9 * curve[0]
    assert all(p.dtype == np.float32 for p in w.params)
    w.check()

    # training is reproducible from the configured seed
    w2, curve2 = train(data, cfg)
    np.testing.assert_array_equal(curve, curve2)
    for a, b in zip(w.params, w2.params):
        np.testing.assert_array_equal(a, b)

    w3, _ = train(data, cfg.replace(seed=4))
    assert not np.array_equal(w.params[0], w3.params[0])

    _, sgd_curve = train(data, cfg.replace(optimizer="sgd", learning_rate=0.05))
    assert np.all(np.isfinite(sgd_curve))

    with pytest.raises(ContractError):
        train([], cfg)


def test_train_diverged(monkeypatch):
    monkeypatch.setattr(predictor_module, "pixel_loss", lambda *args: float("nan"))
    cfg = PredictorConfig(
        patch_radius=1, hidden_widths=(4,), epochs=1, steps_per_epoch=2
    )
    with pytest.raises(TrainingDivergedError, match="epoch 0, step 0"):
        train(toy_dataset(n=2), cfg)


def test_weights_round_trip():
    w = make_weights(dropout_rate=0.1)
    data = save_weights(w)
    assert data[:4] == WEIGHTS_MAGIC

    res = load_weights(data)
    assert res.config == w.config
    assert res.version == w.version
    for a, b in zip(res.params, w.params):
        np.testing.assert_array_equal(a, b)

    assert save_weights(res) == data


def test_weights_errors():
    data = save_weights(make_weights())

    with pytest.raises(WeightsFormatError, match="truncated"):
        load_weights(data[:5])

    with pytest.raises(WeightsFormatError, match="truncated"):
        load_weights(data[:-4])

    with pytest.raises(WeightsFormatError, match="trailing"):
        load_weights(data + b"\x00")

    with pytest.raises(WeightsFormatError, match="magic"):
        load_weights(b"XXXX" + data[4:])

    bumped = data[:4] + struct.pack("<I", 2) + data[8:]
    with pytest.raises(WeightsVersionError):
        load_weights(bumped)


@pytest.mark.parametrize(
    "config",
    [
        b"{not json",
        b"\xff\xfe",
        b'{"hidden_widths": "abc"}',
        b'{"dropout_rate": 2.0}',
        b'{"layers": 3}',
        b"[1, 2]",
    ],
)
def test_weights_corrupt_config(config):
    data = struct.pack("<4sII", WEIGHTS_MAGIC, 1, len(config)) + config
    with pytest.raises(WeightsFormatError, match="Corrupt config"):
        load_weights(data)


@pytest.fixture(scope="module")
def plain_weave():
    return make_dataset(20, ["plain_weave"], seed=0, size=64)


@pytest.mark.slow
def test_training_halves_angular_error(plain_weave):
    cfg = PredictorConfig()
    untrained = PredictorWeights(cfg, tuple(init_params(cfg, np.random.default_rng(0))))
    trained, _ = train([(s.scan, s.gt) for s in plain_weave.train()], cfg)

    def error(w):
        errors = [
            angular_error(s.gt.normals, predict(w, s.scan).normals)
            for s in plain_weave.test()
        ]
        return np.mean(errors)

    assert error(trained) <= 0.5 * error(untrained)
