import numpy as np
import pytest

from vivid import nn
from vivid.fields import flatten
from vivid.inverse_operator import (
    ConvNetModel,
    TrainConfig,
    TrainingError,
    build_vcnn,
    build_vcnn_rom,
    infer_xv,
    load_model,
    save_model,
    train,
    vcnn_forward,
    vcnn_rom_forward,
)
from vivid.io import FormatError
from vivid.observation import SensorSet, extract, observe_full, place_sensors, tessellate


def test_zero_weights_zero_output(rng):
    model = build_vcnn((50, 50), channels=4)
    assert not vcnn_forward(model, rng.standard_normal((50, 50))).any()
    rom = build_vcnn_rom((50, 50), 100, channels=4)
    out = vcnn_rom_forward(rom, rng.standard_normal((50, 50)))
    assert out.shape == (100,) and not out.any()


def test_full_head_shape(rng):
    model = build_vcnn((50, 50), channels=4, rng=rng)
    assert vcnn_forward(model, rng.standard_normal((50, 50))).shape == (50, 50)


def test_parameter_count_48():
    c = 48
    model = build_vcnn((50, 50), channels=c)
    assert model.n_parameters() == 8 * 8 * 1 * c + c + 5 * (8 * 8 * c * c + c) + (1 * 1 * c * 1 + 1)


def test_rom_pooled_shapes():
    model = build_vcnn_rom((50, 50), 100)
    shape = (1, 50, 50)
    seen = []
    for layer in model.layers:
        shape = layer.output_shape(shape)
        if isinstance(layer, nn.MaxPool2D):
            seen.append(shape)
    assert seen == [(16, 25, 25), (16, 13, 13)]
    assert model.layers[-2].n_in == 13 * 13 * 16


@pytest.mark.parametrize("shape", [(50, 50), (17, 23), (8, 8)])
def test_shape_algebra(shape, rng):
    full = build_vcnn(shape, channels=3, rng=rng)
    assert full.predict(rng.standard_normal(shape)).shape == shape
    rom = build_vcnn_rom(shape, 7, channels=3, rng=rng)
    assert rom.predict(rng.standard_normal(shape)).shape == (7,)


def test_head_mismatch(rng):
    with pytest.raises(ValueError):
        vcnn_forward(build_vcnn_rom((10, 10), 3), np.zeros((10, 10)))
    with pytest.raises(ValueError):
        vcnn_rom_forward(build_vcnn((10, 10), channels=2), np.zeros((10, 10)))
    with pytest.raises(ValueError):
        vcnn_forward(build_vcnn((10, 10), channels=2), np.zeros((10, 12)))


def test_overfit_single_sample():
    rng = np.random.default_rng(0)
    model = build_vcnn((8, 8), channels=2, n_conv=1, linear_head=True, rng=rng)
    # two ReLU units die easily; start them active on a positive input
    w = model.layers[1].params[0]
    w[:] = np.abs(w)
    x = rng.random((1, 8, 8)) + 0.5
    t = 0.5 * x
    _, hist = train(model, x, t, TrainConfig(epochs=500, batch_size=1, learning_rate=1e-2))
    assert hist[-1] < 1e-3 * hist[0]


def test_model_gradient_finite_differences():
    rng = np.random.default_rng(1)
    model = build_vcnn((6, 6), channels=2, n_conv=2, kernel=3, linear_head=True, rng=rng)
    x = rng.standard_normal((2, 6, 6))
    t = rng.standard_normal((2, 6, 6))

    def loss():
        return float(np.mean((model.forward(x) - t) ** 2))

    pred = model.forward(x)
    model.backward(2 * (pred - t) / pred.size)
    h = 1e-6
    for layer in model.trainable:
        for p, g in zip(layer.params, layer.grads):
            num = np.empty_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                fp = loss()
                p[idx] = old - h
                fm = loss()
                p[idx] = old
                num[idx] = (fp - fm) / (2 * h)
            assert np.linalg.norm(g - num) / np.linalg.norm(num) < 1e-4


def _small_data(seed=2, n=12):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, 8, 8)), rng.standard_normal((n, 8, 8))


def test_training_deterministic():
    x, t = _small_data()
    cfg = TrainConfig(epochs=3, batch_size=4, seed=5)
    a = train(build_vcnn((8, 8), channels=2, n_conv=2, rng=np.random.default_rng(0)), x, t, cfg)
    b = train(build_vcnn((8, 8), channels=2, n_conv=2, rng=np.random.default_rng(0)), x, t, cfg)
    assert a[1] == b[1]
    for la, lb in zip(a[0].layers, b[0].layers):
        for pa, pb in zip(la.params, lb.params):
            assert np.array_equal(pa, pb)


def test_permutation_sensitivity_bounded():
    x, t = _small_data()
    cfg = TrainConfig(epochs=5, batch_size=4, seed=5, learning_rate=3e-3)
    perm = np.random.default_rng(9).permutation(len(x))
    a = train(build_vcnn((8, 8), channels=2, n_conv=2, linear_head=True, rng=np.random.default_rng(0)), x, t, cfg)[1]
    b = train(build_vcnn((8, 8), channels=2, n_conv=2, linear_head=True, rng=np.random.default_rng(0)), x[perm], t[perm], cfg)[1]
    assert max(a[-1], b[-1]) / min(a[-1], b[-1]) < 10


def test_nan_loss_aborts():
    x, t = _small_data()
    t[0, 0, 0] = np.nan
    with pytest.raises(TrainingError, match="learning_rate"):
        train(build_vcnn((8, 8), channels=2, n_conv=1, rng=np.random.default_rng(0)), x, t, TrainConfig(epochs=1))


def test_train_input_checks():
    model = build_vcnn((8, 8), channels=2, n_conv=1)
    with pytest.raises(ValueError):
        train(model, np.zeros((0, 8, 8)), np.zeros((0, 8, 8)), TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        train(model, np.zeros((2, 8, 8)), np.zeros((2, 5)), TrainConfig(epochs=1))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")


def test_sgd_reduces_loss():
    x, t = _small_data()
    model = build_vcnn((8, 8), channels=2, n_conv=1, linear_head=True, rng=np.random.default_rng(0))
    hist = train(model, x, t, TrainConfig(epochs=20, batch_size=4, optimizer="sgd", learning_rate=1e-2))[1]
    assert hist[-1] < hist[0]


def test_infer_xv_composition(rng):
    model = build_vcnn((20, 20), channels=2, n_conv=2, linear_head=True, rng=rng)
    truth = rng.standard_normal((20, 20))
    sensors = extract(observe_full(truth), place_sensors(4, 4, 2, (20, 20), rng))
    expected = flatten(vcnn_forward(model, tessellate(sensors, (20, 20))))
    assert np.array_equal(infer_xv(model, sensors, (20, 20)), expected)


def test_sensor_count_changes_output_not_shape(rng):
    model = build_vcnn((50, 50), channels=2, n_conv=2, linear_head=True, rng=rng)
    truth = rng.standard_normal((50, 50))
    outs = []
    for n in (6, 10):
        s = extract(observe_full(truth), place_sensors(n, n, 3, (50, 50), np.random.default_rng(0)))
        outs.append(infer_xv(model, s, (50, 50)))
    assert outs[0].shape == outs[1].shape == (2500,)
    assert not np.array_equal(outs[0], outs[1])


@pytest.mark.parametrize("builder", ["full", "rom"])
def test_save_load_roundtrip(builder, tmp_path, rng):
    if builder == "full":
        model = build_vcnn((12, 12), channels=3, rng=rng)
    else:
        model = build_vcnn_rom((12, 12), 5, channels=3, rng=rng)
    model.layers[0].params[0][:] = (0.5, 0.1)
    save_model(tmp_path / "m.bin", model)
    back = load_model(tmp_path / "m.bin")
    x = rng.standard_normal((2, 12, 12))
    assert np.array_equal(back.predict(x), model.predict(x))
    assert (tmp_path / "m.bin").read_bytes()[:4] == b"VCNN"


def test_load_rejects_bad_files(tmp_path, rng):
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + bytes(16))
    with pytest.raises(FormatError):
        load_model(tmp_path / "bad.bin")
    model = build_vcnn((6, 6), channels=2, n_conv=1, rng=rng)
    save_model(tmp_path / "m.bin", model)
    data = (tmp_path / "m.bin").read_bytes()
    (tmp_path / "short.bin").write_bytes(data[:-8])
    with pytest.raises(FormatError):
        load_model(tmp_path / "short.bin")


def test_model_rejects_inconsistent_stack():
    with pytest.raises(ValueError):
        ConvNetModel([nn.Conv2D((3, 3), 1, 2)], 0, (5, 5))
