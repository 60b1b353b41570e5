"""Voronoi-tessellation CNN inverse operators.

Two heads share one layer toolkit (``vivid.nn``):

* full field (VCNN): six same-padded 8x8 conv + ReLU layers, then a 1x1
  conv to one channel (ReLU by default, linear with ``linear_head``);
* latent (VCNN-ROM): a conv/maxpool encoder followed by a dense layer to
  the q POD coefficients.

Both carry fixed ``Affine`` layers at the ends for data normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .fields import flatten
from .io import FormatError, read_container, write_container
from .observation import SensorSet, TessellatedField, tessellate

HEAD_FULL, HEAD_LATENT = 0, 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    channels: int = 16
    linear_head: bool = True
    loss: str = "mse"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0 or self.channels < 1:
            raise ValueError("training hyperparameters must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss != "mse":
            raise ValueError("only mean-squared error is supported")


@dataclass
class ConvNetModel:
    layers: list[nn.Layer]
    head: int
    input_shape: tuple[int, int]
    q: int = 0
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        shape = (1, *self.input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
        expected = (1, *self.input_shape) if self.head == HEAD_FULL else (self.q,)
        if shape != expected:
            raise ValueError(f"layer stack produces {shape}, head expects {expected}")

    @property
    def trainable(self) -> list[nn.Layer]:
        return [layer for layer in self.layers if layer.trainable and layer.params]

    def n_parameters(self) -> int:
        return sum(p.size for layer in self.trainable for p in layer.params)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch forward: (B, H, W) -> (B, H, W) or (B, q)."""
        out = x[:, None, :, :]
        for layer in self.layers:
            out = layer.forward(out)
        return out[:, 0] if self.head == HEAD_FULL else out

    def backward(self, grad_out: np.ndarray) -> None:
        grad = grad_out[:, None] if self.head == HEAD_FULL else grad_out
        for layer in reversed(self.layers):
            grad = layer.backward(grad)

    def predict(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match model input {self.input_shape}")
        out = np.concatenate([self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)])
        return out[0] if single else out


def build_vcnn(
    shape: tuple[int, int],
    channels: int = 48,
    n_conv: int = 6,
    kernel: int = 8,
    linear_head: bool = False,
    rng: np.random.Generator | None = None,
) -> ConvNetModel:
    layers: list[nn.Layer] = [nn.Affine()]
    cin = 1
    for _ in range(n_conv):
        layers += [nn.Conv2D((kernel, kernel), cin, channels, rng), nn.ReLU()]
        cin = channels
    layers.append(nn.Conv2D((1, 1), cin, 1, rng))
    if not linear_head:
        layers.append(nn.ReLU())
    layers.append(nn.Affine())
    return ConvNetModel(layers, HEAD_FULL, tuple(shape))


def build_vcnn_rom(shape: tuple[int, int], q: int, channels: int = 16, rng: np.random.Generator | None = None) -> ConvNetModel:
    h4, w4 = -(-shape[0] // 4), -(-shape[1] // 4)
    c = channels
    layers = [
        nn.Affine(),
        nn.Conv2D((8, 8), 1, c, rng), nn.ReLU(),
        nn.Conv2D((8, 8), c, c, rng), nn.ReLU(),
        nn.MaxPool2D(),
        nn.Conv2D((4, 4), c, c, rng), nn.ReLU(),
        nn.MaxPool2D(),
        nn.Conv2D((4, 4), c, c, rng), nn.ReLU(),
        nn.Flatten(),
        nn.Dense(h4 * w4 * c, q, rng),
        nn.Affine(),
    ]
    return ConvNetModel(layers, HEAD_LATENT, tuple(shape), q=q)


def set_normalization(model: ConvNetModel, inputs: np.ndarray, targets: np.ndarray) -> None:
    """Scale inputs to unit RMS and outputs to the target RMS."""
    in_rms = float(np.sqrt(np.mean(np.square(inputs)))) or 1.0
    out_rms = float(np.sqrt(np.mean(np.square(targets)))) or 1.0
    model.layers[0].params[0][:] = (1.0 / in_rms, 0.0)
    model.layers[-1].params[0][:] = (out_rms, 0.0)


def _as_input(y_tess) -> np.ndarray:
    return y_tess.values if isinstance(y_tess, TessellatedField) else np.asarray(y_tess, dtype=float)


def vcnn_forward(model: ConvNetModel, y_tess) -> np.ndarray:
    if model.head != HEAD_FULL:
        raise ValueError("model does not have a full-field head")
    return model.predict(_as_input(y_tess))


def vcnn_rom_forward(model: ConvNetModel, y_tess) -> np.ndarray:
    if model.head != HEAD_LATENT:
        raise ValueError("model does not have a latent head")
    return model.predict(_as_input(y_tess))


def infer_xv(model: ConvNetModel, sensors: SensorSet, shape: tuple[int, int]) -> np.ndarray:
    """Tessellate the sensors, run the full-field network, flatten."""
    return flatten(vcnn_forward(model, tessellate(sensors, shape)))


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _SGD:
    def __init__(self, params, lr):
        self.params, self.lr = params, lr

    def step(self, grads):
        for p, g in zip(self.params, grads):
            p -= self.lr * g


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def train(model: ConvNetModel, inputs: np.ndarray, targets: np.ndarray, cfg: TrainConfig, log=None):
    """Mini-batch MSE training; returns the model and its per-epoch loss history."""
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if len(inputs) == 0 or len(inputs) != len(targets):
        raise ValueError("need a nonempty dataset with one target per input")
    expected = model.input_shape if model.head == HEAD_FULL else (model.q,)
    if targets.shape[1:] != expected:
        raise ValueError(f"targets of shape {targets.shape[1:]} do not match head output {expected}")
    params = [p for layer in model.trainable for p in layer.params]
    grads = [g for layer in model.trainable for g in layer.grads]
    opt = _Adam(params, cfg.learning_rate) if cfg.optimizer == "adam" else _SGD(params, cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    n = len(inputs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            pred = model.forward(inputs[idx])
            loss, dpred = mse_loss(pred, targets[idx])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"loss became {loss} at epoch {epoch}, batch starting {start}; "
                    f"try a smaller learning_rate (now {cfg.learning_rate})"
                )
            model.backward(dpred)
            opt.step(grads)
            total += loss * len(idx)
        model.loss_history.append(total / n)
        if log is not None:
            log(f"epoch {epoch + 1}/{cfg.epochs} loss {total / n:.6e}")
    return model, list(model.loss_history)


MODEL_MAGIC = b"VCNN"


def save_model(path: str | Path, model: ConvNetModel) -> None:
    header = [model.head, model.q, *model.input_shape, len(model.layers)]
    tensors = []
    for layer in model.layers:
        header += [layer.kind, *layer.dims()]
        tensors += layer.params
    write_container(path, MODEL_MAGIC, header, tensors)


def load_model(path: str | Path) -> ConvNetModel:
    header, payload = read_container(path, MODEL_MAGIC)
    head, q, rows, cols, n_layers = header[:5]
    specs = [header[5 + 5 * i : 10 + 5 * i] for i in range(n_layers)]
    layers: list[nn.Layer] = []
    for kind, d0, d1, d2, d3 in specs:
        if kind == nn.CONV:
            layers.append(nn.Conv2D((d0, d1), d2, d3))
        elif kind == nn.DENSE:
            layers.append(nn.Dense(d2, d3))
        elif kind == nn.RELU:
            layers.append(nn.ReLU())
        elif kind == nn.MAXPOOL:
            layers.append(nn.MaxPool2D())
        elif kind == nn.FLATTEN:
            layers.append(nn.Flatten())
        elif kind == nn.AFFINE:
            layers.append(nn.Affine())
        else:
            raise FormatError(f"unknown layer kind {kind}")
    pos = 0
    for layer in layers:
        for p in layer.params:
            if pos + p.size > payload.size:
                raise FormatError("weight payload shorter than the layer stack")
            p[...] = payload[pos : pos + p.size].reshape(p.shape)
            pos += p.size
    if pos != payload.size:
        raise FormatError("weight payload longer than the layer stack")
    return ConvNetModel(layers, head, (rows, cols), q=q)
