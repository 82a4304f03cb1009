"""From-scratch feed-forward classifier.

Dense layers with ReLU hidden activations and a softmax head, trained with
mini-batch Adam and inverted dropout. Besides prediction it exposes the two
derivative queries attacks need: the cross-entropy gradient with respect to
the input, and the full Jacobian of the outputs with respect to the input.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset, read_matrix_block, write_matrix_block
from .errors import BadMagicError, ShapeMismatchError, TruncatedError

MODEL_MAGIC = b"DDLW"
ACT_TAGS = {"identity": 0, "relu": 1, "softmax": 2}
TAG_ACTS = {v: k for k, v in ACT_TAGS.items()}
PROB_FLOOR = 1e-12


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str  # "relu" | "softmax" | "identity"


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


class AdamState:
    """First/second moment per parameter plus the shared step counter."""

    def __init__(self, layers):
        self.m = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in layers]
        self.v = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in layers]
        self.t = 0


@dataclass
class MlpModel:
    layers: list
    dropout: list = field(default_factory=list)  # drop prob on each layer's input
    seed: int = 0
    adam: AdamState | None = None

    def __post_init__(self):
        if not self.dropout:
            self.dropout = [0.0] * len(self.layers)
        for a, b in zip(self.layers, self.layers[1:]):
            if b.weights.shape[1] != a.weights.shape[0]:
                raise ShapeMismatchError(
                    f"layer dims do not chain: {a.weights.shape} -> {b.weights.shape}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]


def build_mlp(dims, seed: int = 0, dropout=None) -> MlpModel:
    """Dense net with ReLU hidden layers and a softmax head.

    Weights are seeded uniform in +-1/sqrt(fan_in); biases start at zero.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        act = "softmax" if i == len(dims) - 2 else "relu"
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return MlpModel(layers, list(dropout) if dropout else None, seed=seed)


def default_architecture(input_dim: int, num_classes: int = 10, seed: int = 0) -> MlpModel:
    """The stock classifier: input -> 784 -> 256 -> classes, dropout 0.5/0.2."""
    return build_mlp([input_dim, 784, 256, num_classes], seed=seed, dropout=[0.5, 0.2, 0.0])


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "softmax":
        return _softmax(z)
    return z


def _check_input(model: MlpModel, x: np.ndarray) -> None:
    if x.shape[-1] != model.input_dim:
        raise ShapeMismatchError(f"input dim {x.shape[-1]} != model dim {model.input_dim}")


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities for a single flat input or a batch of rows.

    Inference mode: dropout disabled.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_input(model, x)
    h = x
    for layer in model.layers:
        h = _apply_activation(h @ layer.weights.T + layer.bias, layer.activation)
    return h


def loss(probabilities: np.ndarray, label: int) -> float:
    """Cross entropy -ln p[label], with p floored at 1e-12."""
    return float(-np.log(max(float(probabilities[label]), PROB_FLOOR)))


def _forward_trace(model: MlpModel, x: np.ndarray):
    """Pre-activations per layer plus the final probabilities (no dropout)."""
    zs = []
    h = x
    for layer in model.layers:
        z = h @ layer.weights.T + layer.bias
        zs.append(z)
        h = _apply_activation(z, layer.activation)
    return zs, h


def input_gradient(model: MlpModel, x: np.ndarray, label: int) -> np.ndarray:
    """Exact gradient of the cross-entropy loss with respect to the input."""
    x = np.asarray(x, dtype=np.float64)
    _check_input(model, x)
    zs, probs = _forward_trace(model, x)
    delta = probs.copy()
    delta[label] -= 1.0  # d loss / d logits for softmax cross entropy
    for i in range(len(model.layers) - 1, 0, -1):
        delta = (delta @ model.layers[i].weights) * (zs[i - 1] > 0)
    return delta @ model.layers[0].weights


def forward_jacobian(model: MlpModel, x: np.ndarray, on_logits: bool = False) -> np.ndarray:
    """Jacobian [d out_n / d x_m] of the network outputs at x.

    Rows differentiate softmax probabilities by default; ``on_logits``
    switches to the pre-softmax logits.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_input(model, x)
    zs, probs = _forward_trace(model, x)
    k = model.output_dim
    if on_logits:
        g = np.eye(k)
    else:
        g = np.diag(probs) - np.outer(probs, probs)
    for i in range(len(model.layers) - 1, 0, -1):
        g = (g @ model.layers[i].weights) * (zs[i - 1] > 0)
    return g @ model.layers[0].weights


def predict(model: MlpModel, rows: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    probs = forward(model, rows)
    return np.argmax(probs, axis=-1)


def evaluate_accuracy(model: MlpModel, ds: LabeledDataset) -> float:
    if len(ds) == 0:
        return 0.0
    return float(np.mean(predict(model, ds.flat_images()) == ds.labels))


def _adam_step(model: MlpModel, grads, cfg: TrainConfig) -> None:
    st = model.adam
    st.t += 1
    c1 = 1.0 - cfg.beta1**st.t
    c2 = 1.0 - cfg.beta2**st.t
    for i, layer in enumerate(model.layers):
        for j, (param, grad) in enumerate(((layer.weights, grads[i][0]), (layer.bias, grads[i][1]))):
            m, v = st.m[i][j], st.v[i][j]
            m *= cfg.beta1
            m += (1 - cfg.beta1) * grad
            v *= cfg.beta2
            v += (1 - cfg.beta2) * grad * grad
            param -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def train(model: MlpModel, ds: LabeledDataset, config: TrainConfig, eval_ds=None):
    """Mini-batch Adam training with seeded shuffling and inverted dropout.

    Returns (model, log) where log holds one record per epoch: mean loss,
    train accuracy, and test accuracy when ``eval_ds`` is given. Fixed seed
    reproduces the run bit for bit.
    """
    if len(ds) == 0:
        raise ValueError("training dataset is empty")
    x_all = ds.flat_images()
    _check_input(model, x_all)
    if ds.num_classes != model.output_dim:
        raise ShapeMismatchError(
            f"{ds.num_classes} classes vs model output dim {model.output_dim}"
        )
    targets = np.eye(model.output_dim)[ds.labels]
    rng = np.random.default_rng(config.seed)
    model.adam = AdamState(model.layers)
    n = len(ds)
    log = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, tb = x_all[idx], targets[idx]
            b = len(idx)

            # forward with inverted dropout on each layer's input
            h = xb
            inputs, zs, masks = [], [], []
            for layer, rate in zip(model.layers, model.dropout):
                if rate > 0.0:
                    mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
                    h = h * mask
                else:
                    mask = None
                inputs.append(h)
                masks.append(mask)
                z = h @ layer.weights.T + layer.bias
                zs.append(z)
                h = _apply_activation(z, layer.activation)
            probs = h
            picked = np.maximum(probs[np.arange(b), ds.labels[idx]], PROB_FLOOR)
            epoch_loss += float(-np.log(picked).sum())

            delta = (probs - tb) / b
            grads = [None] * len(model.layers)
            for i in range(len(model.layers) - 1, -1, -1):
                grads[i] = (delta.T @ inputs[i], delta.sum(axis=0))
                if i > 0:
                    dh = delta @ model.layers[i].weights
                    if masks[i] is not None:
                        dh = dh * masks[i]
                    delta = dh * (zs[i - 1] > 0)
            _adam_step(model, grads, config)
        record = {
            "epoch": epoch,
            "loss": epoch_loss / n,
            "train_acc": evaluate_accuracy(model, ds),
        }
        if eval_ds is not None:
            record["test_acc"] = evaluate_accuracy(model, eval_ds)
        log.append(record)
    return model, log


# --- "DDLW" model container ---------------------------------------------------
# magic "DDLW" | layer count u32 LE | per layer: activation tag byte,
# weights matrix block, bias column block


def save_model(model: MlpModel, path) -> None:
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<I", len(model.layers)))
        for layer in model.layers:
            f.write(bytes([ACT_TAGS[layer.activation]]))
            write_matrix_block(f, layer.weights)
            write_matrix_block(f, layer.bias.reshape(-1, 1))


def load_model(path) -> MlpModel:
    """Read a model container; dropout config is not persisted (zeros)."""
    with open(path, "rb") as f:
        header = f.read(8)
        if len(header) < 8:
            raise TruncatedError(f"{path}: model header incomplete")
        if header[:4] != MODEL_MAGIC:
            raise BadMagicError(f"{path}: magic {header[:4]!r}, expected {MODEL_MAGIC!r}")
        (count,) = struct.unpack("<I", header[4:8])
        layers = []
        for _ in range(count):
            tag = f.read(1)
            if not tag:
                raise TruncatedError(f"{path}: missing activation tag")
            if tag[0] not in TAG_ACTS:
                raise BadMagicError(f"{path}: unknown activation tag {tag[0]}")
            weights = read_matrix_block(f)
            bias = read_matrix_block(f).ravel()
            layers.append(DenseLayer(weights, bias, TAG_ACTS[tag[0]]))
    return MlpModel(layers)


__all__ = [
    "MlpModel",
    "DenseLayer",
    "TrainConfig",
    "AdamState",
    "build_mlp",
    "default_architecture",
    "forward",
    "loss",
    "input_gradient",
    "forward_jacobian",
    "predict",
    "evaluate_accuracy",
    "train",
    "save_model",
    "load_model",
]
