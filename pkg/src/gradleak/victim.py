"""Victim classifiers: small fully-connected networks, augmented labels and
the exact per-example gradients a federated client would transmit.

The attack math only ever touches the gradients of the final fully-connected
layer, so a multilayer perceptron stands in for any backbone whose head is a
linear classifier. ReLU's derivative at exactly zero is taken as zero, which
makes the reconstruction mask (input > 0) coincide with the backprop mask.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import RngHandle, as_tensor, read_tensor, softmax, write_tensor

RELU = "relu"
IDENTITY = "identity"

ONE_HOT = "one_hot"
SMOOTHING = "smoothing"
MIXUP = "mixup"

LABEL_KINDS = (ONE_HOT, SMOOTHING, MIXUP)


@dataclass
class LayerSpec:
    """One fully-connected layer: weight (out x in), optional bias, activation."""

    weight: np.ndarray
    bias: np.ndarray | None = None
    activation: str = IDENTITY

    def __post_init__(self):
        self.weight = as_tensor(self.weight)
        if self.weight.ndim != 2:
            raise ShapeError("layer weight must be a matrix")
        if self.bias is not None:
            self.bias = as_tensor(self.bias)
            if self.bias.shape != (self.weight.shape[0],):
                raise ShapeError("bias length must equal the layer's output size")
        if self.activation not in (RELU, IDENTITY):
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    def affine(self, x: np.ndarray) -> np.ndarray:
        z = self.weight @ x
        if self.bias is not None:
            z = z + self.bias
        return z


@dataclass
class MlpModel:
    """Ordered fully-connected layers; the last layer emits raw logits."""

    layers: list[LayerSpec]

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("model needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError("adjacent layer dimensions do not chain")
        if self.layers[-1].activation != IDENTITY:
            raise ConfigError("last layer must be linear (logits feed softmax)")

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def class_count(self) -> int:
        return self.layers[-1].out_dim

    @property
    def unbiased(self) -> bool:
        return all(l.bias is None for l in self.layers)


def init_mlp(dims, rng: RngHandle, bias: bool = False, scale: float = 1.0) -> MlpModel:
    """Random MLP with ReLU hidden layers and a linear head.

    Weights are uniform in +-scale/sqrt(fan_in); biases, when requested,
    start at zero. ``dims`` lists input, hidden..., class count.
    """
    if len(dims) < 2:
        raise ConfigError("dims must list at least input and output sizes")
    layers = []
    for li, (i, o) in enumerate(zip(dims[:-1], dims[1:])):
        bound = scale / np.sqrt(i)
        w = rng.uniform(-bound, bound, size=(o, i))
        b = np.zeros(o) if bias else None
        act = IDENTITY if li == len(dims) - 2 else RELU
        layers.append(LayerSpec(w, b, act))
    return MlpModel(layers)


@dataclass
class AugmentedLabel:
    """A training label: one-hot, uniformly smoothed, or a two-class mixture."""

    vector: np.ndarray
    kind: str
    epsilon: float | None = None
    mix: tuple[int, int, float] | None = None  # (class_a, class_b, coefficient)

    def __post_init__(self):
        self.vector = as_tensor(self.vector)
        if self.kind not in LABEL_KINDS:
            raise ConfigError(f"unknown label kind {self.kind!r}")

    @property
    def class_count(self) -> int:
        return self.vector.shape[0]


def make_label(kind, classes, rng: RngHandle | None, num_classes,
               epsilon=None, coeff=None) -> AugmentedLabel:
    """Build an augmented label.

    Smoothing mixes the one-hot vector with a uniform distribution:
    y = (1 - eps) * onehot + eps/C, eps drawn from U(0, 0.5) when not given.
    Mixup combines two distinct one-hot labels with coefficient a ~ U(0, 1).
    """
    C = int(num_classes)
    if kind == ONE_HOT:
        cls = int(classes if np.isscalar(classes) else classes[0])
        v = np.zeros(C)
        v[cls] = 1.0
        return AugmentedLabel(v, ONE_HOT, epsilon=0.0)
    if kind == SMOOTHING:
        cls = int(classes if np.isscalar(classes) else classes[0])
        eps = float(rng.uniform(0.0, 0.5)) if epsilon is None else float(epsilon)
        if not 0.0 <= eps < 1.0:
            raise ConfigError("smoothing probability must lie in [0, 1)")
        v = np.full(C, eps / C)
        v[cls] += 1.0 - eps
        return AugmentedLabel(v, SMOOTHING, epsilon=eps)
    if kind == MIXUP:
        ca, cb = int(classes[0]), int(classes[1])
        if ca == cb:
            raise ConfigError("mixup needs two distinct classes")
        a = float(rng.uniform(0.0, 1.0)) if coeff is None else float(coeff)
        if not 0.0 < a < 1.0:
            raise ConfigError("mixup coefficient must lie in (0, 1)")
        v = np.zeros(C)
        v[ca] = a
        v[cb] = 1.0 - a
        return AugmentedLabel(v, MIXUP, mix=(ca, cb, a))
    raise ConfigError(f"unknown label kind {kind!r}")


def mix_inputs(x1: np.ndarray, x2: np.ndarray, a: float) -> np.ndarray:
    """Convex combination a*x1 + (1-a)*x2 of two same-shape inputs."""
    x1 = as_tensor(x1)
    x2 = as_tensor(x2)
    if x1.shape != x2.shape:
        raise ShapeError("mixup inputs must share a shape")
    return a * x1 + (1.0 - a) * x2


@dataclass
class GradientCapture:
    """Per-layer gradients of one training example, the attacker's input.

    ``z_grads[l]`` is the loss gradient at layer l's pre-activation output;
    when layer l has a bias its gradient equals ``z_grads[l]`` exactly.
    ``prediction`` records the model's argmax class at capture time; it is
    consulted only in the degenerate all-zero-gradient case, where the
    gradients themselves carry no label information.
    """

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray | None]
    z_grads: list[np.ndarray]
    loss: float
    prediction: int

    @property
    def last_weight_grad(self) -> np.ndarray:
        return self.weight_grads[-1]


def forward(model: MlpModel, x: np.ndarray):
    """Run the network; returns logits and the input of every layer.

    ``activations[l]`` is what layer l consumed, so ``activations[-1]`` is
    the input of the classifier head.
    """
    x = as_tensor(x)
    if x.shape != (model.input_dim,):
        raise ShapeError(f"input shape {x.shape} != ({model.input_dim},)")
    activations = [x]
    h = x
    for layer in model.layers[:-1]:
        z = layer.affine(h)
        h = np.maximum(z, 0.0) if layer.activation == RELU else z
        activations.append(h)
    logits = model.layers[-1].affine(h)
    return logits, activations


def _ce_from_probs(p: np.ndarray, y: np.ndarray) -> float:
    # zero label entries contribute nothing even when p underflows to 0
    active = y > 0.0
    with np.errstate(divide="ignore"):
        return float(-(y[active] * np.log(p[active])).sum())


def cross_entropy(logits: np.ndarray, label: AugmentedLabel) -> float:
    """Cross-entropy of the softmax distribution against a soft label."""
    return _ce_from_probs(softmax(logits), label.vector)


def backward(model: MlpModel, x: np.ndarray, label: AugmentedLabel) -> GradientCapture:
    """Exact analytic gradients of the cross-entropy loss for one example.

    The softmax/cross-entropy pair gives the head's output gradient p - y;
    each weight gradient is then the outer product of that layer's output
    gradient with its input.
    """
    x = as_tensor(x)
    pre = []  # pre-activation outputs of hidden layers
    acts = [x]
    h = x
    for layer in model.layers[:-1]:
        z = layer.affine(h)
        pre.append(z)
        h = np.maximum(z, 0.0) if layer.activation == RELU else z
        acts.append(h)
    logits = model.layers[-1].affine(h)
    p = softmax(logits)
    loss = _ce_from_probs(p, label.vector)

    n = len(model.layers)
    weight_grads: list = [None] * n
    bias_grads: list = [None] * n
    z_grads: list = [None] * n

    dz = p - label.vector
    for li in range(n - 1, -1, -1):
        layer = model.layers[li]
        z_grads[li] = dz
        weight_grads[li] = np.outer(dz, acts[li])
        if layer.bias is not None:
            bias_grads[li] = dz.copy()
        if li > 0:
            dx = layer.weight.T @ dz
            below = model.layers[li - 1]
            if below.activation == RELU:
                dx = dx * (pre[li - 1] > 0.0)  # ReLU'(0) treated as 0
            dz = dx
    return GradientCapture(weight_grads, bias_grads, z_grads, loss, int(np.argmax(logits)))


def train(model: MlpModel, dataset, epochs: int, lr: float, rng: RngHandle) -> MlpModel:
    """Plain per-example SGD on cross-entropy; mutates and returns the model."""
    n = len(dataset)
    for _ in range(int(epochs)):
        order = rng.permutation(n) if n > 1 else range(n)
        for idx in order:
            x, label = dataset[idx]
            cap = backward(model, x, label)
            for layer, wg, bg in zip(model.layers, cap.weight_grads, cap.bias_grads):
                layer.weight -= lr * wg
                if layer.bias is not None:
                    layer.bias -= lr * bg
    return model


def accuracy(model: MlpModel, dataset) -> float:
    hits = 0
    for x, label in dataset:
        logits, _ = forward(model, x)
        hits += int(np.argmax(logits) == np.argmax(label.vector))
    return hits / len(dataset) if dataset else 0.0


@dataclass
class BlobSampler:
    """Class-conditioned Gaussian blobs clamped to [0, 1]; stand-in images."""

    means: np.ndarray  # (C, input_dim)
    spread: float

    @property
    def class_count(self) -> int:
        return self.means.shape[0]

    @property
    def input_dim(self) -> int:
        return self.means.shape[1]

    def sample(self, cls: int, rng: RngHandle) -> np.ndarray:
        raw = self.means[cls] + self.spread * rng.normal(size=self.input_dim)
        return np.clip(raw, 0.0, 1.0)


def make_blobs(input_dim, num_classes, rng: RngHandle,
               spread: float = 0.15, mean_lo: float = 0.2,
               mean_hi: float = 0.8) -> BlobSampler:
    means = rng.uniform(mean_lo, mean_hi, size=(int(num_classes), int(input_dim)))
    return BlobSampler(means, float(spread))


def synth_dataset(n, input_dim, num_classes, rng: RngHandle,
                  blobs: BlobSampler | None = None):
    """n labelled blob samples, classes assigned round-robin for balance."""
    if blobs is None:
        blobs = make_blobs(input_dim, num_classes, rng)
    out = []
    for i in range(int(n)):
        cls = i % blobs.class_count
        x = blobs.sample(cls, rng)
        out.append((x, make_label(ONE_HOT, cls, None, blobs.class_count)))
    return out


@dataclass
class AttackInstance:
    """One (victim, example) pair plus the ground truth an oracle test needs."""

    model: MlpModel
    x: np.ndarray
    label: AugmentedLabel
    capture: GradientCapture
    last_input: np.ndarray = field(repr=False, default=None)
    probs: np.ndarray = field(repr=False, default=None)
    logits: np.ndarray = field(repr=False, default=None)

    def lambda_star(self, row: int) -> float:
        """Ground-truth scalar for a given head row: 1 / (p_row - y_row)."""
        diff = self.probs[row] - self.label.vector[row]
        return float("inf") if diff == 0.0 else 1.0 / diff


def make_instance(model: MlpModel, x: np.ndarray, label: AugmentedLabel) -> AttackInstance:
    logits, acts = forward(model, x)
    capture = backward(model, x, label)
    return AttackInstance(model, as_tensor(x), label, capture,
                          last_input=acts[-1], probs=softmax(logits), logits=logits)


# ---------------------------------------------------------------------------
# Model serialization: JSON manifest plus one tensor file per parameter.

def save_model(directory, model: MlpModel) -> None:
    os.makedirs(directory, exist_ok=True)
    manifest = {"layers": []}
    for li, layer in enumerate(model.layers):
        entry = {
            "in_dim": layer.in_dim,
            "out_dim": layer.out_dim,
            "activation": layer.activation,
            "bias": layer.bias is not None,
            "weight_file": f"layer{li}_weight.tnsr",
        }
        write_tensor(os.path.join(directory, entry["weight_file"]), layer.weight)
        if layer.bias is not None:
            entry["bias_file"] = f"layer{li}_bias.tnsr"
            write_tensor(os.path.join(directory, entry["bias_file"]), layer.bias)
        manifest["layers"].append(entry)
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_model(directory) -> MlpModel:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    layers = []
    for entry in manifest["layers"]:
        w = read_tensor(os.path.join(directory, entry["weight_file"]))
        b = read_tensor(os.path.join(directory, entry["bias_file"])) if entry["bias"] else None
        layers.append(LayerSpec(w, b, entry["activation"]))
    return MlpModel(layers)
