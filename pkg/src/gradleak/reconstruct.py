"""Analytical input reconstruction through fully-connected networks.

Every weight gradient of a dense layer is rank one: row i equals the layer
input scaled by the i-th entry of the output gradient. With the output
gradient in hand, the input is one division away; with the input in hand,
the previous layer's output gradient is one transposed matrix product away
(masked by the ReLU pattern, which the recovered input itself reveals).
Alternating the two steps walks from the classifier head all the way back
to the network input with no optimization and no bias term required.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DeadLayerError, PartialReconstructionError, ShapeError
from .tensor import softmax
from .victim import RELU, GradientCapture, MlpModel


def invert_layer(weight_grad: np.ndarray, z_grad: np.ndarray) -> np.ndarray:
    """Recover a layer's input from its weight and output gradients.

    Uses the output-gradient entry of largest magnitude as the pivot, which
    minimizes amplification of rounding error in the division.
    """
    weight_grad = np.asarray(weight_grad, dtype=np.float64)
    z_grad = np.asarray(z_grad, dtype=np.float64)
    if weight_grad.ndim != 2 or weight_grad.shape[0] != z_grad.shape[0]:
        raise ShapeError("weight gradient rows must match the output gradient")
    pivot = int(np.argmax(np.abs(z_grad)))
    if z_grad[pivot] == 0.0:
        raise DeadLayerError("output gradient is entirely zero")
    return weight_grad[pivot] / z_grad[pivot]


def propagate_zgrad(weight: np.ndarray, z_grad: np.ndarray, x_hat: np.ndarray,
                    activation: str) -> np.ndarray:
    """Output gradient of the layer below: W^T z_grad, ReLU-masked.

    For a ReLU boundary the mask is (x_hat > 0): the recovered input is the
    ReLU output, so zeros mark exactly the units whose derivative is zero
    under the ReLU'(0) = 0 convention.
    """
    weight = np.asarray(weight, dtype=np.float64)
    z_grad = np.asarray(z_grad, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if weight.shape[0] != z_grad.shape[0] or weight.shape[1] != x_hat.shape[0]:
        raise ShapeError("weight, output gradient and input shapes disagree")
    down = weight.T @ z_grad
    if activation == RELU:
        down = down * (x_hat > 0.0)
    return down


@dataclass
class ReconstructionResult:
    input: np.ndarray                    # recovered network input
    layer_inputs: list[np.ndarray]       # recovered input of every layer
    z_grads: list[np.ndarray]            # output gradient used per layer


def reconstruct_input(model: MlpModel, capture: GradientCapture,
                      feature: np.ndarray,
                      label: np.ndarray | None = None) -> ReconstructionResult:
    """Walk the inversion from the classifier head down to the input.

    ``feature`` is the recovered head input. The head's output gradient is
    re-derived as softmax(head(feature)) - label, so no stored activation is
    needed; when a layer carries a bias its gradient is used directly as the
    output gradient (the classic bias attack), otherwise the gradient is
    propagated through the weights. A dead layer (all-zero output gradient)
    raises PartialReconstructionError carrying everything recovered so far.
    """
    n = len(model.layers)
    head = model.layers[-1]
    feature = np.asarray(feature, dtype=np.float64)
    if capture.bias_grads[-1] is not None:
        zg = np.asarray(capture.bias_grads[-1], dtype=np.float64)
    else:
        if label is None:
            raise ValueError("an unbiased head needs the recovered label")
        zg = softmax(head.affine(feature)) - np.asarray(label, dtype=np.float64)

    inputs: list = [None] * n
    zgs: list = [None] * n
    inputs[-1] = feature
    zgs[-1] = zg
    for li in range(n - 1, 0, -1):
        below = model.layers[li - 1]
        if capture.bias_grads[li - 1] is not None:
            zg_below = np.asarray(capture.bias_grads[li - 1], dtype=np.float64)
        else:
            zg_below = propagate_zgrad(model.layers[li].weight, zgs[li],
                                       inputs[li], below.activation)
        try:
            inputs[li - 1] = invert_layer(capture.weight_grads[li - 1], zg_below)
        except DeadLayerError:
            raise PartialReconstructionError(li, [v for v in inputs if v is not None])
        zgs[li - 1] = zg_below
    return ReconstructionResult(inputs[0], inputs, zgs)


def bias_attack_feature(capture: GradientCapture, layer_index: int) -> np.ndarray:
    """Layer input via the bias route: weight-gradient row over bias-gradient entry."""
    bg = capture.bias_grads[layer_index]
    if bg is None:
        raise ValueError(f"layer {layer_index} has no bias term")
    return invert_layer(capture.weight_grads[layer_index], bg)


def write_pgm(path, image: np.ndarray) -> None:
    """8-bit binary PGM of a [0, 1] grayscale image (clamped, x255, rounded)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError("PGM export expects a 2-D image")
    data = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes(order="C"))


def write_ppm(path, image: np.ndarray) -> None:
    """8-bit binary PPM of a [0, 1] (3, H, W) color image."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError("PPM export expects a (3, H, W) image")
    data = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    _, h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.moveaxis(data, 0, 2).tobytes(order="C"))
