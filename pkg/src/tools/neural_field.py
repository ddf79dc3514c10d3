# src/tools/neural_field.py
"""
Coordinate-based MLP fields with Fourier positional encoding.

A field network maps unit-space coordinates (x, y, z) to a displacement
(u_x, u_y, u_z). The input is encoded as
[x, y, z, sin(2^0 x), cos(2^0 x), sin(2^0 y), cos(2^0 y), sin(2^0 z), cos(2^0 z), ...]
for octaves 0..L-1, followed by ReLU hidden layers and a linear output layer.

Flat weight layout: for each layer in order, the row-major (fan_in, fan_out)
weight matrix followed by the fan_out bias, so a layer computes x @ W + b.
"""
from dataclasses import dataclass, field

import numpy as np

from src.errors import LengthMismatch, NonFiniteLoss, ShapeMismatch

Layers = list[tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class Architecture:
    """
    Layer widths of a field network.

    extra_inputs appends conditioning columns after the Fourier features
    (the concatenation baseline uses 7); plain field networks keep it at 0 so
    input_dim = 3 + 6L.
    """

    hidden_widths: tuple[int, ...] = (64, 64)
    octaves: int = 3
    output_dim: int = 3
    extra_inputs: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.octaves < 0:
            raise ShapeMismatch(f"octaves must be >= 0, got {self.octaves}")
        if any(w <= 0 for w in self.hidden_widths):
            raise ShapeMismatch(f"hidden widths must be positive, got {self.hidden_widths}")
        if self.output_dim <= 0 or self.extra_inputs < 0:
            raise ShapeMismatch("output_dim must be positive and extra_inputs non-negative")

    @property
    def encoding_dim(self) -> int:
        return 3 + 6 * self.octaves

    @property
    def input_dim(self) -> int:
        return self.encoding_dim + self.extra_inputs

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        w = self.widths
        return list(zip(w[:-1], w[1:]))

    @property
    def n_params(self) -> int:
        return layer_param_count(self.layer_shapes)

    def to_dict(self) -> dict:
        return {
            "hidden_widths": list(self.hidden_widths),
            "octaves": self.octaves,
            "output_dim": self.output_dim,
            "extra_inputs": self.extra_inputs,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Architecture":
        return cls(
            hidden_widths=tuple(data["hidden_widths"]),
            octaves=int(data["octaves"]),
            output_dim=int(data.get("output_dim", 3)),
            extra_inputs=int(data.get("extra_inputs", 0)),
        )


def layer_param_count(shapes) -> int:
    return int(sum(fan_in * fan_out + fan_out for fan_in, fan_out in shapes))


@dataclass(frozen=True)
class NetworkWeights:
    """Flat f64 weight vector of one field network. The array is read-only."""

    flat: np.ndarray
    arch: Architecture = field(default_factory=Architecture)

    def __post_init__(self):
        flat = np.array(self.flat, dtype=np.float64, copy=True).reshape(-1)
        if flat.size != self.arch.n_params:
            raise LengthMismatch(
                f"flat weights have length {flat.size}, architecture {self.arch.widths} "
                f"needs {self.arch.n_params}"
            )
        if not np.all(np.isfinite(flat)):
            raise ShapeMismatch("network weights must be finite")
        flat.flags.writeable = False
        object.__setattr__(self, "flat", flat)

    @property
    def layers(self) -> Layers:
        return unflatten(self.flat, self.arch.layer_shapes)


@dataclass(frozen=True)
class FieldBatch:
    """Unit-space coordinates with their displacement targets."""

    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ShapeMismatch(f"coords must have shape (n, 3), got {coords.shape}")
        if values.shape != coords.shape:
            raise ShapeMismatch(
                f"values shape {values.shape} does not match coords shape {coords.shape}"
            )
        if not (np.all(np.isfinite(coords)) and np.all(np.isfinite(values))):
            raise ShapeMismatch("field batch must be finite")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.coords.shape[0]


def fourier_encode(coords, octaves: int) -> np.ndarray:
    """Encode (n, 3) coordinates into (n, 3 + 6L) features."""
    if octaves < 0:
        raise ShapeMismatch(f"octaves must be >= 0, got {octaves}")
    x = np.asarray(coords, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ShapeMismatch(f"coords must have shape (n, 3), got {x.shape}")
    columns = [x]
    for octave in range(octaves):
        scaled = x * (2.0**octave)
        pairs = np.empty((x.shape[0], 6))
        pairs[:, 0::2] = np.sin(scaled)
        pairs[:, 1::2] = np.cos(scaled)
        columns.append(pairs)
    return np.hstack(columns)


def flatten(layers: Layers) -> np.ndarray:
    parts = []
    for weight, bias in layers:
        parts.append(np.ascontiguousarray(weight, dtype=np.float64).reshape(-1))
        parts.append(np.asarray(bias, dtype=np.float64).reshape(-1))
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten(flat, shapes) -> Layers:
    """Split a flat vector into (W, b) pairs; accepts an Architecture or a list of shapes."""
    if isinstance(shapes, Architecture):
        shapes = shapes.layer_shapes
    flat = np.asarray(flat, dtype=np.float64).reshape(-1)
    expected = layer_param_count(shapes)
    if flat.size != expected:
        raise LengthMismatch(f"flat vector has length {flat.size}, layout needs {expected}")
    layers = []
    offset = 0
    for fan_in, fan_out in shapes:
        weight = flat[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        bias = flat[offset : offset + fan_out]
        offset += fan_out
        layers.append((weight, bias))
    return layers


def he_uniform_layers(shapes, rng: np.random.Generator) -> Layers:
    """He-style uniform fan-in scaling, zero biases."""
    layers = []
    for fan_in, fan_out in shapes:
        bound = np.sqrt(6.0 / fan_in)
        layers.append((rng.uniform(-bound, bound, (fan_in, fan_out)), np.zeros(fan_out)))
    return layers


def init_weights(arch: Architecture, seed: int) -> NetworkWeights:
    rng = np.random.default_rng(seed)
    return NetworkWeights(flatten(he_uniform_layers(arch.layer_shapes, rng)), arch)


def mlp_forward(layers: Layers, x: np.ndarray, final_activation: bool = False):
    """
    Dense ReLU stack. Returns (output, cache) where cache holds each layer's
    input and pre-activation for mlp_backward.
    """
    cache = []
    h = x
    last = len(layers) - 1
    for index, (weight, bias) in enumerate(layers):
        z = h @ weight + bias
        cache.append((h, z))
        h = np.maximum(z, 0.0) if (index < last or final_activation) else z
    return h, cache


def mlp_backward(layers: Layers, cache, d_out: np.ndarray, final_activation: bool = False):
    """Backpropagate d_out through mlp_forward. Returns (layer grads, d_input)."""
    grads: Layers = [None] * len(layers)
    delta = d_out
    last = len(layers) - 1
    for index in range(last, -1, -1):
        weight, _ = layers[index]
        h, z = cache[index]
        if index < last or final_activation:
            delta = delta * (z > 0.0)
        grads[index] = (h.T @ delta, delta.sum(axis=0))
        delta = delta @ weight.T
    return grads, delta


def encode_inputs(arch: Architecture, coords, extra=None) -> np.ndarray:
    """
    Network input rows for arch: Fourier features of coords, then arch.extra_inputs
    conditioning columns from extra (one row per point, or a single row broadcast).
    """
    features = fourier_encode(coords, arch.octaves)
    if arch.extra_inputs:
        if extra is None:
            raise ShapeMismatch(f"architecture expects {arch.extra_inputs} extra input columns")
        extra = np.asarray(extra, dtype=np.float64)
        if extra.ndim == 1:
            extra = np.broadcast_to(extra, (features.shape[0], extra.size))
        if extra.shape != (features.shape[0], arch.extra_inputs):
            raise ShapeMismatch(
                f"extra inputs must have shape ({features.shape[0]}, {arch.extra_inputs}), "
                f"got {extra.shape}"
            )
        features = np.hstack([features, extra])
    return features


def forward(w: NetworkWeights, coords) -> np.ndarray:
    """Evaluate the field network at (n, 3) unit coordinates."""
    if not isinstance(w, NetworkWeights):
        raise ShapeMismatch("forward expects NetworkWeights")
    out, _ = mlp_forward(w.layers, encode_inputs(w.arch, coords))
    return out


def loss_and_grad(w: NetworkWeights, batch: FieldBatch) -> tuple[float, np.ndarray]:
    """
    Mean over points of the squared 3-vector error, with its exact gradient
    with respect to the flat weights.
    """
    if len(batch) == 0:
        raise ShapeMismatch("field batch is empty")
    layers = w.layers
    features = encode_inputs(w.arch, batch.coords)
    with np.errstate(over="ignore", invalid="ignore"):
        pred, cache = mlp_forward(layers, features)
        residual = pred - batch.values
        loss = float(np.sum(residual * residual) / len(batch))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"reconstruction loss is not finite ({loss})")
        grads, _ = mlp_backward(layers, cache, (2.0 / len(batch)) * residual)
    grad = flatten(grads)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteLoss("reconstruction gradient is not finite")
    return loss, grad
