# src/training/baselines.py
"""
Parameter-conditioned comparison models.

    nearest   field of the training sample with the most cosine-similar
              normalised parameters, evaluated through its overfit network
    concat    one field network with input [phi(x); p]
    film      field network whose hidden activations are modulated as
              h <- gamma(p) * relu(z) + beta(p), gamma = 1 + p G + c, beta = p B + d
    deeponet  branch net on p (-> 3K), trunk net on phi(x) (-> K, final ReLU),
              u_c = sum_k branch[c K + k] trunk[k] + bias_c

All conditioning uses the min-max normalised parameter vector p.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.config import TrainConfig, derive_seed
from src.data.dataset import PARAMETER_NAMES, PARAMETER_RANGES, FieldSample
from src.data.storage import load_checkpoint, save_checkpoint
from src.errors import DegenerateQuery, FormatError, InsufficientData, NonFiniteLoss, ShapeMismatch
from src.tools.affine import normalize_params
from src.tools.neural_field import (
    Architecture,
    encode_inputs,
    flatten,
    forward,
    fourier_encode,
    he_uniform_layers,
    layer_param_count,
    mlp_backward,
    mlp_forward,
    unflatten,
)
from src.training.flare import TrainedEnsemble, architecture_for, require_valid
from src.training.loop import OptimizationTrace, optimize

logger = logging.getLogger("FLARE Baselines")

N_PARAMS = len(PARAMETER_NAMES)
CONDITIONAL_KINDS = ("concat", "film", "deeponet")


# Nearest neighbour

def nn_select(train_params: np.ndarray, query: np.ndarray) -> int:
    """
    Index of the row of train_params (N x k, normalised) with the largest
    cosine similarity to query. Ties go to the lowest index.

    Raises:
        DegenerateQuery: if the query has zero norm
    """
    Q = np.asarray(train_params, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if Q.ndim != 2 or Q.shape[1] != q.size or Q.shape[0] == 0:
        raise ShapeMismatch(f"training parameters {Q.shape} do not match query of length {q.size}")
    q_norm = np.linalg.norm(q)
    if q_norm == 0:
        raise DegenerateQuery("query parameters have zero norm after normalisation")
    row_norms = np.linalg.norm(Q, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cosine = (Q @ q) / (row_norms * q_norm)
    cosine = np.where(row_norms > 0, cosine, -np.inf)
    return int(np.argmax(cosine))


def nn_predict(ens: TrainedEnsemble, p_d, coords) -> np.ndarray:
    j = nn_select(ens.params.normalized.T, ens.params.normalize(p_d))
    return forward(ens.network(j), coords)


# Conditional networks

def _condition_rows(p_bar, n_points: int) -> np.ndarray:
    p_bar = np.asarray(p_bar, dtype=np.float64)
    if p_bar.ndim == 1:
        p_bar = np.broadcast_to(p_bar, (n_points, p_bar.size))
    if p_bar.shape != (n_points, N_PARAMS):
        raise ShapeMismatch(f"conditioning must have shape ({n_points}, {N_PARAMS}), got {p_bar.shape}")
    return p_bar


class ConcatWiring:
    """Plain field network on [phi(x); p]."""

    def concat_arch(self, arch: Architecture) -> Architecture:
        return Architecture(arch.hidden_widths, arch.octaves, arch.output_dim, extra_inputs=N_PARAMS)

    def widths(self, arch: Architecture, latent: int) -> tuple[int, ...]:
        return self.concat_arch(arch).widths

    def shapes(self, arch: Architecture, latent: int):
        return self.concat_arch(arch).layer_shapes

    def init(self, arch: Architecture, latent: int, rng) -> np.ndarray:
        return flatten(he_uniform_layers(self.shapes(arch, latent), rng))

    def _layers(self, flat, arch, latent):
        return unflatten(flat, self.shapes(arch, latent))

    def predict(self, flat, arch, latent, coords, p_rows) -> np.ndarray:
        features = encode_inputs(self.concat_arch(arch), coords, p_rows)
        out, _ = mlp_forward(self._layers(flat, arch, latent), features)
        return out

    def backward(self, flat, arch, latent, coords, p_rows, d_out):
        layers = self._layers(flat, arch, latent)
        features = encode_inputs(self.concat_arch(arch), coords, p_rows)
        out, cache = mlp_forward(layers, features)
        grads, _ = mlp_backward(layers, cache, d_out(out))
        return out, flatten(grads)


class FilmWiring:
    """
    Flat layout: the field network's layers, then for each hidden layer the
    scale generator (G, c) followed by the shift generator (B, d).
    """

    def widths(self, arch: Architecture, latent: int) -> tuple[int, ...]:
        return arch.widths

    def shapes(self, arch: Architecture, latent: int):
        generators = []
        for width in arch.hidden_widths:
            generators += [(N_PARAMS, width), (N_PARAMS, width)]
        return arch.layer_shapes + generators

    def init(self, arch: Architecture, latent: int, rng) -> np.ndarray:
        trunk = flatten(he_uniform_layers(arch.layer_shapes, rng))
        # zero generators: training starts at identity modulation
        generators = np.zeros(layer_param_count(self.shapes(arch, latent)) - trunk.size)
        return np.concatenate([trunk, generators])

    def _split(self, flat, arch, latent):
        layers = unflatten(flat, self.shapes(arch, latent))
        n_trunk = len(arch.layer_shapes)
        trunk, generators = layers[:n_trunk], layers[n_trunk:]
        return trunk, list(zip(generators[0::2], generators[1::2]))

    def _forward(self, trunk, modulation, features, p_rows):
        h = features
        cache = []
        for (weight, bias), ((G, c), (B, d)) in zip(trunk[:-1], modulation):
            z = h @ weight + bias
            a = np.maximum(z, 0.0)
            gamma = 1.0 + p_rows @ G + c
            h_next = gamma * a + (p_rows @ B + d)
            cache.append((h, z, a, gamma))
            h = h_next
        weight, bias = trunk[-1]
        return h @ weight + bias, cache, h

    def predict(self, flat, arch, latent, coords, p_rows) -> np.ndarray:
        trunk, modulation = self._split(flat, arch, latent)
        out, _, _ = self._forward(trunk, modulation, fourier_encode(coords, arch.octaves), p_rows)
        return out

    def backward(self, flat, arch, latent, coords, p_rows, d_out):
        trunk, modulation = self._split(flat, arch, latent)
        out, cache, h_last = self._forward(
            trunk, modulation, fourier_encode(coords, arch.octaves), p_rows
        )
        delta = d_out(out)
        weight, _ = trunk[-1]
        trunk_grads = [None] * len(trunk)
        trunk_grads[-1] = (h_last.T @ delta, delta.sum(axis=0))
        dh = delta @ weight.T

        mod_grads = [None] * len(modulation)
        for index in range(len(modulation) - 1, -1, -1):
            h, z, a, gamma = cache[index]
            d_gamma = dh * a
            mod_grads[index] = (
                (p_rows.T @ d_gamma, d_gamma.sum(axis=0)),
                (p_rows.T @ dh, dh.sum(axis=0)),
            )
            dz = dh * gamma * (z > 0.0)
            weight, _ = trunk[index]
            trunk_grads[index] = (h.T @ dz, dz.sum(axis=0))
            dh = dz @ weight.T

        generator_grads = [pair for grads in mod_grads for pair in grads]
        return out, flatten(trunk_grads + generator_grads)


class DeepONetWiring:
    """Flat layout: branch layers, trunk layers, then the 3 output biases."""

    def _branch_shapes(self, arch, latent):
        widths = (N_PARAMS, *arch.hidden_widths, arch.output_dim * latent)
        return list(zip(widths[:-1], widths[1:]))

    def _trunk_shapes(self, arch, latent):
        widths = (arch.encoding_dim, *arch.hidden_widths, latent)
        return list(zip(widths[:-1], widths[1:]))

    def widths(self, arch: Architecture, latent: int) -> tuple[int, ...]:
        """Branch widths followed by trunk widths."""
        chains = (self._branch_shapes(arch, latent), self._trunk_shapes(arch, latent))
        return tuple(w for shapes in chains for w in (shapes[0][0], *(o for _, o in shapes)))

    def shapes(self, arch: Architecture, latent: int):
        return self._branch_shapes(arch, latent) + self._trunk_shapes(arch, latent)

    def n_params(self, arch, latent) -> int:
        return layer_param_count(self.shapes(arch, latent)) + arch.output_dim

    def init(self, arch: Architecture, latent: int, rng) -> np.ndarray:
        return np.concatenate(
            [flatten(he_uniform_layers(self.shapes(arch, latent), rng)), np.zeros(arch.output_dim)]
        )

    def _split(self, flat, arch, latent):
        n_layers = layer_param_count(self.shapes(arch, latent))
        n_branch = len(self._branch_shapes(arch, latent))
        layers = unflatten(flat[:n_layers], self.shapes(arch, latent))
        return layers[:n_branch], layers[n_branch:], flat[n_layers:]

    def _forward(self, flat, arch, latent, coords, p_rows):
        branch, trunk, bias = self._split(flat, arch, latent)
        b_out, b_cache = mlp_forward(branch, p_rows)
        t_out, t_cache = mlp_forward(trunk, fourier_encode(coords, arch.octaves), final_activation=True)
        heads = b_out.reshape(-1, arch.output_dim, latent)
        out = np.einsum("nck,nk->nc", heads, t_out) + bias
        return out, (branch, trunk, b_cache, t_cache, heads, t_out)

    def predict(self, flat, arch, latent, coords, p_rows) -> np.ndarray:
        return self._forward(flat, arch, latent, coords, p_rows)[0]

    def backward(self, flat, arch, latent, coords, p_rows, d_out):
        out, (branch, trunk, b_cache, t_cache, heads, t_out) = self._forward(
            flat, arch, latent, coords, p_rows
        )
        delta = d_out(out)
        d_heads = delta[:, :, None] * t_out[:, None, :]
        d_trunk_out = np.einsum("nc,nck->nk", delta, heads)
        b_grads, _ = mlp_backward(branch, b_cache, d_heads.reshape(len(delta), -1))
        t_grads, _ = mlp_backward(trunk, t_cache, d_trunk_out, final_activation=True)
        return out, np.concatenate([flatten(b_grads + t_grads), delta.sum(axis=0)])


WIRINGS = {"concat": ConcatWiring(), "film": FilmWiring(), "deeponet": DeepONetWiring()}


def _wiring(kind: str):
    if kind not in WIRINGS:
        raise ShapeMismatch(f"unknown conditional model kind '{kind}', expected one of {CONDITIONAL_KINDS}")
    return WIRINGS[kind]


def n_conditional_params(kind: str, arch: Architecture, latent: int) -> int:
    wiring = _wiring(kind)
    if isinstance(wiring, DeepONetWiring):
        return wiring.n_params(arch, latent)
    return layer_param_count(wiring.shapes(arch, latent))


@dataclass(frozen=True)
class ConditionalModel:
    """
    A trained conditional baseline. `arch` is the field-network architecture
    the baseline's widths are matched to; `latent` is only used by DeepONet.
    """

    kind: str
    weights: np.ndarray
    arch: Architecture
    bounds: np.ndarray
    latent: int = 64
    trace: Optional[OptimizationTrace] = None

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64, copy=True).reshape(-1)
        expected = n_conditional_params(self.kind, self.arch, self.latent)
        if weights.size != expected:
            raise ShapeMismatch(f"{self.kind} model needs {expected} weights, got {weights.size}")
        if not np.all(np.isfinite(weights)):
            raise ShapeMismatch(f"{self.kind} model weights must be finite")
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bounds", np.asarray(self.bounds, dtype=np.float64))


def conditional_forward(kind, flat, arch, latent, coords, p_bar) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64)
    return _wiring(kind).predict(flat, arch, latent, coords, _condition_rows(p_bar, len(coords)))


def conditional_loss_and_grad(kind, flat, arch, latent, coords, values, p_bar):
    """
    Mean over points of the squared 3-vector error and its gradient with
    respect to the flat weights. p_bar is one normalised vector or one row per point.
    """
    coords = np.asarray(coords, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = len(coords)
    if n == 0 or values.shape != coords.shape:
        raise ShapeMismatch(f"values {values.shape} do not match coords {coords.shape}")
    residual = {}

    def d_out(out):
        residual["r"] = out - values
        return (2.0 / n) * residual["r"]

    with np.errstate(over="ignore", invalid="ignore"):
        _, grad = _wiring(kind).backward(
            flat, arch, latent, coords, _condition_rows(p_bar, n), d_out
        )
        loss = float(np.sum(residual["r"] ** 2) / n)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise NonFiniteLoss(f"{kind} loss is not finite ({loss})")
    return loss, grad


def init_conditional(kind: str, arch: Architecture, latent: int, seed: int) -> np.ndarray:
    return _wiring(kind).init(arch, latent, np.random.default_rng(seed))


def train_conditional(
    kind: str, samples: Sequence[FieldSample], cfg: TrainConfig, bounds=PARAMETER_RANGES
) -> ConditionalModel:
    """Fit one conditional model on the pooled points of all training samples."""
    require_valid(cfg)
    _wiring(kind)
    samples = list(samples)
    if not samples:
        raise InsufficientData(f"{kind} training needs at least one sample")
    arch = architecture_for(cfg)
    latent = cfg.deeponet_latent
    bounds = np.asarray(bounds, dtype=np.float64)

    coords = np.vstack([s.coords for s in samples])
    values = np.vstack([s.targets for s in samples])
    p_rows = np.vstack(
        [np.tile(normalize_params(s.params, bounds), (s.n_points, 1)) for s in samples]
    )

    def objective(x):
        return conditional_loss_and_grad(kind, x, arch, latent, coords, values, p_rows)

    x0 = init_conditional(kind, arch, latent, derive_seed(cfg.seed, f"baseline:{kind}"))
    flat, trace = optimize(objective, x0, cfg.baseline_epochs, cfg, f"baseline:{kind}")
    return ConditionalModel(kind, flat, arch, bounds, latent, trace)


def predict_conditional(model: ConditionalModel, p_d, coords) -> np.ndarray:
    """Forward pass for raw query parameters p_d at unit coordinates."""
    p_bar = normalize_params(np.asarray(p_d, dtype=np.float64).reshape(-1), model.bounds)
    if p_bar.size != N_PARAMS:
        raise ShapeMismatch(f"expected {N_PARAMS} parameters, got {p_bar.size}")
    return conditional_forward(model.kind, model.weights, model.arch, model.latent, coords, p_bar)


def save_conditional(model: ConditionalModel, path):
    meta = {"architecture": model.arch.to_dict(), "bounds": model.bounds.tolist(), "latent": model.latent}
    return save_checkpoint(
        path, model.kind, model.arch.octaves, _wiring(model.kind).widths(model.arch, model.latent),
        model.weights, meta,
    )


def load_conditional(path) -> ConditionalModel:
    ckpt = load_checkpoint(path)
    if ckpt.kind not in CONDITIONAL_KINDS:
        raise FormatError(f"{path}: checkpoint kind '{ckpt.kind}' is not a conditional baseline")
    try:
        arch = Architecture.from_dict(ckpt.meta["architecture"])
        latent = int(ckpt.meta["latent"])
        expected = _wiring(ckpt.kind).widths(arch, latent)
        if ckpt.widths != expected:
            raise ShapeMismatch(f"header widths {ckpt.widths} do not match {expected}")
        return ConditionalModel(
            kind=ckpt.kind,
            weights=ckpt.columns[:, 0],
            arch=arch,
            bounds=np.asarray(ckpt.meta["bounds"]),
            latent=latent,
        )
    except (KeyError, ShapeMismatch) as e:
        raise FormatError(f"{path}: malformed {ckpt.kind} checkpoint ({e})") from e
