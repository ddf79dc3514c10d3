# src/training/flare.py
"""
Two-phase FLARE training.

Phase 1 overfits one randomly chosen sample from a He-initialised network.
Phase 2 copies those weights into every column and minimises

    sum_i L_rec(w_i) + lambda * sum_i ||W a_i - w_i||^2

with one shared Adam state over all columns, where a_i are the simplex
coefficients reconstructing sample i's parameters from the other samples.
LAMP is the same pipeline with lambda = 0.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from src.config import TrainConfig, derive_seed, validate_train_config
from src.data.dataset import PARAMETER_RANGES, FieldSample
from src.data.storage import load_checkpoint, save_checkpoint
from src.errors import ConfigError, FormatError, InsufficientData, UnitRadiusOutOfBand
from src.tools.affine import (
    AffineCoefficients,
    ParameterMatrix,
    WeightMatrix,
    mix_weights,
    solve_inference_coeffs,
    solve_training_coeffs,
)
from src.tools.geometry import unit_band_mask
from src.tools.neural_field import (
    Architecture,
    NetworkWeights,
    forward,
    init_weights,
    loss_and_grad,
)
from src.training.loop import OptimizationTrace, optimize

logger = logging.getLogger("FLARE Trainer")

ENSEMBLE_KINDS = ("flare", "lamp")


def architecture_for(cfg: TrainConfig) -> Architecture:
    return Architecture(hidden_widths=cfg.hidden_widths, octaves=cfg.octaves)


def require_valid(cfg: TrainConfig) -> None:
    is_valid, errors = validate_train_config(cfg)
    if not is_valid:
        raise ConfigError("; ".join(errors))


@dataclass(frozen=True)
class TrainedEnsemble:
    """
    Trained networks W (D x N) with their training parameters P (k x N).

    coefficients[i] are the training-mode coefficients of sample i; they are
    empty for a single-sample ensemble, which has no regulariser.
    """

    weights: WeightMatrix
    params: ParameterMatrix
    coefficients: tuple[AffineCoefficients, ...]
    final_losses: tuple[float, ...]
    config: TrainConfig
    sample_ids: tuple[str, ...]
    base_index: Optional[int] = None
    traces: tuple[OptimizationTrace, ...] = field(default_factory=tuple)

    def __post_init__(self):
        n = self.weights.n
        if self.params.n != n or len(self.sample_ids) != n or len(self.final_losses) != n:
            raise InsufficientData(
                f"ensemble columns disagree: W has {n}, P has {self.params.n}, "
                f"{len(self.sample_ids)} ids, {len(self.final_losses)} losses"
            )

    @property
    def n(self) -> int:
        return self.weights.n

    @property
    def arch(self) -> Architecture:
        return self.weights.arch

    @property
    def mode(self) -> str:
        return self.config.mode

    def network(self, j: int) -> NetworkWeights:
        return self.weights.column(j)


def fit_network(
    sample: FieldSample, cfg: TrainConfig, init: NetworkWeights, epochs: int, label: str
) -> tuple[NetworkWeights, OptimizationTrace]:
    """Full-batch reconstruction fit of one network to one sample."""
    batch = sample.batch()
    arch = init.arch

    def objective(x):
        return loss_and_grad(NetworkWeights(x, arch), batch)

    flat, trace = optimize(objective, init.flat, epochs, cfg, label)
    return NetworkWeights(flat, arch), trace


def train_base(sample: FieldSample, cfg: TrainConfig) -> tuple[NetworkWeights, OptimizationTrace]:
    """Phase 1: overfit a freshly initialised network to one sample. Returns the weights and trace."""
    require_valid(cfg)
    init = init_weights(architecture_for(cfg), derive_seed(cfg.seed, "base-init"))
    weights, trace = fit_network(sample, cfg, init, cfg.phase1_epochs, f"base:{sample.id}")
    logger.info(f"Phase 1 on {sample.id}: final reconstruction loss {trace.final_loss:.6e}")
    return weights, trace


def coefficient_matrix(coefficients: Sequence[AffineCoefficients], n: int) -> np.ndarray:
    """C with C[i, j] = a_i[j]; the identity when there are no coefficients."""
    if not coefficients:
        return np.eye(n)
    return np.vstack([c.alpha for c in coefficients])


def regularization(stack: np.ndarray, C: np.ndarray, reg_weight: float):
    """
    lambda * ||(C - I) S||_F^2 and its gradient with respect to S, where the
    rows of S are the flattened networks.

    Row i of (C - I) S is (W a_i - w_i)^T, so the gradient
    2 lambda (C - I)^T (C - I) S holds both the direct term on w_i and the
    cross terms on every column a_i mixes.
    """
    if reg_weight == 0.0:
        return 0.0, np.zeros_like(stack)
    M = C - np.eye(C.shape[0])
    residual = M @ stack
    value = reg_weight * float(np.sum(residual * residual))
    return value, 2.0 * reg_weight * (M.T @ residual)


def train_joint(
    train_samples: Sequence[FieldSample],
    base_w: NetworkWeights,
    cfg: TrainConfig,
    bounds=PARAMETER_RANGES,
) -> TrainedEnsemble:
    """
    Phase 2: joint training of all columns from the shared base weights.

    Raises:
        ConfigError: if the configuration is inconsistent (e.g. LAMP with lambda != 0)
        NonFiniteLoss: if the objective overflows
    """
    require_valid(cfg)
    samples = list(train_samples)
    if not samples:
        raise InsufficientData("joint training needs at least one sample")
    arch = base_w.arch
    n, d = len(samples), arch.n_params
    P = ParameterMatrix.from_vectors([s.params for s in samples], bounds)

    coefficients = (
        tuple(solve_training_coeffs(P, i) for i in range(n)) if n >= 2 else tuple()
    )
    C = coefficient_matrix(coefficients, n)
    batches = [s.batch() for s in samples]
    reg_weight = cfg.reg_weight if cfg.mode == "flare" else 0.0
    logger.info(
        f"Joint training ({cfg.mode}): {n} networks x {d} weights, lambda {reg_weight}, "
        f"{cfg.threads} thread(s)"
    )

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:

        def reconstruction(stack: np.ndarray):
            results = list(
                pool.map(
                    lambda i: loss_and_grad(NetworkWeights(stack[i], arch), batches[i]),
                    range(n),
                )
            )
            losses = np.array([loss for loss, _ in results])
            grads = np.vstack([grad for _, grad in results])
            return losses, grads

        def objective(x):
            stack = x.reshape(n, d)
            losses, grads = reconstruction(stack)
            reg_value, reg_grad = regularization(stack, C, reg_weight)
            return float(losses.sum()) + reg_value, (grads + reg_grad).reshape(-1)

        x0 = np.tile(base_w.flat, n)
        x, trace = optimize(objective, x0, cfg.phase2_epochs, cfg, f"joint:{cfg.mode}")
        stack = x.reshape(n, d)
        final_losses, _ = reconstruction(stack)

    return TrainedEnsemble(
        weights=WeightMatrix(stack.T.copy(), arch),
        params=P,
        coefficients=coefficients,
        final_losses=tuple(float(v) for v in final_losses),
        config=cfg,
        sample_ids=tuple(s.id for s in samples),
        traces=(trace,),
    )


def select_base_index(n: int, seed: int) -> int:
    rng = np.random.default_rng(derive_seed(seed, "base-select"))
    return int(rng.permutation(n)[0])


def train_flare(
    train_samples: Sequence[FieldSample], cfg: TrainConfig, bounds=PARAMETER_RANGES
) -> TrainedEnsemble:
    """Both phases: overfit a seeded random base sample, then train jointly."""
    require_valid(cfg)
    samples = list(train_samples)
    if not samples:
        raise InsufficientData("training needs at least one sample")
    base_index = select_base_index(len(samples), cfg.seed)
    logger.info(f"Phase 1 base sample: {samples[base_index].id} (index {base_index})")

    base_w, base_trace = train_base(samples[base_index], cfg)
    ensemble = train_joint(samples, base_w, cfg, bounds)
    return TrainedEnsemble(
        weights=ensemble.weights,
        params=ensemble.params,
        coefficients=ensemble.coefficients,
        final_losses=ensemble.final_losses,
        config=cfg,
        sample_ids=ensemble.sample_ids,
        base_index=base_index,
        traces=(base_trace, *ensemble.traces),
    )


def mixed_network(ens: TrainedEnsemble, p_d) -> tuple[NetworkWeights, AffineCoefficients]:
    coeffs = solve_inference_coeffs(ens.params, p_d)
    return mix_weights(ens.weights, coeffs), coeffs


def predict_field(ens: TrainedEnsemble, p_d, coords) -> np.ndarray:
    """
    Field of the network mixed for query parameters p_d, at unit coordinates.

    Raises:
        UnitRadiusOutOfBand: if a coordinate lies outside the unit bands
    """
    coords = np.asarray(coords, dtype=np.float64)
    if not np.all(unit_band_mask(coords)):
        raise UnitRadiusOutOfBand("query coordinates must lie in the unit bands")
    weights, _ = mixed_network(ens, p_d)
    return forward(weights, coords)


def save_ensemble(ens: TrainedEnsemble, path):
    meta = {
        "architecture": ens.arch.to_dict(),
        "params": ens.params.values.tolist(),
        "bounds": ens.params.bounds.tolist(),
        "sample_ids": list(ens.sample_ids),
        "coefficients": [c.to_dict() for c in ens.coefficients],
        "final_losses": list(ens.final_losses),
        "base_index": ens.base_index,
        "config": ens.config.model_dump(mode="json", exclude={"threads"}),
    }
    return save_checkpoint(path, ens.mode, ens.arch.octaves, ens.arch.widths, ens.weights.values, meta)


def load_ensemble(path) -> TrainedEnsemble:
    """
    Raises:
        FormatError: if the checkpoint is not a FLARE/LAMP ensemble or is inconsistent
    """
    ckpt = load_checkpoint(path)
    if ckpt.kind not in ENSEMBLE_KINDS:
        raise FormatError(f"{path}: checkpoint kind '{ckpt.kind}' is not an ensemble")
    try:
        meta = ckpt.meta
        arch = Architecture.from_dict(meta["architecture"])
        if arch.widths != ckpt.widths or arch.octaves != ckpt.octaves:
            raise FormatError(f"{path}: header layout disagrees with the sidecar architecture")
        return TrainedEnsemble(
            weights=WeightMatrix(ckpt.columns, arch),
            params=ParameterMatrix(np.asarray(meta["params"]), np.asarray(meta["bounds"])),
            coefficients=tuple(AffineCoefficients.from_dict(c) for c in meta["coefficients"]),
            final_losses=tuple(float(v) for v in meta["final_losses"]),
            config=TrainConfig.model_validate(meta["config"]),
            sample_ids=tuple(meta["sample_ids"]),
            base_index=meta.get("base_index"),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f"{path}: malformed ensemble sidecar ({e})") from e
