# src/tools/affine.py
"""
Affine coefficient solvers and weight-space mixing.

Training coefficients reconstruct one sample's (normalised) parameters from
the others over the probability simplex with that sample excluded:

    min ||P a - p_i||^2   s.t.  sum(a) = 1, a >= 0, a_i = 0

Inference coefficients drop the sign constraint and the exclusion:

    min ||P a - p_d||^2   s.t.  sum(a) = 1

and return the minimum-norm minimiser when it is not unique. Mixing forms the
new network's weights as W a.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.linalg import null_space

from src.errors import InsufficientData, LengthMismatch, ShapeMismatch, SolverDivergence
from src.tools.neural_field import Architecture, NetworkWeights

logger = logging.getLogger("FLARE Affine")

MAX_ITERATIONS = 100_000
CONVERGENCE_TOL = 1e-9
KKT_TOL = 1e-7


class CoefficientMode(str, Enum):
    TRAIN_SIMPLEX_EXCL = "train_simplex_excl"
    INFERENCE_AFFINE = "inference_affine"


def normalize_params(values, bounds) -> np.ndarray:
    """Min-max normalise parameter rows (k x N or length-k) with (k, 2) bounds."""
    bounds = np.asarray(bounds, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    lo, hi = bounds[:, 0], bounds[:, 1]
    if values.ndim == 1:
        return (values - lo) / (hi - lo)
    return (values - lo[:, None]) / (hi - lo)[:, None]


@dataclass(frozen=True)
class ParameterMatrix:
    """Raw parameter columns P (k x N) and the per-row normalisation bounds (k x 2)."""

    values: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        bounds = np.asarray(self.bounds, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatch(f"parameter matrix must be 2-D (k x N), got {values.shape}")
        if bounds.shape != (values.shape[0], 2):
            raise ShapeMismatch(
                f"bounds must have shape ({values.shape[0]}, 2), got {bounds.shape}"
            )
        if np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ShapeMismatch("every bound must satisfy lo < hi")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def from_vectors(cls, vectors, bounds) -> "ParameterMatrix":
        return cls(np.column_stack([np.asarray(v, dtype=np.float64) for v in vectors]), bounds)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def normalized(self) -> np.ndarray:
        return normalize_params(self.values, self.bounds)

    def normalize(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64).reshape(-1)
        if p.size != self.k:
            raise ShapeMismatch(f"parameter vector has {p.size} entries, expected {self.k}")
        return normalize_params(p, self.bounds)


@dataclass(frozen=True)
class AffineCoefficients:
    alpha: np.ndarray
    mode: CoefficientMode
    residual: float
    excluded: Optional[int] = None
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha.tolist(),
            "mode": self.mode.value,
            "residual": self.residual,
            "excluded": self.excluded,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AffineCoefficients":
        return cls(
            alpha=np.asarray(data["alpha"], dtype=np.float64),
            mode=CoefficientMode(data["mode"]),
            residual=float(data["residual"]),
            excluded=data.get("excluded"),
            iterations=int(data.get("iterations", 0)),
        )


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = 1} by the sorting method."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - (css - 1.0) / ks > 0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _gradient_mapping_norm(A, b, x, step) -> float:
    grad = 2.0 * A.T @ (A @ x - b)
    return float(np.linalg.norm(x - project_to_simplex(x - step * grad)) / step)


def solve_training_coeffs(P: ParameterMatrix, i: int) -> AffineCoefficients:
    """
    Simplex-constrained coefficients reconstructing sample i from the others.

    Accelerated projected gradient with a fixed 1/L step (L = 2 ||A||_2^2),
    momentum restarted whenever the objective increases, and the gradient
    mapping norm as the stopping test.

    Raises:
        InsufficientData: if fewer than two samples are available
        SolverDivergence: if the iteration cap is hit above the KKT tolerance
    """
    N = P.n
    if N < 2:
        raise InsufficientData(f"training coefficients need N >= 2 samples, got {N}")
    if not 0 <= i < N:
        raise IndexError(f"sample index {i} out of range for N = {N}")

    Q = P.normalized
    others = np.array([j for j in range(N) if j != i])
    A = Q[:, others]
    b = Q[:, i]

    lipschitz = 2.0 * np.linalg.norm(A, 2) ** 2
    x = np.full(others.size, 1.0 / others.size)
    iterations = 0
    if lipschitz > 0 and others.size > 1:
        step = 1.0 / lipschitz
        y = x.copy()
        t = 1.0
        f_prev = float(np.sum((A @ x - b) ** 2))
        for iterations in range(1, MAX_ITERATIONS + 1):
            grad = 2.0 * A.T @ (A @ y - b)
            x_new = project_to_simplex(y - step * grad)
            f_new = float(np.sum((A @ x_new - b) ** 2))
            if f_new > f_prev and t > 1.0:
                # restart momentum from the last iterate
                y = x.copy()
                t = 1.0
                continue
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            x, t, f_prev = x_new, t_new, f_new
            if _gradient_mapping_norm(A, b, x, step) < CONVERGENCE_TOL:
                break
        else:
            kkt = _gradient_mapping_norm(A, b, x, step)
            if kkt >= KKT_TOL:
                raise SolverDivergence(
                    f"simplex solve for sample {i} stopped after {MAX_ITERATIONS} iterations "
                    f"with projected-gradient norm {kkt:.3e}"
                )
            logger.warning(
                f"Sample {i}: iteration cap reached, accepting KKT-tolerance solution ({kkt:.3e})"
            )

    alpha = np.zeros(N)
    alpha[others] = x
    residual = float(np.linalg.norm(Q @ alpha - b))
    return AffineCoefficients(
        alpha=alpha,
        mode=CoefficientMode.TRAIN_SIMPLEX_EXCL,
        residual=residual,
        excluded=i,
        iterations=iterations,
    )


def projected_gradient_norm(P: ParameterMatrix, coeffs: AffineCoefficients) -> float:
    """KKT measure of a training-mode solution over the feasible set (gradient mapping norm)."""
    Q = P.normalized
    i = coeffs.excluded
    others = np.array([j for j in range(P.n) if j != i])
    A = Q[:, others]
    lipschitz = 2.0 * np.linalg.norm(A, 2) ** 2
    if lipschitz == 0 or others.size == 1:
        return 0.0
    return _gradient_mapping_norm(A, Q[:, i], coeffs.alpha[others], 1.0 / lipschitz)


def solve_inference_coeffs(P: ParameterMatrix, p_d) -> AffineCoefficients:
    """
    Minimum-norm affine coefficients for a query parameter vector (raw units).

    With a0 = 1/N and Z an orthonormal basis of the sum-zero subspace, every
    feasible a is a0 + Z beta and ||a||^2 = ||a0||^2 + ||beta||^2, so the
    minimum-norm least-squares beta gives the minimum-norm minimiser a.
    """
    N = P.n
    if N < 1:
        raise InsufficientData("inference coefficients need at least one training sample")
    Q = P.normalized
    target = P.normalize(p_d)

    a0 = np.full(N, 1.0 / N)
    if N == 1:
        alpha = a0
    else:
        Z = null_space(np.ones((1, N)))
        beta, *_ = np.linalg.lstsq(Q @ Z, target - Q @ a0, rcond=None)
        alpha = a0 + Z @ beta
    residual = float(np.linalg.norm(Q @ alpha - target))
    return AffineCoefficients(
        alpha=alpha, mode=CoefficientMode.INFERENCE_AFFINE, residual=residual
    )


@dataclass(frozen=True)
class WeightMatrix:
    """Flattened weights of N networks stacked as the columns of a D x N matrix."""

    values: np.ndarray
    arch: Architecture

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != self.arch.n_params:
            raise LengthMismatch(
                f"weight matrix must have {self.arch.n_params} rows, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def from_networks(cls, networks: list[NetworkWeights]) -> "WeightMatrix":
        if not networks:
            raise InsufficientData("cannot stack an empty list of networks")
        arch = networks[0].arch
        if any(net.arch != arch for net in networks):
            raise ShapeMismatch("all networks in a weight matrix must share one architecture")
        return cls(np.column_stack([net.flat for net in networks]), arch)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def column(self, j: int) -> NetworkWeights:
        return NetworkWeights(self.values[:, j], self.arch)


def mix_weights(W: WeightMatrix, alpha) -> NetworkWeights:
    """New network weights W a."""
    a = alpha.alpha if isinstance(alpha, AffineCoefficients) else np.asarray(alpha, dtype=np.float64)
    if a.ndim != 1 or a.size != W.n:
        raise LengthMismatch(f"coefficient vector has length {a.size}, weight matrix has {W.n} columns")
    return NetworkWeights(W.values @ a, W.arch)
