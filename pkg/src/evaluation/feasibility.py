# src/evaluation/feasibility.py
"""
Feasibility discriminator: polynomial features of the normalised parameters
and L1-regularised logistic regression, evaluated by ROC AUC.
"""
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata
from sklearn.model_selection import StratifiedKFold, train_test_split
from sklearn.preprocessing import PolynomialFeatures

from src.config import derive_seed
from src.data.dataset import Dataset
from src.data.storage import load_checkpoint, save_checkpoint
from src.errors import FormatError, InsufficientData, ShapeMismatch, SingleClass

logger = logging.getLogger("FLARE Feasibility")

L1_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
DEFAULT_DEGREE = 2
CV_FOLDS = 5
TEST_FRACTION = 0.2
OBJECTIVE_TOL = 1e-10
MAX_ITERATIONS = 50_000


def poly_features(p_bar, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """
    All monomials of total degree 1..degree in graded-lexicographic order.
    Accepts one vector or rows of vectors; returns the same rank.
    """
    x = np.asarray(p_bar, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    features = PolynomialFeatures(degree=degree, include_bias=False).fit_transform(rows)
    return features[0] if single else features


@dataclass(frozen=True)
class FeasibilityModel:
    degree: int
    coefficients: np.ndarray
    intercept: float
    l1_strength: float
    n_inputs: int = 7

    def __post_init__(self):
        coefficients = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        expected = PolynomialFeatures(degree=self.degree, include_bias=False).fit(
            np.zeros((1, self.n_inputs))
        ).n_output_features_
        if coefficients.size != expected:
            raise ShapeMismatch(
                f"degree-{self.degree} model over {self.n_inputs} inputs needs {expected} "
                f"coefficients, got {coefficients.size}"
            )
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(self.coefficients))


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if not np.all((y == 0) | (y == 1)):
        raise ShapeMismatch("labels must be 0/1")
    if y.size == 0 or y.min() == y.max():
        raise SingleClass("labels contain a single class")
    return y


def _objective(X, y, coef, intercept, l1_strength) -> float:
    s = X @ coef + intercept
    return float(np.mean(np.logaddexp(0.0, s) - y * s) + l1_strength * np.sum(np.abs(coef)))


def train_logreg_l1(X, y, l1_strength: float, degree: int = 1, n_inputs=None) -> FeasibilityModel:
    """
    Proximal gradient descent on mean logistic loss + l1_strength * ||coef||_1
    (intercept unpenalised), fixed step 1/L with L = ||[X 1]||_2^2 / (4 n).
    Stops when the objective changes by less than 1e-10.

    X holds already-expanded features; degree/n_inputs describe that expansion.

    Raises:
        SingleClass: if y holds only one class
    """
    X = np.asarray(X, dtype=np.float64)
    y = _check_labels(y)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeMismatch(f"X {X.shape} does not match {y.size} labels")
    if l1_strength < 0:
        raise ValueError(f"l1_strength must be >= 0, got {l1_strength}")
    n = y.size
    augmented = np.hstack([X, np.ones((n, 1))])
    step = 4.0 * n / np.linalg.norm(augmented, 2) ** 2

    prior = y.mean()
    coef = np.zeros(X.shape[1])
    intercept = float(np.log(prior / (1.0 - prior)))
    previous = _objective(X, y, coef, intercept, l1_strength)
    for iteration in range(1, MAX_ITERATIONS + 1):
        r = expit(X @ coef + intercept) - y
        z = coef - step * (X.T @ r) / n
        coef = np.sign(z) * np.maximum(np.abs(z) - step * l1_strength, 0.0)
        intercept -= step * float(r.mean())
        current = _objective(X, y, coef, intercept, l1_strength)
        if abs(previous - current) < OBJECTIVE_TOL:
            break
        previous = current
    else:
        logger.warning(f"L1 logistic regression hit {MAX_ITERATIONS} iterations (lambda {l1_strength})")

    return FeasibilityModel(
        degree=degree,
        coefficients=coef,
        intercept=intercept,
        l1_strength=l1_strength,
        n_inputs=n_inputs if n_inputs is not None else X.shape[1],
    )


def predict_proba(model: FeasibilityModel, p_bar) -> np.ndarray:
    """Feasible-class probability for one normalised vector or rows of them."""
    return expit(poly_features(p_bar, model.degree) @ model.coefficients + model.intercept)


def roc_auc(labels, scores) -> float:
    """Mann-Whitney AUC with average ranks, so ties earn half credit."""
    y = _check_labels(labels)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.size != y.size:
        raise ShapeMismatch(f"{scores.size} scores for {y.size} labels")
    ranks = rankdata(scores)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _log_loss(model: FeasibilityModel, features, y) -> float:
    s = features @ model.coefficients + model.intercept
    return float(np.mean(np.logaddexp(0.0, s) - y * s))


def select_l1_strength(
    p_bar, labels, seed: int, degree: int = DEFAULT_DEGREE, grid: Sequence[float] = L1_GRID
) -> tuple[float, dict[float, float]]:
    """
    Stratified k-fold choice of the L1 strength by mean validation log-loss.
    Ties go to the larger strength.

    Returns:
        Tuple of (chosen strength, {strength: mean validation log-loss})
    """
    y = _check_labels(labels)
    p_bar = np.asarray(p_bar, dtype=np.float64)
    minority = int(min(y.sum(), y.size - y.sum()))
    folds = min(CV_FOLDS, minority)
    if folds < 2:
        raise InsufficientData("cross-validation needs at least 2 samples of each class")
    features = poly_features(p_bar, degree)
    splitter = StratifiedKFold(
        n_splits=folds, shuffle=True, random_state=derive_seed(seed, "feas-cv") % 2**32
    )
    scores = {}
    for strength in sorted(grid):
        losses = []
        for train_idx, val_idx in splitter.split(features, y):
            model = train_logreg_l1(
                features[train_idx], y[train_idx], strength, degree, p_bar.shape[1]
            )
            losses.append(_log_loss(model, features[val_idx], y[val_idx]))
        scores[strength] = float(np.mean(losses))
    best = min(scores.values())
    chosen = max(s for s, v in scores.items() if v == best)
    logger.info(f"Selected L1 strength {chosen} ({folds}-fold log-loss {best:.4f})")
    return chosen, scores


@dataclass(frozen=True)
class FeasibilityReport:
    model: FeasibilityModel
    accuracy: float
    auc: float
    n_train: int
    n_test: int
    cv_scores: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "degree": self.model.degree,
            "l1_strength": self.model.l1_strength,
            "n_nonzero": self.model.n_nonzero,
            "accuracy": self.accuracy,
            "auc": self.auc,
            "n_train": self.n_train,
            "n_test": self.n_test,
        }


def fit_feasibility(dataset: Dataset, seed: int, degree: int = DEFAULT_DEGREE) -> FeasibilityReport:
    """
    Stratified 80/20 split of the labelled samples, L1 strength chosen by
    cross-validation on the 80%, accuracy and AUC on the 20%.
    """
    labelled = [s for s in dataset.samples if s.feasible is not None]
    if len(labelled) < 10:
        raise InsufficientData(f"feasibility fitting needs >= 10 labelled samples, got {len(labelled)}")
    p_bar = dataset.normalized_params(labelled)
    y = np.array([1.0 if s.feasible else 0.0 for s in labelled])
    _check_labels(y)

    train_x, test_x, train_y, test_y = train_test_split(
        p_bar,
        y,
        test_size=TEST_FRACTION,
        stratify=y,
        random_state=derive_seed(seed, "feas-split") % 2**32,
    )
    strength, cv_scores = select_l1_strength(train_x, train_y, seed, degree)
    model = train_logreg_l1(
        poly_features(train_x, degree), train_y, strength, degree, p_bar.shape[1]
    )
    probabilities = predict_proba(model, test_x)
    accuracy = float(np.mean((probabilities >= 0.5) == (test_y == 1)))
    auc = roc_auc(test_y, probabilities)
    logger.info(f"Feasibility model: accuracy {accuracy:.3f}, AUC {auc:.3f} on {len(test_y)} held-out")
    return FeasibilityReport(model, accuracy, auc, len(train_y), len(test_y), cv_scores)


def save_feasibility(model: FeasibilityModel, path):
    columns = np.concatenate([[model.intercept], model.coefficients])
    meta = {"degree": model.degree, "l1_strength": model.l1_strength, "n_inputs": model.n_inputs}
    return save_checkpoint(path, "feas", 0, (model.n_inputs, 1), columns, meta)


def load_feasibility(path) -> FeasibilityModel:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "feas":
        raise FormatError(f"{path}: checkpoint kind '{ckpt.kind}' is not a feasibility model")
    try:
        column = ckpt.columns[:, 0]
        return FeasibilityModel(
            degree=int(ckpt.meta["degree"]),
            coefficients=column[1:],
            intercept=float(column[0]),
            l1_strength=float(ckpt.meta["l1_strength"]),
            n_inputs=int(ckpt.meta["n_inputs"]),
        )
    except (KeyError, ShapeMismatch) as e:
        raise FormatError(f"{path}: malformed feasibility checkpoint ({e})") from e
