# src/training/surrogates.py
import logging
from pathlib import Path

import numpy as np

from src.data.storage import load_checkpoint
from src.errors import FormatError
from src.training.baselines import (
    CONDITIONAL_KINDS,
    ConditionalModel,
    load_conditional,
    nn_predict,
    predict_conditional,
)
from src.training.flare import ENSEMBLE_KINDS, TrainedEnsemble, load_ensemble, predict_field

logger = logging.getLogger("FLARE Surrogates")


class BaseSurrogate:
    """A trained method that maps (raw parameters, unit coordinates) to a displacement field."""

    def __init__(self, name: str):
        self.name = name

    def predict(self, p_d, coords) -> np.ndarray:
        raise NotImplementedError


class EnsembleSurrogate(BaseSurrogate):
    def __init__(self, ensemble: TrainedEnsemble):
        super().__init__(name=ensemble.mode)
        self.ensemble = ensemble

    def predict(self, p_d, coords) -> np.ndarray:
        return predict_field(self.ensemble, p_d, coords)


class NearestNeighborSurrogate(BaseSurrogate):
    """Looks up the closest training sample and evaluates its own network."""

    def __init__(self, ensemble: TrainedEnsemble):
        super().__init__(name="nearest")
        self.ensemble = ensemble

    def predict(self, p_d, coords) -> np.ndarray:
        return nn_predict(self.ensemble, p_d, coords)


class ConditionalSurrogate(BaseSurrogate):
    def __init__(self, model: ConditionalModel):
        super().__init__(name=model.kind)
        self.model = model

    def predict(self, p_d, coords) -> np.ndarray:
        return predict_conditional(self.model, p_d, coords)


def load_surrogate(path) -> BaseSurrogate:
    """
    Open any checkpoint by its kind tag.

    Raises:
        FormatError: if the kind has no surrogate
    """
    kind = load_checkpoint(path).kind
    if kind in ENSEMBLE_KINDS:
        return EnsembleSurrogate(load_ensemble(path))
    if kind in CONDITIONAL_KINDS:
        return ConditionalSurrogate(load_conditional(path))
    raise FormatError(f"{path}: checkpoint kind '{kind}' cannot be used for field prediction")


def surrogates_for(paths) -> list[BaseSurrogate]:
    """
    Surrogates for a set of checkpoints plus a nearest-neighbour surrogate
    built from the first LAMP ensemble (or the first FLARE one if there is no LAMP).
    """
    surrogates = [load_surrogate(Path(p)) for p in paths]
    ensembles = [s for s in surrogates if isinstance(s, EnsembleSurrogate)]
    donor = next((s for s in ensembles if s.name == "lamp"), ensembles[0] if ensembles else None)
    if donor is not None:
        surrogates.append(NearestNeighborSurrogate(donor.ensemble))
        logger.info(f"Nearest neighbour uses the networks of the {donor.name} ensemble")
    return surrogates
