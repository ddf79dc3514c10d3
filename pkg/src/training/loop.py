# src/training/loop.py
"""
Full-batch training loop shared by the field networks and the baselines:
Adam steps driven by the warmup/plateau schedule, stopped early on the epoch
objective.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from src.config import TrainConfig
from src.errors import NonFiniteLoss
from src.tools.optimizer import (
    AdamState,
    EarlyStopState,
    ScheduleState,
    adam_step,
    early_stop,
    schedule_lr,
)

logger = logging.getLogger("FLARE Training Loop")

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class OptimizationTrace:
    """Per-epoch objective and learning rate of one optimisation run."""

    label: str
    losses: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    stopped_early: bool = False
    final_loss: float = float("nan")

    @property
    def epochs(self) -> int:
        return len(self.losses)


def schedule_from_config(cfg: TrainConfig) -> ScheduleState:
    return ScheduleState(
        base_lr=cfg.base_lr,
        min_lr=cfg.min_lr,
        factor=cfg.lr_factor,
        patience=cfg.lr_patience,
        warmup=cfg.warmup_epochs,
        min_delta=cfg.early_stop_min_delta,
    )


def optimize(
    objective: Objective, x0: np.ndarray, epochs: int, cfg: TrainConfig, label: str
) -> tuple[np.ndarray, OptimizationTrace]:
    """
    Run up to `epochs` full-batch Adam steps on `objective` from x0.

    The objective returns (loss, gradient) for a flat parameter vector. The
    returned trace holds the loss seen at the start of every epoch and the
    objective at the returned parameters.
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    adam = AdamState.fresh(x.size)
    schedule = schedule_from_config(cfg)
    stopper = EarlyStopState(patience=cfg.early_stop_patience, min_delta=cfg.early_stop_min_delta)
    trace = OptimizationTrace(label=label)

    logger.info(f"[{label}] Starting {epochs} epochs over {x.size} parameters")
    for epoch in range(epochs):
        loss, grad = objective(x)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"[{label}] objective became {loss} at epoch {epoch}")
        lr, schedule = schedule_lr(schedule, epoch, loss)
        trace.losses.append(float(loss))
        trace.learning_rates.append(float(lr))

        stop, stopper = early_stop(stopper, loss)
        if stop:
            trace.stopped_early = True
            logger.info(f"[{label}] Early stop at epoch {epoch} (best {stopper.best_loss:.6e})")
            break

        x, adam = adam_step(x, grad, adam, lr)
        if (epoch + 1) % cfg.log_every == 0:
            logger.info(f"[{label}] epoch {epoch + 1}: loss {loss:.6e}, lr {lr:.3e}")

    trace.final_loss = float(objective(x)[0])
    logger.info(f"[{label}] Finished after {trace.epochs} epochs: loss {trace.final_loss:.6e}")
    return x, trace
