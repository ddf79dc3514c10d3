# src/tools/optimizer.py
"""
Adam with linear warmup, reduce-on-plateau decay and early stopping.

All state objects are immutable; each step returns a new state.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from src.errors import LengthMismatch

logger = logging.getLogger("FLARE Optimizer")


@dataclass(frozen=True)
class AdamState:
    t: int
    m: np.ndarray
    v: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, size: int, **kwargs) -> "AdamState":
        return cls(t=0, m=np.zeros(size), v=np.zeros(size), **kwargs)


def adam_step(w: np.ndarray, grad: np.ndarray, state: AdamState, lr: float):
    """
    One bias-corrected Adam update.

    Returns:
        Tuple of (new weights, new state)
    """
    w = np.asarray(w, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if not (w.shape == grad.shape == state.m.shape == state.v.shape):
        raise LengthMismatch(
            f"adam_step length mismatch: w {w.shape}, grad {grad.shape}, state {state.m.shape}"
        )
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")

    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * (grad * grad)
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    w_new = w - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return w_new, replace(state, t=t, m=m, v=v)


@dataclass(frozen=True)
class ScheduleState:
    """Linear warmup followed by reduce-on-plateau on the epoch loss."""

    base_lr: float = 1e-3
    min_lr: float = 1e-5
    factor: float = 0.5
    patience: int = 200
    warmup: int = 500
    min_delta: float = 1e-14
    lr: Optional[float] = None
    best_loss: float = float("inf")
    epochs_since_improve: int = 0

    def __post_init__(self):
        if self.lr is None:
            object.__setattr__(self, "lr", self.base_lr)


def schedule_lr(state: ScheduleState, epoch: int, epoch_loss: float):
    """
    Learning rate for this epoch.

    During warmup (epoch < warmup) the rate ramps linearly to base_lr and the
    plateau counter is not touched. Afterwards the rate is halved (never below
    min_lr) once the loss has failed to improve by more than min_delta for more
    than `patience` consecutive epochs.

    Returns:
        Tuple of (lr, new state)
    """
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    if epoch < state.warmup:
        return state.lr * (epoch + 1) / state.warmup, state

    if epoch_loss < state.best_loss - state.min_delta:
        return state.lr, replace(state, best_loss=float(epoch_loss), epochs_since_improve=0)

    waited = state.epochs_since_improve + 1
    if waited > state.patience:
        lr = max(state.lr * state.factor, state.min_lr)
        if lr < state.lr:
            logger.info(f"Plateau at epoch {epoch}: reducing learning rate to {lr:.3e}")
        return lr, replace(state, lr=lr, epochs_since_improve=0)
    return state.lr, replace(state, epochs_since_improve=waited)


@dataclass(frozen=True)
class EarlyStopState:
    patience: int = 500
    min_delta: float = 1e-14
    best_loss: float = float("inf")
    counter: int = 0


def early_stop(state: EarlyStopState, epoch_loss: float):
    """
    Returns:
        Tuple of (stop, new state); stop is True once `patience` consecutive
        epochs have failed to improve the best loss by more than min_delta.
    """
    if epoch_loss < state.best_loss - state.min_delta:
        return False, replace(state, best_loss=float(epoch_loss), counter=0)
    counter = state.counter + 1
    return counter >= state.patience, replace(state, counter=counter)
