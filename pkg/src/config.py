# src/config.py
import hashlib
import os
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Thread count used when --threads is not given (FLARE_THREADS)
    THREADS: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    model_config = SettingsConfigDict(
        env_prefix="FLARE_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )


settings = Settings()


class TrainConfig(BaseModel):
    """
    Hyperparameters for FLARE/LAMP training and the conditional baselines.

    Defaults are the desk-scale settings; TrainConfig.full() gives the
    full-size network and epoch budget.
    """

    model_config = ConfigDict(frozen=True)

    hidden_widths: tuple[int, ...] = (64, 64)
    octaves: int = Field(default=3, ge=0)
    reg_weight: float = Field(default=0.3, ge=0.0)
    mode: Literal["flare", "lamp"] = "flare"

    phase1_epochs: int = Field(default=5_000, ge=0)
    phase2_epochs: int = Field(default=5_000, ge=0)
    baseline_epochs: int = Field(default=5_000, ge=0)

    base_lr: float = Field(default=1e-3, gt=0.0)
    min_lr: float = Field(default=1e-5, gt=0.0)
    lr_factor: float = Field(default=0.5, gt=0.0, lt=1.0)
    lr_patience: int = Field(default=200, ge=0)
    warmup_epochs: int = Field(default=500, ge=0)
    early_stop_patience: int = Field(default=500, ge=1)
    early_stop_min_delta: float = Field(default=1e-14, ge=0.0)

    # DeepONet latent width per output head
    deeponet_latent: int = Field(default=64, ge=1)

    seed: int = 0
    threads: int = Field(default=1, ge=1)
    log_every: int = Field(default=1_000, ge=1)

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        return cls(**overrides)

    @classmethod
    def full(cls, **overrides) -> "TrainConfig":
        values = {
            "hidden_widths": (512, 512, 512, 512),
            "phase1_epochs": 500_000,
            "phase2_epochs": 500_000,
            "baseline_epochs": 500_000,
        }
        values.update(overrides)
        return cls(**values)

    @classmethod
    def lamp(cls, **overrides) -> "TrainConfig":
        """LAMP ablation: identical settings with the weight-space regulariser switched off."""
        overrides.update(mode="lamp", reg_weight=0.0)
        return cls(**overrides)


def validate_train_config(cfg: TrainConfig) -> tuple[bool, list[str]]:
    """
    Cross-field checks that pydantic field constraints cannot express.

    Returns:
        Tuple of (is_valid, error_messages)

    Validation Rules:
    - hidden_widths must be non-empty with positive entries
    - mode "lamp" requires reg_weight == 0 and mode "flare" requires reg_weight > 0
    - min_lr must not exceed base_lr
    """
    errors = []

    if len(cfg.hidden_widths) == 0:
        errors.append("hidden_widths cannot be empty")
    elif any(width <= 0 for width in cfg.hidden_widths):
        errors.append("hidden_widths must all be positive")

    if cfg.mode == "lamp" and cfg.reg_weight != 0.0:
        errors.append(f"mode 'lamp' requires reg_weight == 0, got {cfg.reg_weight}")
    if cfg.mode == "flare" and cfg.reg_weight == 0.0:
        errors.append("mode 'flare' requires reg_weight > 0 (use mode 'lamp' for the ablation)")

    if cfg.min_lr > cfg.base_lr:
        errors.append(f"min_lr ({cfg.min_lr}) must not exceed base_lr ({cfg.base_lr})")

    return len(errors) == 0, errors


def derive_seed(root_seed: int, stage: str) -> int:
    """
    Stage seed derived from the run's root seed: the first 8 bytes of
    SHA-256("<root>:<stage>") as an unsigned integer.
    """
    digest = hashlib.sha256(f"{root_seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
