"""Training and seed-optimisation configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

GP_PENALTY = "penalty"
GP_CLIP = "clip"

ZOPT_KL_ANCHOR = "kl_anchor"
ZOPT_RENORMALIZE = "renormalize"
ZOPT_UNCONSTRAINED = "unconstrained"


@dataclass(frozen=True)
class TrainingConfig:
    """Adversarial training settings shared by both methods.

    ``content_coeff`` scales the boundary content loss (0 turns the trainer
    into a plain WGAN-GP).  ``gp_mode`` selects the gradient penalty or, as a
    fallback, weight clipping to +/- ``clip_value``.
    """

    content_coeff: float = 1.0
    gp_weight: float = 10.0
    critic_per_g: int = 10
    batch_size: int = 8
    learning_rate: float = 1e-4
    adam_betas: tuple[float, float] = (0.9, 0.99)
    i_max: int = 100_000
    snapshot_every: int = 500
    patch_size: int = 64
    augmentation: str = "flips_and_rot90"
    gp_mode: str = GP_PENALTY
    clip_value: float = 0.01
    g_widths: tuple[int, int, int] = (512, 256, 128)
    d_widths: tuple[int, int, int, int] = (64, 128, 256, 512)
    latent_depth: int = 100

    def __post_init__(self):
        if self.content_coeff < 0 or self.gp_weight < 0:
            raise ValueError("loss coefficients must be non-negative")
        if self.critic_per_g < 1:
            raise ValueError("critic_per_g must be >= 1")
        for name in ("batch_size", "learning_rate", "i_max", "snapshot_every", "patch_size", "clip_value", "latent_depth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gp_mode not in (GP_PENALTY, GP_CLIP):
            raise ValueError(f"unknown gp_mode: {self.gp_mode!r}")
        object.__setattr__(self, "adam_betas", tuple(self.adam_betas))
        object.__setattr__(self, "g_widths", tuple(self.g_widths))
        object.__setattr__(self, "d_widths", tuple(self.d_widths))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def updated(self, **kwargs) -> "TrainingConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class ZOptConfig:
    """Post-hoc latent-seed optimisation settings."""

    iterations: int = 10_000
    seed_lr: float = 1e-2
    kl_weight: float = 1.0
    mode: str = ZOPT_KL_ANCHOR
    record_every: int = 100

    def __post_init__(self):
        if self.iterations <= 0 or self.seed_lr <= 0 or self.record_every <= 0:
            raise ValueError("iterations, seed_lr and record_every must be positive")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be non-negative")
        if self.mode not in (ZOPT_KL_ANCHOR, ZOPT_RENORMALIZE, ZOPT_UNCONSTRAINED):
            raise ValueError(f"unknown z-opt mode: {self.mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ZOptConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def updated(self, **kwargs) -> "ZOptConfig":
        return replace(self, **kwargs)
