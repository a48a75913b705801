from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Any

from cfbench.errors import ConfigError


class Family(str, enum.Enum):
    VAE = "VAE"
    HVAE = "HVAE"
    VAE_GLM = "VAE_GLM"
    GAN = "GAN"
    GAN_FT = "GAN_FT"
    HA_GAN = "HA_GAN"
    IDENTITY = "IDENTITY"  # test double: encode stores the image, decode returns it


class Conditioning(str, enum.Enum):
    CONCAT_EMBEDDING = "ConcatEmbedding"
    GLM = "GLM"


TRAINABLE = (Family.VAE, Family.HVAE, Family.VAE_GLM, Family.GAN, Family.GAN_FT, Family.HA_GAN)
GAN_FAMILIES = (Family.GAN, Family.GAN_FT, Family.HA_GAN)


@dataclass
class ModelConfig:
    family: Family
    resolution: int = 32
    latent_dim: int = 16
    # HVAE: channels of the spatial latent at each level, coarse to fine.
    level_channels: tuple[int, ...] = (2, 1)
    width: int = 16
    bands: int = 4
    lr: float = 1e-3
    # cosine decay of the VAE-family learning rate to zero over the run
    cosine_decay: bool = True
    epochs: int = 30
    batch_size: int = 16
    kl_weight: float = 1.0
    # Laplace scale of the reconstruction likelihood; smaller trusts pixels more.
    recon_scale: float = 0.05
    # GAN-specific
    gan_lr: float = 2e-4
    aux_weight: float = 10.0
    instance_noise: float = 0.02
    encoder_epochs: int = 20
    finetune_epochs: int = 10
    cycle_latent_weight: float = 0.1
    # HA-GAN
    low_res: int = 16
    upsampler_recon_weight: float = 10.0
    seed: int = 0
    conditioning: Conditioning | None = None

    def __post_init__(self):
        self.family = Family(self.family)
        self.level_channels = tuple(int(c) for c in self.level_channels)
        if self.conditioning is None:
            self.conditioning = (Conditioning.GLM if self.family is Family.VAE_GLM
                                 else Conditioning.CONCAT_EMBEDDING)
        self.conditioning = Conditioning(self.conditioning)
        self.validate()

    def validate(self) -> None:
        if self.resolution % 8 or self.resolution < 16:
            raise ConfigError("resolution must be a multiple of 8 and at least 16")
        if self.family is Family.HVAE and len(self.level_channels) < 2:
            raise ConfigError("HVAE needs at least two latent levels")
        if self.family is Family.HVAE and len(self.level_channels) > 2:
            raise ConfigError("this HVAE supports exactly two levels (R/4 and R/2 grids)")
        if self.family is Family.HA_GAN:
            if not self.low_res < self.resolution or self.resolution % self.low_res:
                raise ConfigError("HA_GAN needs low_res < resolution dividing it")
            if self.resolution // self.low_res != 2:
                raise ConfigError("HA_GAN upsamples by exactly 2x")
        if self.family is Family.VAE_GLM and self.conditioning is not Conditioning.GLM:
            raise ConfigError("VAE_GLM conditions through the GLM term")
        for name in ("latent_dim", "width", "bands", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.lr <= 0 or self.gan_lr <= 0:
            raise ConfigError("learning rates must be positive")

    def to_json(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["family"] = self.family.value
        out["conditioning"] = self.conditioning.value
        out["level_channels"] = list(self.level_channels)
        return out

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> ModelConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **changes) -> ModelConfig:
        return dataclasses.replace(self, **changes)


def identity_config(resolution: int = 32) -> ModelConfig:
    return ModelConfig(family=Family.IDENTITY, resolution=resolution)

