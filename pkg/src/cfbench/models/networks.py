"""Network definitions for the six families.

Every network exposes ``encode(x, a) -> tuple[Tensor, ...]`` (deterministic
abduction) and ``decode(latents, a) -> Tensor`` (prediction), with ``x`` of
shape ``(B, 1, R, R, R)`` in [0, 1] and ``a`` the normalized attributes
``(B, 7)``.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from cfbench.models.config import Family, ModelConfig
from cfbench.models.layers import (
    ConvTrunk,
    Decoder,
    Encoder,
    attribute_code,
    broadcast,
    code_dim,
    down,
    kl_normal,
    up,
)

N_ATTRS = 7


class ConditionalVAE(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.bands = cfg.bands
        emb = code_dim(N_ATTRS, cfg.bands)
        self.encoder = Encoder(cfg.resolution, cfg.width, cfg.latent_dim, emb)
        self.decoder = Decoder(cfg.resolution, cfg.width, cfg.latent_dim, emb)

    def posterior(self, x, a):
        return self.encoder(x, attribute_code(a, self.bands))

    def encode(self, x, a):
        return (self.posterior(x, a)[0],)

    def decode(self, latents, a):
        return self.decoder(latents[0], attribute_code(a, self.bands))

    def loss_terms(self, x, a, noise):
        mu, logvar = self.posterior(x, a)
        z = mu + noise(mu) * (0.5 * logvar).exp()
        xr = self.decoder(z, attribute_code(a, self.bands))
        return xr, kl_normal(mu, logvar)


class GLMVAE(nn.Module):
    """Latent = subject residual + W·attrs; the decoder never sees attrs directly."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.encoder = Encoder(cfg.resolution, cfg.width, cfg.latent_dim, 0)
        self.decoder = Decoder(cfg.resolution, cfg.width, cfg.latent_dim, 0)
        self.glm = nn.Parameter(torch.zeros(cfg.latent_dim, N_ATTRS))

    def attribute_effect(self, a):
        return a @ self.glm.T

    def encode(self, x, a):
        mu, _ = self.encoder(x)
        return (mu - self.attribute_effect(a),)

    def decode(self, latents, a):
        return self.decoder(latents[0] + self.attribute_effect(a))

    def loss_terms(self, x, a, noise):
        mu, logvar = self.encoder(x)
        z = mu + noise(mu) * (0.5 * logvar).exp()
        # the prior sits on the residual, so attribute-driven variation is
        # cheapest to explain through the GLM term
        kl = kl_normal(mu - self.attribute_effect(a), logvar)
        return self.decoder(z), kl


class HierarchicalVAE(nn.Module):
    """Two spatial latent levels at R/4 and R/2.

    Bottom-up features feed both posteriors; the fine posterior also sees the
    top-down decoder state, and the fine prior is predicted from it.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.width
        c1, c2 = cfg.level_channels
        self.bands = cfg.bands
        emb = code_dim(N_ATTRS, cfg.bands)
        self.cc = 8
        self.cond = nn.Linear(emb, self.cc)
        self.down1 = down(1 + self.cc, w)            # R -> R/2
        self.down2 = down(w + self.cc, 2 * w)        # R/2 -> R/4
        self.q1 = nn.Conv3d(2 * w + self.cc, 2 * c1, 3, 1, 1)
        self.top = nn.Sequential(nn.Conv3d(c1 + self.cc, 2 * w, 3, 1, 1), nn.LeakyReLU(0.2))
        self.up1 = up(2 * w + self.cc, w)            # R/4 -> R/2
        self.p2 = nn.Conv3d(w + self.cc, 2 * c2, 3, 1, 1)
        self.q2 = nn.Conv3d(2 * w + self.cc, 2 * c2, 3, 1, 1)
        self.merge = nn.Sequential(nn.Conv3d(w + c2 + self.cc, w, 3, 1, 1), nn.LeakyReLU(0.2))
        self.out = nn.ConvTranspose3d(w + self.cc, 1, 4, 2, 1)  # R/2 -> R

    def _code(self, a):
        return self.cond(attribute_code(a, self.bands))

    @staticmethod
    def _cat(h, code):
        return torch.cat([h, broadcast(code, h)], dim=1)

    def _bottom_up(self, x, code):
        h1 = self.down1(self._cat(x, code))
        h2 = self.down2(self._cat(h1, code))
        return h1, h2

    def _top_down(self, z1, code):
        d = self.top(self._cat(z1, code))
        return self.up1(self._cat(d, code))

    def _finish(self, d1, z2, code):
        h = self.merge(torch.cat([d1, z2, broadcast(code, d1)], dim=1))
        return self.out(self._cat(h, code))

    def _posteriors(self, x, code, z1_fn):
        h1, h2 = self._bottom_up(x, code)
        mu1, lv1 = self.q1(self._cat(h2, code)).chunk(2, dim=1)
        lv1 = lv1.clamp(-12, 8)
        z1 = z1_fn(mu1, lv1)
        d1 = self._top_down(z1, code)
        pmu2, plv2 = self.p2(self._cat(d1, code)).chunk(2, dim=1)
        mu2, lv2 = self.q2(torch.cat([h1, d1, broadcast(code, d1)], dim=1)).chunk(2, dim=1)
        return (mu1, lv1, z1), (mu2, lv2.clamp(-12, 8)), (pmu2, plv2.clamp(-12, 8)), d1

    def encode(self, x, a):
        code = self._code(a)
        (_, _, z1), (mu2, _), _, _ = self._posteriors(x, code, lambda m, lv: m)
        return (z1, mu2)

    def decode(self, latents, a):
        z1, z2 = latents
        code = self._code(a)
        return self._finish(self._top_down(z1, code), z2, code)

    def loss_terms(self, x, a, noise):
        code = self._code(a)
        sample = lambda m, lv: m + noise(m) * (0.5 * lv).exp()  # noqa: E731
        (mu1, lv1, _), (mu2, lv2), (pmu2, plv2), d1 = self._posteriors(x, code, sample)
        z2 = sample(mu2, lv2)
        kl = kl_normal(mu1, lv1) + kl_normal(mu2, lv2, pmu2, plv2)
        return self._finish(d1, z2, code), kl


class Generator(nn.Module):
    def __init__(self, cfg: ModelConfig, resolution: int | None = None, steps: int = 3):
        super().__init__()
        self.bands = cfg.bands
        res = resolution or cfg.resolution
        self.net = Decoder(res, cfg.width, cfg.latent_dim, code_dim(N_ATTRS, cfg.bands),
                           out_resolution_steps=steps)

    def forward(self, z, a):
        return self.net(z, attribute_code(a, self.bands))


class Discriminator(nn.Module):
    """Projection discriminator with an auxiliary attribute regressor."""

    def __init__(self, cfg: ModelConfig, resolution: int | None = None, hidden: int = 128):
        super().__init__()
        self.bands = cfg.bands
        res = resolution or cfg.resolution
        self.trunk = ConvTrunk(res, cfg.width)
        self.hidden = nn.Sequential(nn.Linear(self.trunk.out_features, hidden), nn.LeakyReLU(0.2))
        self.real = nn.Linear(hidden, 1)
        self.proj = nn.Linear(code_dim(N_ATTRS, cfg.bands), hidden, bias=False)
        self.aux = nn.Linear(hidden, N_ATTRS)

    def forward(self, x, a):
        h = self.hidden(self.trunk(x))
        score = self.real(h).squeeze(1) + (h * self.proj(attribute_code(a, self.bands))).sum(1)
        return score, self.aux(h)


class LatentEncoder(nn.Module):
    """GAN inversion network: (image, attrs) -> latent, deterministic."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.bands = cfg.bands
        self.net = Encoder(cfg.resolution, cfg.width, cfg.latent_dim, code_dim(N_ATTRS, cfg.bands))

    def forward(self, x, a):
        return self.net(x, attribute_code(a, self.bands))[0]


class ConditionalGAN(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.generator = Generator(cfg)
        self.discriminator = Discriminator(cfg)
        self.encoder = LatentEncoder(cfg)

    def synthesize(self, z, a):
        return self.generator(z, a)

    def encode(self, x, a):
        return (self.encoder(x, a),)

    def decode(self, latents, a):
        return self.generator(latents[0], a)


class BlockDiscriminator(nn.Module):
    """Unconditional critic for high-resolution sub-blocks."""

    def __init__(self, width: int, block: int):
        super().__init__()
        self.net = nn.Sequential(
            down(1, width), down(width, 2 * width), nn.Flatten(),
            nn.Linear(2 * width * (block // 4) ** 3, 1),
        )

    def forward(self, x):
        return self.net(x).squeeze(1)


class Upsampler(nn.Module):
    """Fully convolutional 2x upsampler; runs on sub-blocks or whole volumes."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.width
        self.bands = cfg.bands
        self.cc = 8
        self.cond = nn.Linear(code_dim(N_ATTRS, cfg.bands), self.cc)
        self.inp = nn.Sequential(nn.Conv3d(1 + self.cc, w, 3, 1, 1), nn.LeakyReLU(0.2))
        self.out = nn.ConvTranspose3d(w + self.cc, 1, 4, 2, 1)

    def forward(self, low, a):
        code = self.cond(attribute_code(a, self.bands))
        h = self.inp(torch.cat([low, broadcast(code, low)], dim=1))
        base = F.interpolate(low, scale_factor=2, mode="trilinear", align_corners=False)
        # residual on top of trilinear upsampling
        return base + self.out(torch.cat([h, broadcast(code, h)], dim=1))


class HierarchicalAmortizedGAN(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.low_res = cfg.low_res
        self.low_generator = Generator(cfg, resolution=cfg.low_res, steps=2)
        self.low_discriminator = Discriminator(cfg, resolution=cfg.low_res)
        self.upsampler = Upsampler(cfg)
        self.block_discriminator = BlockDiscriminator(cfg.width, cfg.low_res)
        self.encoder = LatentEncoder(cfg)

    def synthesize(self, z, a):
        return self.upsampler(self.low_generator(z, a), a)

    def encode(self, x, a):
        return (self.encoder(x, a),)

    def decode(self, latents, a):
        return self.synthesize(latents[0], a)


def build_network(cfg: ModelConfig) -> nn.Module:
    if cfg.family is Family.VAE:
        return ConditionalVAE(cfg)
    if cfg.family is Family.HVAE:
        return HierarchicalVAE(cfg)
    if cfg.family is Family.VAE_GLM:
        return GLMVAE(cfg)
    if cfg.family in (Family.GAN, Family.GAN_FT):
        return ConditionalGAN(cfg)
    if cfg.family is Family.HA_GAN:
        return HierarchicalAmortizedGAN(cfg)
    raise ValueError(f"no network for family {cfg.family}")
