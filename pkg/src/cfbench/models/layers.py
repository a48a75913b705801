"""Small 3D conv building blocks shared by the model families."""

from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F


def fourier_features(attrs: torch.Tensor, bands: int) -> torch.Tensor:
    """Torch twin of :func:`cfbench.attributes.fourier_embed` (same layout)."""
    freqs = (2.0 ** torch.arange(bands, dtype=attrs.dtype, device=attrs.device)) * math.pi
    ang = attrs[..., :, None] * freqs
    return torch.stack([torch.sin(ang), torch.cos(ang)], dim=-1).flatten(-3)


def attribute_code(attrs: torch.Tensor, bands: int) -> torch.Tensor:
    """Raw attributes followed by their Fourier features.

    The sinusoids alone have period 2 in each attribute, so the endpoints -1
    and +1 of the normalized range embed identically; keeping the raw value
    makes the code injective.
    """
    return torch.cat([attrs, fourier_features(attrs, bands)], dim=-1)


def code_dim(n_attrs: int, bands: int) -> int:
    return n_attrs * (1 + 2 * bands)


def broadcast(code: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    """Tile a (B, C) code over the spatial dims of ``like``."""
    return code[:, :, None, None, None].expand(-1, -1, *like.shape[2:])


def down(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(nn.Conv3d(cin, cout, 4, 2, 1), nn.LeakyReLU(0.2))


def up(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(nn.ConvTranspose3d(cin, cout, 4, 2, 1), nn.LeakyReLU(0.2))


class ConvTrunk(nn.Module):
    """Three stride-2 convolutions, flattened."""

    def __init__(self, resolution: int, width: int, in_channels: int = 1):
        super().__init__()
        self.net = nn.Sequential(
            down(in_channels, width), down(width, 2 * width), down(2 * width, 4 * width),
            nn.Flatten(),
        )
        self.out_features = 4 * width * (resolution // 8) ** 3

    def forward(self, x):
        return self.net(x)


class Encoder(nn.Module):
    """Image (+ optional attribute embedding) -> (mean, log-variance)."""

    def __init__(self, resolution: int, width: int, latent_dim: int, cond_dim: int,
                 hidden: int = 256):
        super().__init__()
        self.trunk = ConvTrunk(resolution, width)
        self.cond_dim = cond_dim
        self.head = nn.Sequential(
            nn.Linear(self.trunk.out_features + cond_dim, hidden), nn.LeakyReLU(0.2),
            nn.Linear(hidden, 2 * latent_dim),
        )

    def forward(self, x, cond=None):
        h = self.trunk(x)
        if self.cond_dim:
            h = torch.cat([h, cond], dim=1)
        mu, logvar = self.head(h).chunk(2, dim=1)
        return mu, logvar.clamp(-12.0, 8.0)


class Decoder(nn.Module):
    """Latent (+ attribute embedding) -> volume.

    The output head is linear and callers clamp to [0, 1] at inference; a
    sigmoid head saturates on the mostly-zero background under an L1 loss.
    With ``cond_dim > 0`` a small projection of the embedding is also tiled and
    concatenated at every upsampling stage.
    """

    def __init__(self, resolution: int, width: int, latent_dim: int, cond_dim: int,
                 cond_channels: int = 8, out_resolution_steps: int = 3):
        super().__init__()
        self.width = width
        self.cond_dim = cond_dim
        self.base = resolution // 2**out_resolution_steps
        self.fc = nn.Linear(latent_dim + cond_dim, 4 * width * self.base**3)
        cc = cond_channels if cond_dim else 0
        self.cond_proj = nn.Linear(cond_dim, cc) if cond_dim else None
        self.ups = nn.ModuleList()
        cin = 4 * width
        for i in range(out_resolution_steps - 1):
            cout = max(width, (4 * width) >> (i + 1))
            self.ups.append(up(cin + cc, cout))
            cin = cout
        # the last upsampling step emits the image directly; a full-resolution
        # feature layer costs ~6x more on CPU
        self.out = nn.ConvTranspose3d(cin + cc, 1, 4, 2, 1)

    def forward(self, z, cond=None):
        if self.cond_dim:
            z = torch.cat([z, cond], dim=1)
            code = self.cond_proj(cond)
        h = F.leaky_relu(self.fc(z), 0.2).view(-1, 4 * self.width, self.base, self.base, self.base)
        for block in self.ups:
            if self.cond_dim:
                h = torch.cat([h, broadcast(code, h)], dim=1)
            h = block(h)
        if self.cond_dim:
            h = torch.cat([h, broadcast(code, h)], dim=1)
        return self.out(h)


def kl_normal(mu, logvar, prior_mu=None, prior_logvar=None) -> torch.Tensor:
    """KL(q || p) per sample, summed over all non-batch dims."""
    if prior_mu is None:
        kl = 0.5 * (mu.pow(2) + logvar.exp() - 1.0 - logvar)
    else:
        kl = 0.5 * (prior_logvar - logvar
                    + (logvar.exp() + (mu - prior_mu).pow(2)) / prior_logvar.exp() - 1.0)
    return kl.flatten(1).sum(1)
