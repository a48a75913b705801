"""Training loops. All randomness flows from ``ModelConfig.seed``."""

from __future__ import annotations

import copy
import logging
import math

import numpy as np
import torch
from torch.nn import functional as F

from cfbench.errors import DivergenceError
from cfbench.models.config import Family, ModelConfig

log = logging.getLogger(__name__)


class _Noise:
    def __init__(self, seed: int):
        self.gen = torch.Generator().manual_seed(seed)

    def __call__(self, like: torch.Tensor) -> torch.Tensor:
        return torch.randn(like.shape, generator=self.gen, dtype=like.dtype)

    def normal(self, *shape) -> torch.Tensor:
        return torch.randn(*shape, generator=self.gen)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield torch.from_numpy(perm[i:i + batch_size])


def _check(values: dict[str, float], stage: str) -> None:
    for k, v in values.items():
        if not math.isfinite(v):
            raise DivergenceError(f"{stage}: {k} became {v}")


def _mean_rows(rows: list[dict[str, float]]) -> dict[str, float]:
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}


def _schedule(opt, cfg: ModelConfig, epochs: int):
    if not cfg.cosine_decay:
        return None
    return torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(1, epochs))


def train_vae_like(net, cfg: ModelConfig, X: torch.Tensor, A: torch.Tensor) -> list[dict]:
    """VAE, HVAE and VAE-GLM: Laplace reconstruction likelihood plus KL."""
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    sched = _schedule(opt, cfg, cfg.epochs)
    noise = _Noise(cfg.seed + 1)
    rng = np.random.default_rng(cfg.seed)
    n_vox = float(X[0].numel())
    history = []
    net.train()
    for epoch in range(1, cfg.epochs + 1):
        rows = []
        for idx in _batches(len(X), cfg.batch_size, rng):
            x, a = X[idx], A[idx]
            xr, kl = net.loss_terms(x, a, noise)
            recon = (x - xr).abs().flatten(1).sum(1)
            loss = (recon / cfg.recon_scale + cfg.kl_weight * kl).mean() / n_vox
            opt.zero_grad()
            loss.backward()
            opt.step()
            rows.append({"loss": loss.item(), "recon_l1": (recon / n_vox).mean().item(),
                         "kl": kl.mean().item()})
        if sched is not None:
            sched.step()
        row = {"stage": 0.0, "epoch": float(epoch), **_mean_rows(rows)}
        _check(row, cfg.family.value)
        history.append(row)
        log.debug("%s epoch %d %s", cfg.family.value, epoch, row)
    net.eval()
    return history


def _adversarial_epoch(G, D, opt_g, opt_d, cfg, X, A, noise, rng):
    rows = []
    for idx in _batches(len(X), cfg.batch_size, rng):
        x, a = X[idx], A[idx]
        x_real = x + cfg.instance_noise * noise(x)
        z = noise.normal(len(x), cfg.latent_dim)
        fake = G(z, a)
        s_real, aux_real = D(x_real, a)
        s_fake, _ = D(fake.detach() + cfg.instance_noise * noise(fake), a)
        d_loss = (F.softplus(-s_real).mean() + F.softplus(s_fake).mean()
                  + cfg.aux_weight * F.mse_loss(aux_real, a))
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()

        s_fake, aux_fake = D(fake + cfg.instance_noise * noise(fake), a)
        g_adv = F.softplus(-s_fake).mean()
        g_aux = F.mse_loss(aux_fake, a)
        g_loss = g_adv + cfg.aux_weight * g_aux
        opt_g.zero_grad()
        g_loss.backward()
        opt_g.step()
        rows.append({"d_loss": d_loss.item(), "g_adv": g_adv.item(), "g_aux": g_aux.item(),
                     "d_aux": F.mse_loss(aux_real, a).item()})
    return _mean_rows(rows)


def _freeze(module, frozen: bool = True):
    for p in module.parameters():
        p.requires_grad_(not frozen)


def train_latent_encoder(net, cfg: ModelConfig, A: torch.Tensor, stage: float) -> list[dict]:
    """Fit the inversion encoder on generated samples with the generator frozen."""
    noise = _Noise(cfg.seed + 3)
    rng = np.random.default_rng(cfg.seed + 3)
    _freeze(net)
    _freeze(net.encoder, False)
    opt = torch.optim.Adam(net.encoder.parameters(), lr=cfg.lr)
    history = []
    for epoch in range(1, cfg.encoder_epochs + 1):
        rows = []
        for idx in _batches(len(A), cfg.batch_size, rng):
            a = A[idx]
            z = noise.normal(len(a), cfg.latent_dim)
            with torch.no_grad():
                x = net.synthesize(z, a)
                x = x + cfg.instance_noise * noise(x)
            loss = F.mse_loss(net.encoder(x, a), z)
            opt.zero_grad()
            loss.backward()
            opt.step()
            rows.append({"enc_latent_mse": loss.item()})
        row = {"stage": stage, "epoch": float(epoch), **_mean_rows(rows)}
        _check(row, "encoder")
        history.append(row)
    _freeze(net, False)
    return history


def train_gan(net, cfg: ModelConfig, X: torch.Tensor, A: torch.Tensor) -> list[dict]:
    noise = _Noise(cfg.seed + 1)
    rng = np.random.default_rng(cfg.seed)
    opt_g = torch.optim.Adam(net.generator.parameters(), lr=cfg.gan_lr, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(net.discriminator.parameters(), lr=cfg.gan_lr, betas=(0.5, 0.999))
    history = []
    net.train()
    for epoch in range(1, cfg.epochs + 1):
        row = {"stage": 0.0, "epoch": float(epoch),
               **_adversarial_epoch(net.generator, net.discriminator, opt_g, opt_d, cfg, X, A,
                                    noise, rng)}
        _check(row, "GAN")
        history.append(row)
    history += train_latent_encoder(net, cfg, A, stage=1.0)
    net.eval()
    return history


def _random_block(X: torch.Tensor, low: torch.Tensor, block: int, rng):
    """Aligned sub-blocks: ``block`` voxels of the full-res target, half that at low res."""
    half = block // 2
    o = [int(rng.integers(0, low.shape[-1] - half + 1)) for _ in range(3)]
    lo = low[..., o[0]:o[0] + half, o[1]:o[1] + half, o[2]:o[2] + half]
    hi = X[..., 2 * o[0]:2 * o[0] + block, 2 * o[1]:2 * o[1] + block, 2 * o[2]:2 * o[2] + block]
    return lo, hi


def train_hagan(net, cfg: ModelConfig, X: torch.Tensor, A: torch.Tensor) -> list[dict]:
    noise = _Noise(cfg.seed + 1)
    rng = np.random.default_rng(cfg.seed)
    low = F.avg_pool3d(X, 2)
    history = []
    net.train()
    opt_g = torch.optim.Adam(net.low_generator.parameters(), lr=cfg.gan_lr, betas=(0.5, 0.999))
    opt_d = torch.optim.Adam(net.low_discriminator.parameters(), lr=cfg.gan_lr,
                             betas=(0.5, 0.999))
    low_cfg = cfg.replace(instance_noise=cfg.instance_noise / 2)
    for epoch in range(1, cfg.epochs + 1):
        row = {"stage": 0.0, "epoch": float(epoch),
               **_adversarial_epoch(net.low_generator, net.low_discriminator, opt_g, opt_d,
                                    low_cfg, low, A, noise, rng)}
        _check(row, "HA_GAN stage 1")
        history.append(row)

    opt_u = torch.optim.Adam(net.upsampler.parameters(), lr=cfg.gan_lr, betas=(0.5, 0.999))
    opt_b = torch.optim.Adam(net.block_discriminator.parameters(), lr=cfg.gan_lr,
                             betas=(0.5, 0.999))
    block = cfg.low_res
    for epoch in range(1, cfg.epochs + 1):
        rows = []
        for idx in _batches(len(X), cfg.batch_size, rng):
            lo, hi = _random_block(X[idx], low[idx], block, rng)
            a = A[idx]
            pred = net.upsampler(lo, a)
            real_s = net.block_discriminator(hi + cfg.instance_noise * noise(hi))
            fake_s = net.block_discriminator(pred.detach() + cfg.instance_noise * noise(pred))
            d_loss = F.softplus(-real_s).mean() + F.softplus(fake_s).mean()
            opt_b.zero_grad()
            d_loss.backward()
            opt_b.step()
            adv = F.softplus(-net.block_discriminator(pred + cfg.instance_noise * noise(pred))).mean()
            rec = (pred - hi).abs().mean()
            loss = adv + cfg.upsampler_recon_weight * rec
            opt_u.zero_grad()
            loss.backward()
            opt_u.step()
            rows.append({"up_recon_l1": rec.item(), "up_adv": adv.item(), "block_d": d_loss.item()})
        row = {"stage": 1.0, "epoch": float(epoch), **_mean_rows(rows)}
        _check(row, "HA_GAN stage 2")
        history.append(row)
    history += train_latent_encoder(net, cfg, A, stage=2.0)
    net.eval()
    return history


def cycle_losses(net, cfg: ModelConfig, X: torch.Tensor, A: torch.Tensor, seed: int
                 ) -> tuple[float, float]:
    """Mean image-space L1 cycle and latent-space L2 cycle over a dataset."""
    noise = _Noise(seed)
    img, lat = [], []
    with torch.no_grad():
        for i in range(0, len(X), 32):
            x, a = X[i:i + 32], A[i:i + 32]
            img.append((x - net.generator(net.encoder(x, a), a)).abs().flatten(1).mean(1))
            z = noise.normal(len(x), cfg.latent_dim)
            xg = net.generator(z, a)
            zr = net.encoder(xg + cfg.instance_noise * noise(xg), a)
            lat.append((zr - z).norm(dim=1))
    return torch.cat(img).mean().item(), torch.cat(lat).mean().item()


def finetune_cyclic(net, cfg: ModelConfig, X: torch.Tensor, A: torch.Tensor):
    """Refine only the encoder with image- and latent-space cycle losses."""
    net = copy.deepcopy(net)
    noise = _Noise(cfg.seed + 5)
    rng = np.random.default_rng(cfg.seed + 5)
    _freeze(net)
    _freeze(net.encoder, False)
    opt = torch.optim.Adam(net.encoder.parameters(), lr=cfg.lr / 2)
    before = cycle_losses(net, cfg, X, A, cfg.seed + 6)
    history = []
    net.encoder.train()
    for epoch in range(1, cfg.finetune_epochs + 1):
        rows = []
        for idx in _batches(len(X), cfg.batch_size, rng):
            x, a = X[idx], A[idx]
            img = (x - net.generator(net.encoder(x, a), a)).abs().mean()
            z = noise.normal(len(x), cfg.latent_dim)
            with torch.no_grad():
                xg = net.generator(z, a)
                xg = xg + cfg.instance_noise * noise(xg)
            lat = (net.encoder(xg, a) - z).norm(dim=1).mean()
            loss = img + cfg.cycle_latent_weight * lat
            opt.zero_grad()
            loss.backward()
            opt.step()
            rows.append({"cycle_image_l1": img.item(), "cycle_latent_l2": lat.item()})
        row = {"stage": 3.0, "epoch": float(epoch), **_mean_rows(rows)}
        _check(row, "GAN_FT")
        history.append(row)
    net.eval()
    _freeze(net, False)
    after = cycle_losses(net, cfg, X, A, cfg.seed + 6)
    summary = {"stage": 3.0, "epoch": float(cfg.finetune_epochs + 1),
               "cycle_before": before[0] + cfg.cycle_latent_weight * before[1],
               "cycle_after": after[0] + cfg.cycle_latent_weight * after[1]}
    history.append(summary)
    return net, history


def fit(net, cfg: ModelConfig, X: torch.Tensor, A: torch.Tensor) -> list[dict]:
    if cfg.family in (Family.VAE, Family.HVAE, Family.VAE_GLM):
        return train_vae_like(net, cfg, X, A)
    if cfg.family in (Family.GAN, Family.GAN_FT):
        return train_gan(net, cfg, X, A)
    if cfg.family is Family.HA_GAN:
        return train_hagan(net, cfg, X, A)
    raise ValueError(f"cannot train family {cfg.family}")
