"""Conditional generative model families behind one abduction/prediction API."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from cfbench.attributes import AttributeVector, Normalizer
from cfbench.errors import FamilyMismatch, ShapeMismatch
from cfbench.models import training
from cfbench.models.checkpoint import LatentState, ModelCheckpoint, weights_hash
from cfbench.models.config import (
    GAN_FAMILIES,
    TRAINABLE,
    Conditioning,
    Family,
    ModelConfig,
    identity_config,
)
from cfbench.models.networks import build_network

__all__ = [
    "Conditioning",
    "Family",
    "GAN_FAMILIES",
    "LatentState",
    "ModelCheckpoint",
    "ModelConfig",
    "TRAINABLE",
    "decode",
    "decode_batch",
    "encode",
    "encode_batch",
    "finetune_encoder_cyclic",
    "identity_checkpoint",
    "init_checkpoint",
    "train",
    "weights_hash",
]

Dataset = Sequence[tuple[np.ndarray, AttributeVector]]


def _tensors(dataset: Dataset, resolution: int) -> tuple[torch.Tensor, torch.Tensor]:
    vols = []
    for vol, _ in dataset:
        if vol.shape != (resolution,) * 3:
            raise ShapeMismatch(f"expected {(resolution,) * 3}, got {vol.shape}")
        vols.append(np.asarray(vol, dtype=np.float32))
    X = torch.from_numpy(np.stack(vols))[:, None]
    A = torch.from_numpy(np.stack([a.as_array() for _, a in dataset]).astype(np.float32))
    return X, A


def init_checkpoint(config: ModelConfig, normalizer: Normalizer) -> ModelCheckpoint:
    """Untrained checkpoint with seeded random weights (the untrained baseline)."""
    if config.family is Family.IDENTITY:
        return ModelCheckpoint(config, normalizer, None)
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        net = build_network(config)
    net.eval()
    return ModelCheckpoint(config, normalizer, net)


def identity_checkpoint(normalizer: Normalizer, resolution: int = 32) -> ModelCheckpoint:
    return init_checkpoint(identity_config(resolution), normalizer)


def train(config: ModelConfig, dataset: Dataset, normalizer: Normalizer) -> ModelCheckpoint:
    """Train one family on ``(volume, normalized attributes)`` pairs."""
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if config.family is Family.IDENTITY:
        raise FamilyMismatch("the identity double has nothing to train")
    X, A = _tensors(dataset, config.resolution)
    base_cfg = config.replace(family=Family.GAN) if config.family is Family.GAN_FT else config
    ckpt = init_checkpoint(base_cfg, normalizer)
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        ckpt.train_log = training.fit(ckpt.network, base_cfg, X, A)
    if config.family is Family.GAN_FT:
        ckpt = finetune_encoder_cyclic(ckpt, dataset)
    return ckpt


def finetune_encoder_cyclic(ckpt: ModelCheckpoint, dataset: Dataset) -> ModelCheckpoint:
    if ckpt.family is not Family.GAN:
        raise FamilyMismatch(f"cyclic finetuning expects a GAN checkpoint, got {ckpt.family}")
    X, A = _tensors(dataset, ckpt.config.resolution)
    with torch.random.fork_rng():
        torch.manual_seed(ckpt.config.seed + 5)
        net, history = training.finetune_cyclic(ckpt.network, ckpt.config, X, A)
    return ModelCheckpoint(ckpt.config.replace(family=Family.GAN_FT), ckpt.normalizer, net,
                           list(ckpt.train_log) + history)


def _check_volume(ckpt: ModelCheckpoint, vol: np.ndarray) -> None:
    expected = (ckpt.config.resolution,) * 3
    if np.shape(vol) != expected:
        raise ShapeMismatch(f"volume shape {np.shape(vol)} does not match {expected}")


def encode_batch(ckpt: ModelCheckpoint, vols: Sequence[np.ndarray],
                 attrs: Sequence[AttributeVector]) -> list[LatentState]:
    for v in vols:
        _check_volume(ckpt, v)
    if ckpt.family is Family.IDENTITY:
        return [LatentState(ckpt.family, (np.array(v, dtype=np.float32, copy=True),), a)
                for v, a in zip(vols, attrs)]
    x = torch.from_numpy(np.stack([np.asarray(v, dtype=np.float32) for v in vols]))[:, None]
    a = torch.from_numpy(np.stack([at.as_array() for at in attrs]).astype(np.float32))
    with torch.no_grad():
        parts = ckpt.network.encode(x, a)
    return [LatentState(ckpt.family, tuple(p[i].numpy().copy() for p in parts), attrs[i])
            for i in range(len(vols))]


def decode_batch(ckpt: ModelCheckpoint, latents: Sequence[LatentState],
                 attrs: Sequence[AttributeVector]) -> list[np.ndarray]:
    for z in latents:
        if z.family is not ckpt.family:
            raise FamilyMismatch(f"latent from {z.family} fed to a {ckpt.family} checkpoint")
    if ckpt.family is Family.IDENTITY:
        return [z.payload[0].copy() for z in latents]
    parts = tuple(torch.from_numpy(np.stack([z.payload[k] for z in latents]))
                  for k in range(len(latents[0].payload)))
    a = torch.from_numpy(np.stack([at.as_array() for at in attrs]).astype(np.float32))
    with torch.no_grad():
        out = ckpt.network.decode(parts, a)
    out = out[:, 0].clamp(0.0, 1.0).numpy()
    return [o.copy() for o in out]


def encode(ckpt: ModelCheckpoint, vol: np.ndarray, attrs: AttributeVector) -> LatentState:
    """Abduction: deterministic latent (posterior mean / encoder output)."""
    return encode_batch(ckpt, [vol], [attrs])[0]


def decode(ckpt: ModelCheckpoint, z: LatentState, attrs: AttributeVector) -> np.ndarray:
    """Prediction: volume in [0, 1] at the checkpoint resolution."""
    return decode_batch(ckpt, [z], [attrs])[0]
