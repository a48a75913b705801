import dataclasses

import numpy as np
import pytest
import torch

from cfbench import models
from cfbench.attributes import AttributeVector, fit_normalizer, fourier_embed
from cfbench.errors import ConfigError, FamilyMismatch, ShapeMismatch
from cfbench.models import Family, ModelCheckpoint, ModelConfig, weights_hash
from cfbench.models.layers import attribute_code, fourier_features
from cfbench.phantoms import region_volumes, render_phantom, sample_subject


def make_pairs(n, cohort="A", seed0=0, normalizer=None):
    vols, raw = [], []
    for s in range(seed0, seed0 + n):
        v, lab = render_phantom(sample_subject(cohort, s))
        vols.append(v)
        raw.append(region_volumes(lab))
    norm = normalizer or fit_normalizer(raw)
    return [(v, AttributeVector.from_array(norm.normalize_counts(r))) for v, r in zip(vols, raw)], norm


@pytest.fixture(scope="module")
def small():
    return make_pairs(16)


def tiny(family, **kw):
    base = dict(family=family, width=4, latent_dim=8, epochs=1, encoder_epochs=1,
                finetune_epochs=1, batch_size=8)
    base.update(kw)
    return ModelConfig(**base)


# ---------------------------------------------------------------- config

@pytest.mark.parametrize("kw", [
    dict(family="HVAE", level_channels=(2,)),
    dict(family="HA_GAN", low_res=32),
    dict(family="VAE", resolution=20),
    dict(family="VAE_GLM", conditioning="ConcatEmbedding"),
    dict(family="VAE", epochs=0),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ModelConfig(**kw)


def test_config_json_round_trip():
    cfg = ModelConfig(family="HVAE", epochs=3, seed=5)
    assert ModelConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ConfigError):
        ModelConfig.from_json({**cfg.to_json(), "bogus": 1})


# ---------------------------------------------------------------- conditioning code

def test_torch_fourier_matches_numpy(rng):
    arr = rng.uniform(-1.5, 1.5, size=(5, 7))
    ours = fourier_features(torch.from_numpy(arr), 4).numpy()
    assert np.allclose(ours, fourier_embed(arr, 4), atol=1e-12)


def test_attribute_code_separates_range_endpoints():
    lo = torch.full((1, 7), -1.0, dtype=torch.float64)
    hi = torch.full((1, 7), 1.0, dtype=torch.float64)
    # the sinusoids alone cannot tell -1 from +1
    assert torch.allclose(fourier_features(lo, 4), fourier_features(hi, 4), atol=1e-12)
    assert not torch.allclose(attribute_code(lo, 4), attribute_code(hi, 4))


# ---------------------------------------------------------------- interface

@pytest.mark.parametrize("family", [f for f in Family if f is not Family.IDENTITY])
def test_untrained_interface(family, small):
    pairs, norm = small
    ckpt = models.init_checkpoint(tiny(family), norm)
    z = models.encode(ckpt, *pairs[0])
    assert z.family is ckpt.family and z.attrs == pairs[0][1]
    out = models.decode(ckpt, z, pairs[0][1])
    assert out.shape == (32, 32, 32)
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert np.array_equal(out, models.decode(ckpt, z, pairs[0][1]))
    z2 = models.encode(ckpt, *pairs[0])
    assert all(np.array_equal(a, b) for a, b in zip(z.payload, z2.payload))
    if family is Family.HVAE:
        assert [p.shape[-1] for p in z.payload] == [8, 16]


def test_zero_latent_decode_is_fixed(small):
    pairs, norm = small
    ckpt = models.init_checkpoint(tiny("VAE"), norm)
    zero = models.LatentState(Family.VAE, (np.zeros(8, np.float32),),
                              AttributeVector.from_array(np.zeros(7)))
    a = models.decode(ckpt, zero, zero.attrs)
    assert np.array_equal(a, models.decode(ckpt, zero, zero.attrs))


def test_shape_and_family_errors(small):
    pairs, norm = small
    vae = models.init_checkpoint(tiny("VAE"), norm)
    gan = models.init_checkpoint(tiny("GAN"), norm)
    with pytest.raises(ShapeMismatch):
        models.encode(vae, np.zeros((16, 16, 16), np.float32), pairs[0][1])
    z = models.encode(vae, *pairs[0])
    with pytest.raises(FamilyMismatch):
        models.decode(gan, z, pairs[0][1])
    with pytest.raises(FamilyMismatch):
        models.finetune_encoder_cyclic(vae, pairs)
    with pytest.raises(ValueError):
        models.train(tiny("VAE"), [], norm)


def test_identity_double_round_trip(small):
    pairs, norm = small
    ckpt = models.identity_checkpoint(norm)
    vol, a = pairs[0]
    assert models.decode(ckpt, models.encode(ckpt, vol, a), a).tobytes() == vol.tobytes()


# ---------------------------------------------------------------- training

def test_vae_loss_decreases_and_checkpoint_round_trips(small, tmp_path):
    pairs, norm = small
    ckpt = models.train(ModelConfig(family="VAE", epochs=5, batch_size=4), pairs, norm)
    log = ckpt.train_log
    assert log[4]["recon_l1"] <= log[0]["recon_l1"]
    assert log[4]["loss"] <= log[0]["loss"]
    back = ModelCheckpoint.load(ckpt.save(tmp_path / "vae"))
    assert back.weights_hash == ckpt.weights_hash
    assert back.config == ckpt.config
    assert back.normalizer.to_json() == norm.to_json()
    vol, a = pairs[0]
    assert np.array_equal(models.decode(back, models.encode(back, vol, a), a),
                          models.decode(ckpt, models.encode(ckpt, vol, a), a))


def test_training_is_deterministic(small):
    pairs, norm = small
    cfg = tiny("VAE", epochs=2)
    assert models.train(cfg, pairs, norm).weights_hash == models.train(cfg, pairs, norm).weights_hash


def test_tampered_weights_detected(small, tmp_path):
    pairs, norm = small
    d = models.init_checkpoint(tiny("VAE"), norm).save(tmp_path / "c")
    other = models.init_checkpoint(tiny("VAE", seed=9), norm)
    torch.save(other.network.state_dict(), d / "weights.bin")
    with pytest.raises(ValueError):
        ModelCheckpoint.load(d)


@pytest.mark.parametrize("family", [f for f in Family if f is not Family.IDENTITY])
def test_every_family_trains_and_responds_to_attributes(family, small):
    pairs, norm = small
    ckpt = models.train(tiny(family, epochs=2), pairs, norm)
    assert all(np.isfinite(v) for row in ckpt.train_log for v in row.values())
    # compare pre-clamp outputs: a barely trained decoder may clamp to all zeros
    x = torch.from_numpy(np.stack([v for v, _ in pairs]))[:, None]
    a = torch.from_numpy(np.stack([at.as_array() for _, at in pairs]).astype(np.float32))
    b = a.clone()
    b[:, 6] = torch.where(b[:, 6] < 0.5, b[:, 6] + 0.5, b[:, 6] - 0.5)
    with torch.no_grad():
        z = ckpt.network.encode(x, a)
        diff = (ckpt.network.decode(z, a) - ckpt.network.decode(z, b)).abs().mean()
    assert diff > 0


def test_gan_ft_freezes_generator_and_reduces_cycle_loss(small):
    pairs, norm = small
    gan = models.train(tiny("GAN", epochs=2, encoder_epochs=2), pairs, norm)
    ft = models.finetune_encoder_cyclic(dataclasses.replace(gan, config=gan.config.replace(finetune_epochs=10)), pairs)
    assert ft.family is Family.GAN_FT
    for prefix in ("generator.", "discriminator."):
        assert weights_hash(gan.network, prefix) == weights_hash(ft.network, prefix)
    assert weights_hash(gan.network, "encoder.") != weights_hash(ft.network, "encoder.")
    summary = ft.train_log[-1]
    assert summary["cycle_after"] <= summary["cycle_before"]
