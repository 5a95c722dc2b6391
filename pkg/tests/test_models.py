import math

import pytest
import torch

from eeg_acvae import diffcore as dc
from eeg_acvae.errors import ConfigError, ShapeError, VariantError
from eeg_acvae.models import ModelConfig, build_variant

from conftest import tiny_config


@pytest.fixture(scope="module")
def full_store():
    torch.manual_seed(0)
    store, _ = build_variant(ModelConfig())
    return store


def test_full_size_layer_shapes(full_store):
    X = torch.randn(2, 64, 320)
    with torch.no_grad():
        enc = full_store.encoder.layer_outputs(X, "eval")
        z = enc["posterior"].mu
        s = dc.one_hot([0, 89], 90)
        dec = full_store.decoder.layer_outputs(z, s, "eval")
        adv = full_store.adversary(z)
        cls = full_store.classifier(z)
    assert full_store.encoder.temporal.shape == (40, 1, 1, 100)
    assert full_store.encoder.spatial.shape == (40, 40, 64, 1)
    assert enc["temporal"].shape == (2, 40, 64, 320)
    assert enc["spatial"].shape == (2, 40, 1, 320)
    assert enc["flatten"].shape == (2, 12800)
    assert z.shape == enc["posterior"].sigma.shape == (2, 100)
    assert dec["input"].shape == (2, 190)
    assert dec["reshape"].shape == (2, 40, 1, 320)
    assert dec["spatial"].shape == (2, 40, 64, 320)
    assert dec["output"].shape == (2, 64, 320)
    assert adv.shape == (2, 90) and cls.shape == (2, 2)


def test_parameter_counts(full_store):
    counts = full_store.parameter_count()
    assert counts["adversary"] == 100 * 100 + 100 + 100 * 90 + 90
    assert counts["classifier"] == 100 * 100 + 100 + 2 * 100 + 2
    assert counts["encoder"] == 40 * 100 + 40 * 40 * 64 + 2 * (12800 * 100 + 100) + 4 * 40


def test_depthwise_spatial_conv_shape():
    store, _ = build_variant(tiny_config(spatial_conv_mode="depthwise"))
    assert store.encoder.spatial.shape == (3, 1, 6, 1)
    out = store.encoder.layer_outputs(torch.randn(4, 6, 24), "eval")
    assert out["spatial"].shape == (4, 3, 1, 24)


def test_zero_heads_give_zero_mean_unit_scale():
    store, _ = build_variant(tiny_config())
    enc = store.encoder
    with torch.no_grad():
        for p in (enc.mu_weight, enc.mu_bias, enc.logvar_weight, enc.logvar_bias):
            p.zero_()
        post = enc(torch.randn(5, 6, 24), "eval")
    assert torch.equal(post.mu, torch.zeros(5, 4))
    assert torch.equal(post.sigma, torch.ones(5, 4))


def test_logvar_is_clamped():
    store, _ = build_variant(tiny_config(logvar_clamp=2.0))
    with torch.no_grad():
        store.encoder.logvar_bias.fill_(50.0)
        post = store.encoder(torch.randn(3, 6, 24), "eval")
    assert torch.allclose(post.sigma, torch.full_like(post.sigma, math.exp(1.0)))


def test_decoder_input_width_per_variant():
    cfg = tiny_config()
    assert build_variant(cfg.with_(variant="ACVAE"))[0].decoder.input_dim == 4 + 3
    assert build_variant(cfg.with_(variant="CVAE"))[0].decoder.input_dim == 4 + 3
    assert build_variant(cfg.with_(variant="AVAE"))[0].decoder.input_dim == 4
    assert ModelConfig().latent_dim + ModelConfig().n_subjects == 190


def test_decoder_conditioning_mismatch():
    acvae, _ = build_variant(tiny_config())
    avae, _ = build_variant(tiny_config(variant="AVAE"))
    z = torch.randn(2, 4)
    with pytest.raises(VariantError):
        acvae.decoder(z, None)
    with pytest.raises(VariantError):
        avae.decoder(z, dc.one_hot([0, 1], 3))
    with pytest.raises(ShapeError):
        acvae.decoder(z, dc.one_hot([0, 1], 5))


def test_faithful_final_layer_is_nonnegative():
    store, _ = build_variant(tiny_config(faithful_final_layer=True))
    out = store.decoder(torch.randn(8, 4), dc.one_hot([0, 1, 2, 0, 1, 2, 0, 1], 3), "train")
    assert out.shape == (8, 6, 24)
    assert bool((out >= 0).all())


def test_zero_adversary_predicts_uniformly():
    store, _ = build_variant(ModelConfig(n_channels=4, n_samples=8, kernel_length=3, filters=2))
    with torch.no_grad():
        for p in store.adversary.parameters():
            p.zero_()
        logits = store.adversary(torch.randn(7, 100))
    loss = dc.softmax_xent(logits.double(), dc.one_hot(range(7), 90, torch.float64))
    assert loss.item() == pytest.approx(math.log(90), abs=1e-12)


def test_cnn_variant_has_no_decoder_or_adversary():
    store, recipe = build_variant(tiny_config(variant="CNN"))
    assert store.decoder is None and store.adversary is None
    assert not recipe.has_decoder and not recipe.adversarial
    assert not hasattr(store.encoder, "logvar_weight")
    assert store.group_params("decoder", "adversary") == {}


def test_recipes():
    flags = {v: build_variant(tiny_config(variant=v))[1] for v in ("ACVAE", "CVAE", "AVAE", "CNN")}
    assert (flags["ACVAE"].conditioned, flags["ACVAE"].adversarial) == (True, True)
    assert (flags["CVAE"].conditioned, flags["CVAE"].adversarial) == (True, False)
    assert (flags["AVAE"].conditioned, flags["AVAE"].adversarial) == (False, True)
    assert flags["CVAE"].has_adversary  # trained only to be monitored


def test_same_init_seed_same_weights():
    a, _ = build_variant(tiny_config(init_seed=3))
    b, _ = build_variant(tiny_config(init_seed=3))
    c, _ = build_variant(tiny_config(init_seed=4))
    for k, v in a.named_arrays().items():
        assert torch.equal(v, b.named_arrays()[k])
    assert not torch.equal(a.encoder.temporal, c.encoder.temporal)


@pytest.mark.parametrize("bad", [dict(variant="VAE"), dict(adversarial_weight=-1.0),
                                 dict(dropout=1.0), dict(latent_dim=0), dict(spatial_conv_mode="x"),
                                 dict(reconstruction="l1")])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ModelConfig(**bad)


def test_config_dict_roundtrip():
    cfg = tiny_config(variant="AVAE", adversarial_weight=0.3)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"nope": 1})
