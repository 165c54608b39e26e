import math

import numpy as np
import pytest

from batteryttt.core import tensor as T
from batteryttt.core.model import (
    ModelState,
    analytic_parameter_count,
    decode,
    embed_patches,
    encode,
    forward,
    generated_times,
    latent_of,
    predict_soh,
    prototype_attention,
    reprogram,
    trainable_partition,
)
from batteryttt.exceptions import ConfigError, ContractError
from batteryttt.schemas.features import QdLinearFeature
from batteryttt.schemas.model import ModelConfig


def _feature(t_full: int, n_obs: int, seed: int = 0) -> QdLinearFeature:
    rng = np.random.default_rng(seed)
    values = np.cumsum(rng.uniform(0.01, 0.1, size=t_full))
    return QdLinearFeature(
        values=values,
        obs_mask=np.arange(t_full) < n_obs,
        current_a=0.55,
        temp_c=25.0,
        cell_id="cell_001",
        cycle=1,
        c_nom=1.1,
    )


class TestShapes:
    def test_forward_shapes(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        feats = [_feature(16, 10, seed=i) for i in range(3)]
        tokens = embed_patches(state, feats)
        assert tokens.shape == (3, 4, 8)
        aligned = reprogram(state, tokens)
        assert aligned.shape == (3, 4, 16)
        out = forward(state, feats)
        assert out.latent.shape == (3, 16)
        assert out.x_hat.shape == (3, 16)
        assert out.soh.shape == (3,)

    def test_grid_mismatch(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        with pytest.raises(ConfigError):
            embed_patches(state, _feature(32, 10))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(t_full=16, patch_len=5)
        with pytest.raises(ValueError):
            ModelConfig(reprogramming=True, backbone="none")

    def test_initial_head_predicts_one_hundred(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        soh = forward(state, [_feature(16, 8), _feature(16, 16, seed=3)]).soh
        np.testing.assert_allclose(soh.data, 100.0)


class TestParameterCounts:
    @pytest.mark.parametrize("kind", ["mlp", "gru", "lstm", "transformer"])
    def test_analytic_count(self, tiny_config, kind):
        config = tiny_config.model_copy(update={"encoder_kind": kind})
        state = ModelState.initialize(config)
        counts = analytic_parameter_count(config)
        assert state.store.count() == sum(counts.values())
        for tag, expected in counts.items():
            assert state.store.count(state.names_with_tags([tag])) == expected

    def test_plain_encoder_decoder(self, tiny_config):
        config = tiny_config.model_copy(
            update={"reprogramming": False, "backbone": "none", "prompt_len": 0}
        )
        state = ModelState.initialize(config)
        assert state.backbone is None
        assert state.store.count() == sum(analytic_parameter_count(config).values())

    def test_default_prompt_ledger(self):
        counts = analytic_parameter_count(ModelConfig())
        assert counts["prompt"] == 768


class TestPartitions:
    def test_modes(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        assert trainable_partition(state, "tta_ppa") == {"prompt.vectors"}
        assert trainable_partition(state, "probe") == {"head.weight", "head.bias"}
        full = trainable_partition(state, "tta_full")
        assert {n.split(".")[0] for n in full} == {"encoder", "decoder"}
        pretrain = trainable_partition(state, "pretrain")
        assert not any(n.startswith("head") for n in pretrain)
        assert "prompt.vectors" in pretrain

    def test_input_layers_flag(self, tiny_config):
        config = tiny_config.model_copy(update={"tta_adapt_input_layers": True})
        state = ModelState.initialize(config)
        tags = {n.split(".")[0] for n in trainable_partition(state, "tta_full")}
        assert tags == {"encoder", "decoder", "embedder", "reprogrammer"}

    def test_unknown_mode(self, tiny_config):
        with pytest.raises(ContractError):
            trainable_partition(ModelState.initialize(tiny_config), "finetune")

    def test_tags_are_exhaustive_and_disjoint(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        tags = ("embedder", "reprogrammer", "encoder", "decoder", "head", "prompt")
        seen = [state.names_with_tags([t]) for t in tags]
        assert set().union(*seen) == set(state.store.names())
        assert sum(len(s) for s in seen) == len(state.store)

    def test_backbone_never_trained(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        before = state.backbone.store.digest()
        state.set_mode("pretrain")
        T.backward(T.sum_(forward(state, _feature(16, 12)).x_hat))
        assert all(np.all(p.grad == 0) for p in state.backbone.store)
        assert state.backbone.store.digest() == before
        assert not set(state.backbone.store.names()) & set(state.store.names())

    def test_prompt_reaches_latent(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        state.set_mode("tta_ppa")
        T.backward(T.sum_(latent_of(state, _feature(16, 12))))
        assert np.abs(state.store["prompt.vectors"].grad).sum() > 0
        assert np.all(state.store["encoder.layers.0.mlp.fc1.weight"].grad == 0)


class TestReprogramming:
    def test_attention_rows_normalized(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        _, weights, _ = prototype_attention(state, embed_patches(state, _feature(16, 16)))
        for w in weights:
            np.testing.assert_allclose(w.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_single_prototype_returns_its_value(self, tiny_config):
        config = tiny_config.model_copy(update={"n_prototypes": 1})
        state = ModelState.initialize(config)
        heads, _, v = prototype_attention(state, embed_patches(state, _feature(16, 16)))
        expected = np.broadcast_to(v.data[0], heads.shape)
        np.testing.assert_allclose(heads.data, expected, atol=1e-12)

    def test_matches_dense_attention(self, tiny_config):
        config = tiny_config.model_copy(
            update={"t_full": 8, "n_prototypes": 3, "n_heads": 1, "positional_encoding": False}
        )
        state = ModelState.initialize(config)
        store = state.store
        tokens = embed_patches(state, _feature(8, 8))
        heads, _, _ = prototype_attention(state, tokens)

        protos = store["reprogrammer.prototypes"].data @ state.backbone.embedding.data
        q = tokens.data[0] @ store["reprogrammer.query.weight"].data + store["reprogrammer.query.bias"].data
        k = protos @ store["reprogrammer.key.weight"].data
        v = protos @ store["reprogrammer.value.weight"].data + store["reprogrammer.value.bias"].data
        scores = q @ k.T / math.sqrt(16)
        attn = np.exp(scores - scores.max(axis=1, keepdims=True))
        attn /= attn.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(heads.data[0], attn @ v, atol=1e-12)


class TestDecoder:
    def test_monotone_for_random_latents(self, tiny_config, rng):
        state = ModelState.initialize(tiny_config)
        latents = T.constant(rng.normal(scale=5.0, size=(1000, 16)))
        x_hat = decode(state, latents).data
        assert np.all(np.diff(x_hat, axis=-1) > 0)
        assert np.all(x_hat > 0)

    def test_generated_times_strictly_increasing(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        x_hat = decode(state, latent_of(state, _feature(16, 8)))
        t = generated_times(x_hat, np.array([0.55]), np.array([1.1]))
        assert np.all(np.diff(t.data, axis=-1) > 0)
        np.testing.assert_allclose(t.data, x_hat.data * 1.1 * 3600.0 / 0.55)

    def test_zero_current_rejected(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        x_hat = decode(state, latent_of(state, _feature(16, 8)))
        with pytest.raises(ContractError):
            generated_times(x_hat, np.array([0.0]), np.array([1.1]))

    def test_unobserved_tail_is_invisible(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        a = _feature(16, 8, seed=1)
        b = QdLinearFeature(**{**a.__dict__, "values": np.where(a.obs_mask, a.values, 99.0)})
        np.testing.assert_array_equal(forward(state, a).x_hat.data, forward(state, b).x_hat.data)

    def test_empty_prompt_matches_promptless(self, tiny_config):
        config = tiny_config.model_copy(update={"prompt_len": 0})
        state = ModelState.initialize(config)
        aligned = reprogram(state, embed_patches(state, _feature(16, 10)))
        np.testing.assert_array_equal(
            encode(state, aligned, use_prompt=True).data, encode(state, aligned, use_prompt=False).data
        )

    def test_zero_head_bias_100(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        latent = T.constant(np.ones((2, 16)))
        np.testing.assert_allclose(predict_soh(state, latent).data, 100.0)


class TestCheckpoint:
    def test_round_trip(self, tiny_config):
        state = ModelState.initialize(tiny_config)
        restored = ModelState.from_checkpoint(state.to_checkpoint())
        feature = _feature(16, 10)
        np.testing.assert_array_equal(
            forward(state, feature).x_hat.data, forward(restored, feature).x_hat.data
        )
        assert restored.store.dumps() == state.store.dumps()

    def test_count_mismatch(self, tiny_config):
        payload = ModelState.initialize(tiny_config).to_checkpoint()
        payload["model_config"]["prompt_len"] = 3
        with pytest.raises(ConfigError):
            ModelState.from_checkpoint(payload)

    def test_missing_backbone(self, tiny_config):
        payload = ModelState.initialize(tiny_config).to_checkpoint()
        payload["backbone"] = None
        with pytest.raises(ConfigError):
            ModelState.from_checkpoint(payload)

    def test_same_seed_same_bytes(self, tiny_config):
        a = ModelState.initialize(tiny_config)
        b = ModelState.initialize(tiny_config)
        assert a.store.dumps() == b.store.dumps()
        assert a.backbone.store.dumps() == b.backbone.store.dumps()
