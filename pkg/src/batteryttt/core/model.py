"""
The Y-shaped SOH network.

    QdLinear (T', 3 channels)
      -> patch embedder            tokens  (B, P, d)
      -> reprogrammer              aligned (B, P, D)   cross-attention to prototypes
      -> [prompt ; aligned]        seq     (B, L_p + P, D)
      -> frozen backbone blocks
      -> encoder f                 latent  (B, D)      mean over positions
      -> decoder g                 x_hat   (B, T')     monotone complete curve
      -> head h                    soh     (B,)

Parameter names are dotted paths; the first component is the partition tag.
The frozen backbone keeps its own store and never joins a partition.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Optional, Sequence, Union

import numpy as np

from ..exceptions import ConfigError, ContractError
from ..schemas.features import QdLinearFeature
from ..schemas.model import ModelConfig
from . import tensor as T
from .features import feature_channels
from .tensor import ParameterStore, Value

logger = logging.getLogger(__name__)

PARTITION_TAGS = ("embedder", "reprogrammer", "encoder", "decoder", "head", "prompt")
MODES = ("pretrain", "probe", "tta_full", "tta_ppa")

ModelInput = Union[QdLinearFeature, Sequence[QdLinearFeature], np.ndarray]


# --------------------------------------------------------------------------
# Initialization helpers
# --------------------------------------------------------------------------


def _add_linear(
    store: ParameterStore,
    prefix: str,
    n_in: int,
    n_out: int,
    rng: np.random.Generator,
    bias: bool = True,
    std: Optional[float] = None,
    trainable: bool = True,
) -> None:
    std = 1.0 / math.sqrt(n_in) if std is None else std
    store.add(f"{prefix}.weight", rng.normal(0.0, std, size=(n_in, n_out)), trainable)
    if bias:
        store.add(f"{prefix}.bias", np.zeros(n_out), trainable)


def _add_norm(store: ParameterStore, prefix: str, dim: int, trainable: bool = True) -> None:
    store.add(f"{prefix}.gain", np.ones(dim), trainable)
    store.add(f"{prefix}.bias", np.zeros(dim), trainable)


def _add_transformer_block(
    store: ParameterStore, prefix: str, dim: int, rng: np.random.Generator, trainable: bool = True
) -> None:
    _add_norm(store, f"{prefix}.norm1", dim, trainable)
    for name in ("query", "key", "value", "out"):
        # a key bias shifts a whole score row, which softmax cancels
        _add_linear(
            store, f"{prefix}.attn.{name}", dim, dim, rng, bias=name != "key", trainable=trainable
        )
    _add_norm(store, f"{prefix}.norm2", dim, trainable)
    _add_linear(store, f"{prefix}.mlp.fc1", dim, 2 * dim, rng, trainable=trainable)
    _add_linear(store, f"{prefix}.mlp.fc2", 2 * dim, dim, rng, trainable=trainable)


def sinusoidal_positions(n_positions: int, dim: int) -> np.ndarray:
    position = np.arange(n_positions)[:, None]
    freq = np.exp(-math.log(10000.0) * (np.arange(0, dim, 2) / dim))
    table = np.zeros((n_positions, dim))
    table[:, 0::2] = np.sin(position * freq)
    table[:, 1::2] = np.cos(position * freq[: dim // 2])
    return table


# --------------------------------------------------------------------------
# Shared blocks
# --------------------------------------------------------------------------


def _lin(store: ParameterStore, prefix: str, x: Value) -> Value:
    bias = store[f"{prefix}.bias"] if f"{prefix}.bias" in store else None
    return T.linear(x, store[f"{prefix}.weight"], bias)


def _affine_norm(store: ParameterStore, prefix: str, x: Value) -> Value:
    dim = x.shape[-1]
    lead = (1,) * (x.ndim - 1)
    gain = T.expand(T.reshape(store[f"{prefix}.gain"], lead + (dim,)), x.shape)
    bias = T.expand(T.reshape(store[f"{prefix}.bias"], lead + (dim,)), x.shape)
    return T.layer_norm(x) * gain + bias


def multi_head_attention(
    q: Value, k: Value, v: Value, n_heads: int
) -> tuple[Value, list[Value]]:
    """Scaled dot-product attention per head; returns concatenated heads and weights.

    q is (B, L, D); k and v are (B, S, D) or shared (S, D).
    """
    dim = q.shape[-1]
    d_k = dim // n_heads
    heads, weights = [], []
    for h in range(n_heads):
        sl = slice(h * d_k, (h + 1) * d_k)
        qh = q[:, :, sl]
        kh = k[..., sl]
        vh = v[..., sl]
        scores = T.scale(T.matmul(qh, T.transpose(kh)), 1.0 / math.sqrt(d_k))
        attn = T.softmax(scores)
        weights.append(attn)
        heads.append(T.matmul(attn, vh))
    return T.concat(heads, axis=-1), weights


def _transformer_block(store: ParameterStore, prefix: str, x: Value, n_heads: int) -> Value:
    xn = _affine_norm(store, f"{prefix}.norm1", x)
    q = _lin(store, f"{prefix}.attn.query", xn)
    k = _lin(store, f"{prefix}.attn.key", xn)
    v = _lin(store, f"{prefix}.attn.value", xn)
    attended, _ = multi_head_attention(q, k, v, n_heads)
    h = x + _lin(store, f"{prefix}.attn.out", attended)
    hn = _affine_norm(store, f"{prefix}.norm2", h)
    return h + _lin(store, f"{prefix}.mlp.fc2", T.gelu(_lin(store, f"{prefix}.mlp.fc1", hn)))


def _mlp_block(store: ParameterStore, prefix: str, x: Value) -> Value:
    xn = _affine_norm(store, f"{prefix}.norm", x)
    return x + _lin(store, f"{prefix}.fc2", T.gelu(_lin(store, f"{prefix}.fc1", xn)))


def _lstm_layer(store: ParameterStore, prefix: str, x: Value) -> Value:
    batch, length, dim = x.shape
    w_ih, w_hh = store[f"{prefix}.w_ih"], store[f"{prefix}.w_hh"]
    b_ih, b_hh = store[f"{prefix}.b_ih"], store[f"{prefix}.b_hh"]
    h = T.constant(np.zeros((batch, dim)))
    c = T.constant(np.zeros((batch, dim)))
    outputs = []
    for t in range(length):
        gates = T.linear(x[:, t, :], w_ih, b_ih) + T.linear(h, w_hh, b_hh)
        i = T.sigmoid(gates[:, :dim])
        f = T.sigmoid(gates[:, dim : 2 * dim])
        g = T.tanh(gates[:, 2 * dim : 3 * dim])
        o = T.sigmoid(gates[:, 3 * dim :])
        c = f * c + i * g
        h = o * T.tanh(c)
        outputs.append(T.reshape(h, (batch, 1, dim)))
    return T.concat(outputs, axis=1)


def _gru_layer(store: ParameterStore, prefix: str, x: Value) -> Value:
    batch, length, dim = x.shape
    w_ih, w_hh = store[f"{prefix}.w_ih"], store[f"{prefix}.w_hh"]
    b_ih, b_hh = store[f"{prefix}.b_ih"], store[f"{prefix}.b_hh"]
    h = T.constant(np.zeros((batch, dim)))
    outputs = []
    for t in range(length):
        gi = T.linear(x[:, t, :], w_ih, b_ih)
        gh = T.linear(h, w_hh, b_hh)
        r = T.sigmoid(gi[:, :dim] + gh[:, :dim])
        z = T.sigmoid(gi[:, dim : 2 * dim] + gh[:, dim : 2 * dim])
        n = T.tanh(gi[:, 2 * dim :] + r * gh[:, 2 * dim :])
        h = n - z * n + z * h
        outputs.append(T.reshape(h, (batch, 1, dim)))
    return T.concat(outputs, axis=1)


# --------------------------------------------------------------------------
# Frozen backbone
# --------------------------------------------------------------------------


class FrozenBackbone:
    """Embedding table E (V x D) and transformer blocks that are never trained."""

    def __init__(self, store: ParameterStore, n_blocks: int, n_heads: int):
        store.freeze()
        self.store = store
        self.n_blocks = n_blocks
        self.n_heads = n_heads

    @classmethod
    def random(cls, config: ModelConfig) -> "FrozenBackbone":
        rng = np.random.default_rng([config.seed, 0xB0])
        store = ParameterStore()
        store.add(
            "backbone.embedding",
            rng.normal(0.0, 1.0, size=(config.vocab_size, config.backbone_dim)),
            trainable=False,
        )
        for i in range(config.backbone_blocks):
            _add_transformer_block(
                store, f"backbone.blocks.{i}", config.backbone_dim, rng, trainable=False
            )
        return cls(store, config.backbone_blocks, config.n_heads)

    @classmethod
    def from_dict(cls, payload: dict[str, Any], config: ModelConfig) -> "FrozenBackbone":
        store = ParameterStore.from_dict(payload, trainable=False)
        expected = (config.vocab_size, config.backbone_dim)
        if "backbone.embedding" not in store or store["backbone.embedding"].shape != expected:
            raise ConfigError(f"backbone embedding must have shape {expected}")
        n_blocks = len({n.split(".")[2] for n in store.names() if n.startswith("backbone.blocks.")})
        return cls(store, n_blocks, config.n_heads)

    def to_dict(self) -> dict[str, Any]:
        return self.store.to_dict(frozen=True)

    @property
    def embedding(self) -> Value:
        return self.store["backbone.embedding"]

    def forward(self, seq: Value) -> Value:
        for i in range(self.n_blocks):
            seq = _transformer_block(self.store, f"backbone.blocks.{i}", seq, self.n_heads)
        return seq


# --------------------------------------------------------------------------
# Model state
# --------------------------------------------------------------------------


class ModelState:
    """Trainable parameters, frozen backbone and the active partition."""

    def __init__(
        self,
        config: ModelConfig,
        store: ParameterStore,
        backbone: Optional[FrozenBackbone],
        mode: str = "pretrain",
    ):
        self.config = config
        self.store = store
        self.backbone = backbone
        self.mode = mode
        self._positions = (
            sinusoidal_positions(config.n_patches, config.embed_dim)
            if config.positional_encoding
            else None
        )

    @classmethod
    def initialize(
        cls, config: ModelConfig, backbone: Optional[FrozenBackbone] = None
    ) -> "ModelState":
        """Seeded random initialization; the head starts at a constant 100 %."""
        rng = np.random.default_rng(config.seed)
        d, D, t_full = config.embed_dim, config.backbone_dim, config.t_full
        store = ParameterStore()

        _add_linear(store, "embedder.proj", 3 * config.patch_len, d, rng)
        if config.reprogramming:
            store.add(
                "reprogrammer.prototypes",
                rng.normal(0.0, 1.0 / math.sqrt(config.vocab_size),
                           size=(config.n_prototypes, config.vocab_size)),
            )
            _add_linear(store, "reprogrammer.query", d, D, rng)
            _add_linear(store, "reprogrammer.key", D, D, rng, bias=False)
            _add_linear(store, "reprogrammer.value", D, D, rng)
            _add_linear(store, "reprogrammer.out", D, D, rng)
        else:
            _add_linear(store, "reprogrammer.linear", d, D, rng)

        for i in range(config.n_layers):
            prefix = f"encoder.layers.{i}"
            if config.encoder_kind == "transformer":
                _add_transformer_block(store, prefix, D, rng)
            elif config.encoder_kind == "mlp":
                _add_norm(store, f"{prefix}.norm", D)
                _add_linear(store, f"{prefix}.fc1", D, 2 * D, rng)
                _add_linear(store, f"{prefix}.fc2", 2 * D, D, rng)
            else:
                gates = 4 if config.encoder_kind == "lstm" else 3
                std = 1.0 / math.sqrt(D)
                store.add(f"{prefix}.w_ih", rng.normal(0.0, std, size=(D, gates * D)))
                store.add(f"{prefix}.w_hh", rng.normal(0.0, std, size=(D, gates * D)))
                store.add(f"{prefix}.b_ih", np.zeros(gates * D))
                store.add(f"{prefix}.b_hh", np.zeros(gates * D))

        _add_linear(store, "decoder.hidden", D, D, rng)
        _add_linear(store, "decoder.out", D, t_full, rng, std=0.1 / math.sqrt(D))
        store.add("decoder.scale", np.array(1.0))

        store.add("head.weight", np.zeros((D, 1)))
        store.add("head.bias", np.array([100.0]))

        if config.prompt_len > 0:
            store.add("prompt.vectors", rng.normal(0.0, 0.1, size=(config.prompt_len, D)))

        if backbone is None and config.backbone == "frozen-toy":
            backbone = FrozenBackbone.random(config)
        state = cls(config, store, backbone)
        state.set_mode("pretrain")
        return state

    def clone(self) -> "ModelState":
        """Copy parameters; the backbone is shared read-only."""
        return ModelState(self.config, self.store.clone(), self.backbone, self.mode)

    def set_mode(self, mode: str) -> set[str]:
        names = trainable_partition(self, mode)
        self.store.set_trainable(names)
        self.mode = mode
        return names

    def names_with_tags(self, tags: Sequence[str]) -> set[str]:
        return {n for n in self.store.names() if n.split(".", 1)[0] in tags}

    def to_checkpoint(self) -> dict[str, Any]:
        return {
            "version": 1,
            "model_config": self.config.model_dump(mode="json"),
            "store": self.store.to_dict(),
            "backbone": self.backbone.to_dict() if self.backbone else None,
        }

    @classmethod
    def from_checkpoint(cls, payload: dict[str, Any]) -> "ModelState":
        from ..utils.json_utils import CHECKPOINT_SCHEMA, parse_with_pydantic, validate_json_schema

        ok, error = validate_json_schema(payload, CHECKPOINT_SCHEMA)
        if not ok:
            raise ConfigError(f"invalid checkpoint: {error}")
        config = parse_with_pydantic(payload["model_config"], ModelConfig, source="checkpoint")
        store = ParameterStore.from_dict(payload["store"])
        backbone = (
            FrozenBackbone.from_dict(payload["backbone"], config) if payload.get("backbone") else None
        )
        if config.backbone == "frozen-toy" and backbone is None:
            raise ConfigError("checkpoint declares a frozen-toy backbone but carries none")
        expected = sum(analytic_parameter_count(config).values())
        if store.count() != expected:
            raise ConfigError(
                f"checkpoint holds {store.count()} parameters, config implies {expected}"
            )
        state = cls(config, store, backbone)
        state.set_mode("pretrain")
        return state


def trainable_partition(state: ModelState, mode: str) -> set[str]:
    """Parameter names optimized in ``mode``.

    Raises:
        ContractError: For an unknown mode
    """
    if mode == "pretrain":
        tags = ("embedder", "reprogrammer", "encoder", "decoder", "prompt")
    elif mode == "probe":
        tags = ("head",)
    elif mode == "tta_full":
        tags = ("encoder", "decoder")
        if state.config.tta_adapt_input_layers:
            tags += ("embedder", "reprogrammer")
    elif mode == "tta_ppa":
        tags = ("prompt",)
    else:
        raise ContractError(f"unknown partition mode '{mode}'; expected one of {MODES}")
    return state.names_with_tags(tags)


# --------------------------------------------------------------------------
# Forward pass
# --------------------------------------------------------------------------


def input_channels(state: ModelState, x: ModelInput) -> np.ndarray:
    """(B, T', 3) channel array for a feature, a list of features, or raw channels."""
    if isinstance(x, QdLinearFeature):
        arr = feature_channels(x)[None]
    elif isinstance(x, np.ndarray):
        arr = x[None] if x.ndim == 2 else x
    else:
        arr = np.stack([feature_channels(f) for f in x])
    if arr.ndim != 3 or arr.shape[1:] != (state.config.t_full, 3):
        raise ConfigError(
            f"input of shape {arr.shape[1:]} does not match the grid ({state.config.t_full}, 3)"
        )
    return arr


def embed_patches(state: ModelState, x: ModelInput) -> Value:
    """Non-overlapping patches of all three channels projected to d: (B, P, d)."""
    cfg = state.config
    arr = input_channels(state, x)
    batch = arr.shape[0]
    patches = arr.reshape(batch, cfg.n_patches, cfg.patch_len * 3)
    tokens = _lin(state.store, "embedder.proj", T.constant(patches))
    if state._positions is not None:
        tokens = tokens + T.constant(np.broadcast_to(state._positions, tokens.shape))
    return tokens


def prototype_attention(state: ModelState, tokens: Value) -> tuple[Value, list[Value], Value]:
    """Cross-attention of tokens to the prototypes E' = W_proto E.

    Returns the concatenated heads (before the output projection), the
    per-head attention weights and the value-projected prototypes.
    """
    store = state.store
    prototypes = T.matmul(store["reprogrammer.prototypes"], state.backbone.embedding)
    q = _lin(store, "reprogrammer.query", tokens)
    k = _lin(store, "reprogrammer.key", prototypes)
    v = _lin(store, "reprogrammer.value", prototypes)
    heads, weights = multi_head_attention(q, k, v, state.config.n_heads)
    return heads, weights, v


def reprogram(state: ModelState, tokens: Value) -> Value:
    """(B, P, d) tokens -> (B, P, D) aligned tokens."""
    if not state.config.reprogramming:
        return _lin(state.store, "reprogrammer.linear", tokens)
    heads, _, _ = prototype_attention(state, tokens)
    return _lin(state.store, "reprogrammer.out", heads)


def encode(state: ModelState, aligned: Value, use_prompt: bool = True) -> Value:
    """Prepend the prompt, run backbone blocks and encoder f, mean-pool to (B, D)."""
    cfg = state.config
    batch = aligned.shape[0]
    if aligned.shape[1:] != (cfg.n_patches, cfg.backbone_dim):
        raise ContractError(f"aligned tokens {aligned.shape} do not match (B, P, D)")
    seq = aligned
    if use_prompt and cfg.prompt_len > 0:
        prompt = T.reshape(state.store["prompt.vectors"], (1, cfg.prompt_len, cfg.backbone_dim))
        seq = T.concat([T.expand(prompt, (batch, cfg.prompt_len, cfg.backbone_dim)), aligned], axis=1)
    if state.backbone is not None:
        seq = state.backbone.forward(seq)
    for i in range(cfg.n_layers):
        prefix = f"encoder.layers.{i}"
        if cfg.encoder_kind == "transformer":
            seq = _transformer_block(state.store, prefix, seq, cfg.n_heads)
        elif cfg.encoder_kind == "mlp":
            seq = _mlp_block(state.store, prefix, seq)
        elif cfg.encoder_kind == "lstm":
            seq = _lstm_layer(state.store, prefix, seq)
        else:
            seq = _gru_layer(state.store, prefix, seq)
    return T.mean(seq, axis=1)


def decode(state: ModelState, latent: Value) -> Value:
    """Complete normalized curve x_hat (B, T'): scaled cumsum of softplus increments."""
    store = state.store
    hidden = T.gelu(_lin(store, "decoder.hidden", latent))
    increments = _lin(store, "decoder.out", hidden)
    steps = T.softplus(increments) + state.config.decoder_floor
    scale = T.scale(T.softplus(store["decoder.scale"]), 1.0 / state.config.t_full)
    return T.cumsum(steps) * scale


def generated_times(x_hat: Value, current_a: np.ndarray, c_nom: np.ndarray) -> Value:
    """Seconds to reach each grid voltage: t_j = x_hat_j * c_nom * 3600 / I."""
    current_a = np.asarray(current_a, dtype=np.float64).reshape(-1, 1)
    if np.any(current_a <= 0):
        raise ContractError("time grid is undefined for a non-positive charge current")
    factor = np.asarray(c_nom, dtype=np.float64).reshape(-1, 1) * 3600.0 / current_a
    return x_hat * T.constant(np.broadcast_to(factor, x_hat.shape))


def predict_soh(state: ModelState, latent: Value) -> Value:
    """Affine head D -> 1, in percent: (B,)."""
    out = _lin(state.store, "head", latent)
    return T.reshape(out, (latent.shape[0],))


@dataclass
class ForwardOutput:
    latent: Value
    x_hat: Value
    soh: Value


def latent_of(state: ModelState, x: ModelInput) -> Value:
    return encode(state, reprogram(state, embed_patches(state, x)))


def forward(state: ModelState, x: ModelInput) -> ForwardOutput:
    latent = latent_of(state, x)
    return ForwardOutput(latent=latent, x_hat=decode(state, latent), soh=predict_soh(state, latent))


def analytic_parameter_count(config: ModelConfig) -> dict[str, int]:
    """Closed-form parameter count per partition tag."""
    d, D, t_full = config.embed_dim, config.backbone_dim, config.t_full
    counts = {"embedder": 3 * config.patch_len * d + d}
    if config.reprogramming:
        counts["reprogrammer"] = (
            config.n_prototypes * config.vocab_size + (d * D + D) + D * D + 2 * (D * D + D)
        )
    else:
        counts["reprogrammer"] = d * D + D
    per_layer = {
        "transformer": 4 * D + (4 * D * D + 3 * D) + (2 * D * D + 2 * D) + (2 * D * D + D),
        "mlp": 2 * D + (2 * D * D + 2 * D) + (2 * D * D + D),
        "gru": 2 * (3 * D * D) + 2 * (3 * D),
        "lstm": 2 * (4 * D * D) + 2 * (4 * D),
    }[config.encoder_kind]
    counts["encoder"] = config.n_layers * per_layer
    counts["decoder"] = (D * D + D) + (D * t_full + t_full) + 1
    counts["head"] = D + 1
    counts["prompt"] = config.prompt_len * D
    return counts
