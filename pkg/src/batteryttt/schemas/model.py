"""
Model configuration schema.
"""

from typing import Literal

from pydantic import BaseModel, Field, model_validator


class ModelConfig(BaseModel):
    """Architecture of the Y-shaped network."""

    t_full: int = Field(default=128, ge=8, description="Full curve length T'")
    patch_len: int = Field(default=16, ge=1, description="Patch length")
    embed_dim: int = Field(default=32, ge=1, description="Token dimension d")
    backbone_dim: int = Field(default=96, ge=1, description="Backbone dimension D")
    n_heads: int = Field(default=4, ge=1, description="Attention heads")
    n_layers: int = Field(default=2, ge=1, description="Encoder layers")
    encoder_kind: Literal["mlp", "gru", "lstm", "transformer"] = Field(default="transformer")
    prompt_len: int = Field(default=8, ge=0, description="Prefix prompt length L_p")
    n_prototypes: int = Field(default=32, ge=1, description="Text prototypes V'")
    reprogramming: bool = Field(default=True, description="Cross-attention to prototypes")
    backbone: Literal["none", "frozen-toy"] = Field(default="frozen-toy")
    vocab_size: int = Field(default=256, ge=1, description="Backbone embedding rows V")
    backbone_blocks: int = Field(default=2, ge=0, description="Frozen transformer blocks")
    positional_encoding: bool = Field(default=True, description="Sinusoidal positions")
    decoder_floor: float = Field(
        default=1e-4, gt=0, description="Softplus floor added to each increment"
    )
    tta_adapt_input_layers: bool = Field(
        default=False, description="tta_full also adapts embedder and reprogrammer"
    )
    seed: int = Field(default=0, description="Initialization seed")

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.t_full % self.patch_len:
            raise ValueError("t_full must be divisible by patch_len")
        if self.embed_dim > self.backbone_dim:
            raise ValueError("embed_dim must not exceed backbone_dim")
        if self.backbone_dim % self.n_heads:
            raise ValueError("backbone_dim must be divisible by n_heads")
        if self.reprogramming and self.backbone == "none":
            raise ValueError("reprogramming needs a backbone embedding table")
        return self

    @property
    def n_patches(self) -> int:
        return self.t_full // self.patch_len
