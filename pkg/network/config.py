from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.config import (
    BODY_ENCODER_DEPTH,
    BODY_PATCH,
    BODY_RESOLUTION,
    ENCODER_DIM,
    HEAD_ENCODER_DEPTH,
    HEAD_MASK_MAX,
    HEAD_PATCH,
    HEAD_RESOLUTION,
    HEAD_TAP_DEPTHS,
    MLP_RATIO,
    N_HEADS,
    N_LAYERS,
    N_POINTS,
    OFFSET_CAP,
    PE_FREQUENCIES,
    SCALE_FLOOR,
    SH_DEGREE,
    TOKEN_DIM,
)


class NetworkConfig(BaseModel):
    """Shape of the reconstruction network; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    token_dim: int = Field(default=TOKEN_DIM, ge=1)
    pe_frequencies: int = Field(default=PE_FREQUENCIES, ge=1)
    n_layers: int = Field(default=N_LAYERS, ge=0)
    n_heads: int = Field(default=N_HEADS, ge=1)
    encoder_dim: int = Field(default=ENCODER_DIM, ge=1)
    mlp_ratio: int = Field(default=MLP_RATIO, ge=1)
    body_resolution: int = Field(default=BODY_RESOLUTION, ge=1)
    body_patch: int = Field(default=BODY_PATCH, ge=1)
    body_encoder_depth: int = Field(default=BODY_ENCODER_DEPTH, ge=0)
    head_resolution: int = Field(default=HEAD_RESOLUTION, ge=1)
    head_patch: int = Field(default=HEAD_PATCH, ge=1)
    head_encoder_depth: int = Field(default=HEAD_ENCODER_DEPTH, ge=1)
    head_tap_depths: tuple[int, int, int, int] = HEAD_TAP_DEPTHS
    head_mask_max: float = Field(default=HEAD_MASK_MAX, ge=0.0, le=0.5)
    n_points: int = Field(default=N_POINTS, ge=1)
    sh_degree: Literal[0, 1] = SH_DEGREE
    offset_cap: float = Field(default=OFFSET_CAP, gt=0.0)
    scale_floor: float = Field(default=SCALE_FLOOR, gt=0.0)
    block_type: Literal["mbht", "vanilla"] = "mbht"

    @field_validator("head_tap_depths")
    @classmethod
    def taps_increasing(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if any(b <= a for a, b in zip(value, value[1:])) or value[0] < 1:
            raise ValueError(f"tap depths must be strictly increasing and >= 1, got {value}")
        return value

    @model_validator(mode="after")
    def check_extents(self) -> NetworkConfig:
        if self.token_dim % self.n_heads:
            raise ValueError(f"token_dim {self.token_dim} not divisible by n_heads {self.n_heads}")
        if self.encoder_dim % self.n_heads:
            raise ValueError(f"encoder_dim {self.encoder_dim} not divisible by n_heads {self.n_heads}")
        if self.head_tap_depths[-1] > self.head_encoder_depth:
            raise ValueError(
                f"deepest tap {self.head_tap_depths[-1]} exceeds head encoder depth {self.head_encoder_depth}"
            )
        for name in ("body", "head"):
            res, patch = getattr(self, f"{name}_resolution"), getattr(self, f"{name}_patch")
            if res % patch:
                raise ValueError(f"{name} resolution {res} not divisible by patch {patch}")
        return self

    @property
    def sh_dim(self) -> int:
        return 3 * (self.sh_degree + 1) ** 2

    @property
    def n_body_tokens(self) -> int:
        return (self.body_resolution // self.body_patch) ** 2

    @property
    def n_head_tokens(self) -> int:
        return (self.head_resolution // self.head_patch) ** 2


def micro_config(**overrides: object) -> NetworkConfig:
    """Smallest useful configuration (gradient checks, fast tests)."""
    values: dict[str, object] = dict(
        token_dim=16, pe_frequencies=4, n_layers=1, n_heads=2, encoder_dim=16, mlp_ratio=2,
        body_resolution=16, body_patch=8, body_encoder_depth=1,
        head_resolution=8, head_patch=4, head_encoder_depth=4, head_tap_depths=(1, 2, 3, 4),
        n_points=12,
    )
    values.update(overrides)
    return NetworkConfig(**values)
