from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, field_validator

from utils.config import BACKGROUND, TILE_SIZE


class RenderConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    tile_size: int = Field(default=TILE_SIZE, ge=1)
    background: tuple[float, float, float] = BACKGROUND

    @field_validator("background")
    @classmethod
    def unit_range(cls, value: tuple[float, float, float]) -> tuple[float, float, float]:
        if any(not 0.0 <= c <= 1.0 for c in value):
            raise ValueError(f"background channels must lie in [0, 1], got {value}")
        return value
