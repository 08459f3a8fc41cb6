from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from body.body_model import BodyTemplate
from skinning.skin_field import SkinField, build_skin_field, query_weights
from utils.config import SKIN_DIFFUSION_STEPS, SKIN_MARGIN, SKIN_QUERY_AT, SKIN_RESOLUTION


class SkinConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    resolution: int = Field(default=SKIN_RESOLUTION, ge=8)
    diffusion_steps: int = Field(default=SKIN_DIFFUSION_STEPS, ge=0)
    margin: float = Field(default=SKIN_MARGIN, ge=0.0)
    query_at: Literal["positions", "anchors"] = SKIN_QUERY_AT

    def build(self, template: BodyTemplate) -> SkinField:
        return build_skin_field(template, self.resolution, self.diffusion_steps, self.margin)

    def weights_for(self, field: SkinField, positions: np.ndarray, anchors: np.ndarray) -> np.ndarray:
        """Per-Gaussian skin rows, looked up at the Gaussian centres or at their anchors."""
        return query_weights(field, positions if self.query_at == "positions" else anchors)
