from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from autodiff import Tensor
from utils.errors import ShapeError


class TokenTag:
    GEO_HEAD = 0
    GEO_BODY = 1
    IMG_HEAD = 2
    IMG_BODY = 3


@dataclass(frozen=True)
class TokenSequence:
    tokens: Tensor        # (N, C)
    tags: np.ndarray      # (N,) int8, TokenTag values

    def __post_init__(self) -> None:
        if self.tokens.ndim != 2 or self.tags.shape != (self.tokens.shape[0],):
            raise ShapeError(f"tokens {self.tokens.shape} and tags {self.tags.shape} disagree")

    def __len__(self) -> int:
        return self.tokens.shape[0]

    @property
    def width(self) -> int:
        return self.tokens.shape[1]

    def count(self, tag: int) -> int:
        return int((self.tags == tag).sum())

    @classmethod
    def uniform(cls, tokens: Tensor, tag: int) -> TokenSequence:
        return cls(tokens, np.full(tokens.shape[0], tag, dtype=np.int8))
