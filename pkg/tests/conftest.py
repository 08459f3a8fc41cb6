"""Shared fixtures: the procedural body, the micro network and a tiny scene."""

from __future__ import annotations

import numpy as np
import pytest

from avatar.gaussians import GaussianSet
from body.body_model import BodyTemplate
from body.generator import generate_minibody
from network.config import NetworkConfig, micro_config
from network.weights import NetworkWeights, init_weights
from performance.thread_manager import TileWorkerPool
from rendering.config import RenderConfig
from skinning.config import SkinConfig
from skinning.skin_field import SkinField
from training.scene import SceneConfig, SyntheticScene, make_synthetic_scene

TINY_SCENE = SceneConfig(n_gaussians=12, n_views=3, n_holdout=1, resolution=16)
SMALL_SKIN = SkinConfig(resolution=16, diffusion_steps=4)


def random_gaussians(rng: np.random.Generator, n: int, depth: tuple[float, float] = (2.0, 4.0),
                     spread: float = 0.8) -> GaussianSet:
    """Gaussians in front of an identity camera (looking along +z)."""
    quats = rng.normal(size=(n, 4))
    sh = rng.normal(0.0, 0.05, (n, 12))
    sh[:, :3] = rng.uniform(-0.9, 0.9, (n, 3))
    positions = np.column_stack([rng.uniform(-spread, spread, (n, 2)), rng.uniform(*depth, n)])
    return GaussianSet.from_arrays(
        positions,
        quats / np.linalg.norm(quats, axis=1, keepdims=True),
        rng.uniform(0.03, 0.15, (n, 3)),
        rng.uniform(0.1, 0.95, (n, 1)),
        sh,
    )


@pytest.fixture(scope="session")
def minibody() -> BodyTemplate:
    return generate_minibody()


@pytest.fixture(scope="session")
def micro_cfg() -> NetworkConfig:
    return micro_config()


@pytest.fixture(scope="session")
def micro_weights(micro_cfg: NetworkConfig) -> NetworkWeights:
    return init_weights(micro_cfg, seed=0)


@pytest.fixture(scope="session")
def small_skin() -> SkinConfig:
    return SMALL_SKIN


@pytest.fixture(scope="session")
def small_field(minibody: BodyTemplate) -> SkinField:
    return SMALL_SKIN.build(minibody)


@pytest.fixture(scope="session")
def tiny_scene(minibody: BodyTemplate) -> SyntheticScene:
    return make_synthetic_scene(minibody, TINY_SCENE, SMALL_SKIN, RenderConfig())


@pytest.fixture
def pool():
    with TileWorkerPool(threads=2) as p:
        yield p


@pytest.fixture
def make_gaussians():
    return random_gaussians
