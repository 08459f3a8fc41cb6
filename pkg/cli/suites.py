"""
suites.py
---------
Finite-difference gradient suites behind `main.py gradcheck --suite NAME`.

    ops       every tape primitive on random inputs           (tolerance 1e-6)
    losses    photometric, perceptual and canonical terms      (1e-6)
    renderer  positions / scales / opacities / SH of 8 splats  (1e-4)
    network   every weight group of the micro configuration    (1e-4)
    end2end   weights -> Gaussians -> skinning -> render -> L1 (1e-4)

Each check reduces its output to a scalar through a fixed random projection,
so every output coordinate contributes to the tested gradient.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from loguru import logger

from autodiff import Tensor, grad_check_report, ops
from autodiff.ops import UNARY_RULES
from avatar.gaussians import GaussianSet, activate_raw
from body.body_model import Pose, SampledPoints, forward_kinematics, sample_surface_points
from body.generator import generate_minibody
from network.config import micro_config
from network.lhm import ForwardMode, predict_gaussians
from network.weights import NetworkWeights, init_weights
from rendering.camera import Camera, orbit_camera
from rendering.rasterizer import render
from skinning.config import SkinConfig
from skinning.lbs import pose_gaussians
from training.losses import acap_loss, asap_loss, color_loss, mask_loss
from training.perceptual import FeaturePyramid, perceptual_loss
from utils.config import GRADCHECK_PIPELINE_TOL, GRADCHECK_SMOOTH_TOL, GRADCHECK_STEP, SCENE_LOOK_AT
from utils.errors import ConfigError, GradCheckError

Fn = Callable[[Mapping[str, Tensor]], Tensor]


@dataclass(frozen=True)
class Check:
    name: str
    fn: Fn
    inputs: dict[str, np.ndarray]
    tolerance: float
    max_coords: int | None = None
    step: float = GRADCHECK_STEP


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    error: float
    tolerance: float
    coordinates: int
    worst: str = ""

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance

    def line(self) -> str:
        status = "ok" if self.passed else "FAIL"
        where = f"  worst {self.worst}" if self.worst else ""
        return f"{self.name:<28} {self.error:.3e} < {self.tolerance:.0e}  {status} ({self.coordinates} coords){where}"


def weigh(y: Tensor) -> Tensor:
    """Scalar <R, y> with R fixed per output shape."""
    r = np.random.default_rng([7, *y.shape]).normal(size=y.shape)
    return (y * r).sum()


def _signed(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    # magnitudes bounded away from zero keep relu / abs off their kinks
    return rng.uniform(0.2, 1.5, shape) * rng.choice([-1.0, 1.0], shape)


# ── ops ───────────────────────────────────────────────────────────────────────


def ops_checks(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    tol = GRADCHECK_SMOOTH_TOL
    checks = []
    for code in UNARY_RULES:
        x = rng.uniform(0.2, 1.5, (4, 5)) if code in ("log", "sqrt") else _signed(rng, (4, 5))
        checks.append(Check(code, lambda t, code=code: weigh(ops.apply_unary(code, t["x"])), {"x": x}, tol))
    for code in ("add", "sub", "mul", "div"):
        b = rng.uniform(0.5, 1.5, (1, 5)) if code == "div" else rng.normal(size=(1, 5))
        checks.append(Check(
            code, lambda t, code=code: weigh(ops.apply_binary(code, t["a"], t["b"])),
            {"a": rng.normal(size=(4, 5)), "b": b}, tol,
        ))
    checks += [
        Check("matmul", lambda t: weigh(ops.matmul(t["a"], t["b"])),
              {"a": rng.normal(size=(2, 3, 4)), "b": rng.normal(size=(2, 4, 5))}, tol),
        Check("linear", lambda t: weigh(ops.linear(t["x"], t["w"], t["b"])),
              {"x": rng.normal(size=(6, 4)), "w": rng.normal(size=(4, 3)), "b": rng.normal(size=3)}, tol),
        Check("softmax", lambda t: weigh(ops.softmax(t["x"], axis=-1)), {"x": rng.normal(size=(3, 6))}, tol),
        Check("layer_norm", lambda t: weigh(ops.layer_norm(t["x"], t["gain"], t["bias"])),
              {"x": rng.normal(size=(4, 6)), "gain": rng.normal(size=6), "bias": rng.normal(size=6)}, tol),
        Check("sum", lambda t: weigh(ops.reduce("sum", t["x"], axis=0)), {"x": rng.normal(size=(4, 5))}, tol),
        Check("mean", lambda t: weigh(ops.reduce("mean", t["x"], axis=1, keepdims=True)),
              {"x": rng.normal(size=(4, 5))}, tol),
        Check("max", lambda t: weigh(ops.reduce("max", t["x"], axis=1)),
              {"x": rng.permutation(20).reshape(4, 5) * 0.1}, tol),
        Check("reshape", lambda t: weigh(ops.reshape(t["x"], (5, 4))), {"x": rng.normal(size=(4, 5))}, tol),
        Check("transpose", lambda t: weigh(ops.transpose(t["x"], (2, 0, 1))), {"x": rng.normal(size=(2, 3, 4))}, tol),
        Check("concat", lambda t: weigh(ops.concat([t["a"], t["b"]], axis=0)),
              {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=(4, 3))}, tol),
        Check("take", lambda t: weigh(ops.take(t["x"], np.array([3, 0, 3, 1]), axis=0)),
              {"x": rng.normal(size=(4, 3))}, tol),
        Check("getitem", lambda t: weigh(t["x"][1:, ::2]), {"x": rng.normal(size=(4, 5))}, tol),
        Check("split_rows", lambda t: sum(map(weigh, ops.split_rows(t["x"], [2, 3])), start=Tensor(0.0)),
              {"x": rng.normal(size=(5, 3))}, tol),
        Check("row_norm", lambda t: weigh(ops.row_norm(t["x"])), {"x": _signed(rng, (5, 3))}, tol),
        Check("normalize_rows", lambda t: weigh(ops.normalize_rows(t["x"])), {"x": _signed(rng, (5, 4))}, tol),
        Check("im2col", lambda t: weigh(ops.im2col(t["x"], 3)), {"x": rng.normal(size=(5, 6, 2))}, tol),
        Check("avg_pool2", lambda t: weigh(ops.avg_pool2(t["x"])), {"x": rng.normal(size=(5, 6, 2))}, tol),
    ]
    return checks


# ── losses ────────────────────────────────────────────────────────────────────


def _gaussians(t: Mapping[str, Tensor], base: dict[str, np.ndarray]) -> GaussianSet:
    pick = {k: t[k] if k in t else Tensor(v) for k, v in base.items()}
    return GaussianSet(pick["positions"], pick["rotations"], pick["scales"], pick["opacities"], pick["sh"])


def _gaussian_arrays(rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
    quats = rng.normal(size=(n, 4))
    sh = rng.normal(0.0, 0.05, (n, 12))
    sh[:, :3] = rng.uniform(-0.9, 0.9, (n, 3))
    return {
        "positions": rng.normal(size=(n, 3)),
        "rotations": quats / np.linalg.norm(quats, axis=1, keepdims=True),
        "scales": rng.uniform(0.05, 0.12, (n, 3)),
        "opacities": rng.uniform(0.3, 0.6, (n, 1)),
        "sh": sh,
    }


def losses_checks(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    tol = GRADCHECK_SMOOTH_TOL
    pyramid = FeaturePyramid(seed=seed, channels=4, scales=2)
    target = rng.uniform(0.0, 1.0, (8, 8, 3))
    target_mask = rng.uniform(0.0, 1.0, (8, 8, 1))
    base = _gaussian_arrays(rng, 6)
    offsets = rng.normal(size=(6, 3))
    # norms kept clear of the hinge at 0.0525
    offsets *= (rng.choice([0.02, 0.09], 6) / np.linalg.norm(offsets, axis=1))[:, None]
    return [
        Check("color_loss", lambda t: color_loss(t["x"], target), {"x": rng.uniform(0.0, 1.0, (8, 8, 3))}, tol),
        Check("mask_loss", lambda t: mask_loss(t["x"], target_mask), {"x": rng.uniform(0.0, 1.0, (8, 8, 1))}, tol),
        Check("perceptual_loss", lambda t: perceptual_loss(t["x"], target, pyramid),
              {"x": rng.uniform(0.0, 1.0, (8, 8, 3))}, tol, max_coords=48),
        Check("asap_loss", lambda t: asap_loss(_gaussians(t, base), 0.07), {"scales": base["scales"]}, tol),
        Check("acap_loss", lambda t: acap_loss(t["x"], 0.0525), {"x": offsets}, tol),
    ]


# ── renderer ──────────────────────────────────────────────────────────────────


def renderer_checks(seed: int = 0, n: int = 8, size: int = 32) -> list[Check]:
    rng = np.random.default_rng(seed)
    base = _gaussian_arrays(rng, n)
    # one splat per depth layer keeps the sort order fixed under perturbation
    depths = 2.0 + 0.35 * rng.permutation(n)
    base["positions"] = np.column_stack([rng.uniform(-0.3, 0.3, (n, 2)), depths])
    camera = Camera(size, size, float(size), float(size), size / 2.0, size / 2.0)

    def fn(t: Mapping[str, Tensor]) -> Tensor:
        rgb, alpha = render(_gaussians(t, base), camera)
        return weigh(rgb) + weigh(alpha)

    # a smaller step narrows the band in which a pixel can cross the alpha skip threshold
    return [
        Check(f"render[{name}]", fn, {name: base[name]}, GRADCHECK_PIPELINE_TOL, step=1e-7)
        for name in ("positions", "scales", "opacities", "sh")
    ]


# ── network / end2end ─────────────────────────────────────────────────────────


@dataclass(frozen=True)
class _MicroInputs:
    image: np.ndarray
    crop: np.ndarray
    points: SampledPoints


@lru_cache(maxsize=1)
def _micro_inputs(seed: int = 0) -> _MicroInputs:
    cfg = micro_config()
    rng = np.random.default_rng(seed)
    points = sample_surface_points(generate_minibody(), cfg.n_points, seed)
    return _MicroInputs(
        rng.uniform(0.0, 1.0, (cfg.body_resolution, cfg.body_resolution, 3)),
        rng.uniform(0.0, 1.0, (cfg.head_resolution, cfg.head_resolution, 3)),
        points,
    )


def _weight_groups(weights: NetworkWeights) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for key in weights:
        groups.setdefault(key.split(".")[0], []).append(key)
    return groups


def _with(weights: NetworkWeights, t: Mapping[str, Tensor]) -> NetworkWeights:
    return NetworkWeights(weights.cfg, {**dict(weights), **t})


def network_checks(seed: int = 0, coords_per_group: int = 6) -> list[Check]:
    cfg = micro_config()
    weights = init_weights(cfg, seed)
    inputs = _micro_inputs(seed)

    def forward(mode: ForwardMode) -> Fn:
        def fn(t: Mapping[str, Tensor]) -> Tensor:
            raw = predict_gaussians(inputs.image, inputs.crop, inputs.points, cfg, _with(weights, t), mode)
            total = weigh(raw.offsets)
            for tensor in raw.tensors()[1:]:
                total = total + weigh(tensor)
            return total
        return fn

    checks = [
        Check(f"network[{group}]", forward(ForwardMode.infer()), {k: weights[k].data for k in keys},
              GRADCHECK_PIPELINE_TOL, max_coords=coords_per_group)
        for group, keys in sorted(_weight_groups(weights).items())
    ]
    block_keys = _weight_groups(weights)["blocks"]
    checks.append(Check("network[blocks, shrunk]", forward(ForwardMode.train(0.25, seed)),
                        {k: weights[k].data for k in block_keys}, GRADCHECK_PIPELINE_TOL, max_coords=coords_per_group))
    return checks


def end2end_checks(seed: int = 0, size: int = 16) -> list[Check]:
    cfg = micro_config()
    weights = init_weights(cfg, seed)
    inputs = _micro_inputs(seed)
    template = generate_minibody()
    skin_cfg = SkinConfig(resolution=16, diffusion_steps=4)
    field = skin_cfg.build(template)
    rng = np.random.default_rng(seed)
    pose = Pose(rng.uniform(-0.2, 0.2, (template.n_joints, 3)), np.zeros(3))
    transforms = forward_kinematics(template, pose)
    camera = orbit_camera(0.3, 3.0, np.array(SCENE_LOOK_AT), size, size)
    target = rng.uniform(0.0, 1.0, (size, size, 3))
    target_mask = rng.uniform(0.0, 1.0, (size, size, 1))
    anchors = inputs.points.positions
    # skin rows are constants of the forward pass
    skin = skin_cfg.weights_for(field, anchors, anchors)

    def fn(t: Mapping[str, Tensor]) -> Tensor:
        w = _with(weights, t)
        raw = predict_gaussians(inputs.image, inputs.crop, inputs.points, cfg, w)
        g = activate_raw(raw, anchors, cfg.offset_cap, cfg.scale_floor)
        rgb, alpha = render(pose_gaussians(g, skin, transforms), camera)
        return color_loss(rgb, target) + mask_loss(alpha, target_mask) + acap_loss(g.positions - anchors, 0.0525)

    keys = ["regress.offset.weight", "regress.scale.weight", "regress.opacity.bias", "regress.sh.weight",
            "blocks.0.head.query.qkv.weight", "geo.fc1.weight", "body_enc.patch.weight"]
    return [Check("end2end", fn, {k: weights[k].data for k in keys}, GRADCHECK_PIPELINE_TOL, max_coords=6)]


SUITES: dict[str, Callable[[], list[Check]]] = {
    "ops": ops_checks,
    "losses": losses_checks,
    "renderer": renderer_checks,
    "network": network_checks,
    "end2end": end2end_checks,
}


def run_check(check: Check) -> CheckOutcome:
    try:
        result = grad_check_report(check.fn, check.inputs, step=check.step, max_coords=check.max_coords)
    except GradCheckError as exc:
        raise GradCheckError(f"{check.name}: {exc}") from exc
    worst = f"{result.worst_input}[{result.worst_index}]" if result.worst_input else ""
    return CheckOutcome(check.name, result.max_rel_error, check.tolerance, result.coordinates, worst)


def run_suite(name: str) -> list[CheckOutcome]:
    """Every check of the named suite; raises GradCheckError naming the failing ops."""
    if name not in SUITES:
        raise ConfigError(f"unknown gradcheck suite {name!r}; choose from {', '.join(SUITES)}")
    outcomes = []
    for check in SUITES[name]():
        outcome = run_check(check)
        logger.debug("[GRADCHECK] {}", outcome.line())
        outcomes.append(outcome)
    return outcomes


def assert_passed(outcomes: list[CheckOutcome]) -> None:
    failed = [o for o in outcomes if not o.passed]
    if failed:
        names = ", ".join(f"{o.name} ({o.error:.3e})" for o in failed)
        raise GradCheckError(f"gradient mismatch in {names}")
