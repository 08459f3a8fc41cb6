"""
config.py: LHM desk
All tunable constants. Nothing hardcoded elsewhere.
"""

import os

try:
    from dotenv import load_dotenv
except ImportError:  # pragma: no cover - optional dependency at runtime
    load_dotenv = None

if load_dotenv is not None:
    load_dotenv()

# ── Autodiff ──────────────────────────────────────────────────────────────────
LAYER_NORM_EPS        = 1e-5
GRADCHECK_STEP        = 1e-6
GRADCHECK_ATOL        = 1e-8        # rounding floor, scaled by max(1, |f|)
GRADCHECK_INSTABILITY = 1e-3        # one-sided or halved-step disagreement that flags a kink
GRADCHECK_SMOOTH_TOL  = 1e-6
GRADCHECK_PIPELINE_TOL = 1e-4

# ── Body model ────────────────────────────────────────────────────────────────
LBM_MAGIC            = b"LBM1"
BODY_SHAPE_DIM       = 4
BODY_WEIGHT_ATOL     = 1e-6
BODY_RING_SEGMENTS   = 10
BODY_SKIN_FALLOFF    = 4            # inverse-distance power for generated skin weights
REGION_BODY          = 0
REGION_HEAD          = 1

# ── Gaussian avatar ───────────────────────────────────────────────────────────
LHA_MAGIC       = b"LHA1"
LHA_VERSION     = 1
SH_DEGREE       = 1
OFFSET_CAP      = 0.06              # meters, hard cap on |Δp| per axis
SCALE_FLOOR     = 1e-4              # meters
QUAT_ATOL       = 1e-6
SH_C0           = 0.28209479177387814
SH_C1           = 0.4886025119029199

# ── Renderer ──────────────────────────────────────────────────────────────────
TILE_SIZE           = 16
LOWPASS_FLOOR       = 0.3           # px², added to every projected covariance
ALPHA_CLIP          = 0.99
ALPHA_SKIP          = 1.0 / 255.0
TRANSMITTANCE_MIN   = 1e-4
CAMERA_NEAR         = 0.05
FOCAL_RATIO         = 1.4           # fx = FOCAL_RATIO * width for generated cameras
BACKGROUND          = (1.0, 1.0, 1.0)

# ── Skinning ──────────────────────────────────────────────────────────────────
SKIN_RESOLUTION      = 64
SKIN_DIFFUSION_STEPS = 30
SKIN_MARGIN          = 0.10         # meters
SKIN_ROW_ATOL        = 1e-5
SKIN_DET_MIN         = 1e-8
SKIN_QUERY_AT        = "positions"  # or "anchors"
LSF_MAGIC            = b"LSF1"

# ── Network ───────────────────────────────────────────────────────────────────
TOKEN_DIM          = 64
PE_FREQUENCIES     = 8
N_LAYERS           = 2
N_HEADS            = 4
ENCODER_DIM        = 64
MLP_RATIO          = 2
BODY_RESOLUTION    = 128
BODY_PATCH         = 16
BODY_ENCODER_DEPTH = 2
HEAD_RESOLUTION    = 64
HEAD_PATCH         = 8
HEAD_ENCODER_DEPTH = 8
HEAD_TAP_DEPTHS    = (2, 4, 6, 8)
HEAD_MASK_MAX      = 0.5
N_POINTS           = 500
INIT_STD_POS       = 0.02
LHW_MAGIC          = b"LHW1"
LHW_VERSION        = 1

# ── Losses ────────────────────────────────────────────────────────────────────
LAMBDA_RGB      = 1.0
LAMBDA_MASK     = 0.5
LAMBDA_PER      = 1.0
W_ASAP          = 50.0
W_ACAP          = 10.0
ACAP_THRESHOLD  = 0.0525            # meters
PERCEPTUAL_SEED     = 1234
PERCEPTUAL_CHANNELS = 8
PERCEPTUAL_SCALES   = 3
PSNR_CAP        = 100.0
PSNR_MSE_FLOOR  = 1e-10
SSIM_WINDOW     = 11
SSIM_SIGMA      = 1.5
SSIM_K1         = 0.01
SSIM_K2         = 0.03

# ── Optimizer / training ──────────────────────────────────────────────────────
LEARNING_RATE    = 4e-4
ADAM_BETA1       = 0.9
ADAM_BETA2       = 0.999
ADAM_EPS         = 1e-8
WEIGHT_DECAY     = 5e-4
GRAD_CLIP        = 0.1
ITERATIONS       = 2000
TARGETS_PER_STEP = 4
DATA_SEED        = 0
MASK_SEED        = 1
INIT_SEED        = 2

# ── Synthetic scenes ──────────────────────────────────────────────────────────
SCENE_VIEWS          = 8
SCENE_HOLDOUT        = 4
SCENE_RESOLUTION     = 128
SCENE_POSE_MAX_ANGLE = 0.35         # radians per axis-angle component
SCENE_CAMERA_DISTANCE = 3.0
SCENE_LOOK_AT        = (0.0, 0.9, 0.0)
HEAD_CROP_EXPAND     = 1.2
SCENE_GAUSSIANS      = 500
SCENE_SEED           = 0
GT_SCALE_RANGE       = (0.01, 0.03)  # meters
GT_OPACITY_RANGE     = (0.6, 0.95)
GT_COLOR_RANGE       = (0.15, 0.85)
GT_SH_HIGHER_STD     = 0.05

# ── Overfit fixture ───────────────────────────────────────────────────────────
OVERFIT_TOKEN_DIM       = 64
OVERFIT_LAYERS          = 2
OVERFIT_POINTS          = 500
OVERFIT_VIEWS           = 8
OVERFIT_HOLDOUT         = 4
OVERFIT_RESOLUTION      = 128
OVERFIT_STEPS           = 2000
OVERFIT_CHECK_STEP      = 500
OVERFIT_LOSS_RATIO      = 0.25      # total at the check step vs step 0
OVERFIT_TRAIN_PSNR      = 30.0      # dB, mean over training views
OVERFIT_HOLDOUT_PSNR    = 24.0      # dB, mean over holdout views

# ── Runtime ───────────────────────────────────────────────────────────────────
RATE_SMOOTHING   = 0.92
LOG_EVERY        = 50              # steps between [TRAIN] console lines

# ── I/O ───────────────────────────────────────────────────────────────────────
SCENE_FILE       = "scene.json"
SCENE_AVATAR     = "gt_avatar.lha"
SCENE_BODY       = "body.lbm"
TRAIN_LOG_FILE   = "train.log"
LOG_LEVEL        = os.getenv("LHM_LOG_LEVEL", "INFO").strip().upper() or "INFO"
