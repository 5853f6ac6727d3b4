import os
from enum import Enum

current_dir = os.path.dirname(os.path.abspath(__file__))  # .../src/csl_reid

# Name of the application
APP_NAME = os.path.basename(current_dir)

# Environment variable holding the default output root for generated data and runs
OUTPUT_ROOT_ENV = "CSL_REID_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = os.path.join(os.getcwd(), "runs")

# Environment variable switching the package logger to DEBUG
DEBUG_ENV = "CSL_REID_DEBUG"


def output_root():
    """Default directory for generated datasets and run folders."""
    return os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)


class Modality(str, Enum):
    RGB = "RGB"
    IR = "IR"


class Regime(str, Enum):
    VI = "VI"  # visible <-> infrared
    CC = "CC"  # cloth-changing, RGB only


class Direction(str, Enum):
    NIR_TO_RGB = "NIR->RGB"
    RGB_TO_NIR = "RGB->NIR"
    CC = "CC"


# Canvas (height x width), 2:1 like the usual person crops
IMAGE_HEIGHT = 64
IMAGE_WIDTH = 32

# Zero padding used by the training-time random crop
CROP_PAD = 4

# Batch normalization constants
BN_EPS = 1e-5
BN_MOMENTUM = 0.1

# Luminance weights (BT.601) for gray-scale conversion and IR simulation
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

# Synthetic dataset defaults
N_TRAIN_IDS = 32
N_TEST_IDS = 16
N_VIEWS = 4
IMAGES_PER_CELL = 4
CC_CLOTHING_SETS = 3
IR_NOISE_SIGMA = 0.02

# PK sampler
SAMPLER_P = 4
SAMPLER_K = 4

# Network widths
PCT_HIDDEN = 8
BACKBONE_WIDTHS = (16, 32, 64, 64)
BACKBONE_STRIDES = (2, 1, 2, 1)
EMBED_DIM = 64
NONLOCAL_AFTER_BLOCK = 2

# Desk schedule (the usual 100 epoch / decay at 20, 50 recipe scaled by 1/5)
EPOCHS = 20
STEPS_PER_EPOCH = 40
LR0 = 0.1
MOMENTUM = 0.9
WEIGHT_DECAY = 5e-4
WARMUP_EPOCHS = 5
DECAY_EPOCHS = (10, 15)
DECAY_FACTOR = 0.1

# Augmentation policy
P_APPLY = 0.5
P_CR_GIVEN_APPLY = 0.5

# Evaluation
CMC_TOPK = 20
EVAL_BATCH = 64

# Prefetch queue depth for the batch producer thread
PREFETCH_DEPTH = 4
