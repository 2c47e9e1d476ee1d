"""Constants for evidence_select."""

# Anchor response (sharpness, margin)
ANCHOR_GAMMA = 8.0
ANCHOR_DELTA = 0.15

# Selector temperature schedule and centering
TEMPERATURE_START = 1.0
TEMPERATURE_END = 0.4
SELECTOR_CENTER = 0.0
SELECTOR_HIDDEN = 32

# Host predictor
PREDICTOR_HIDDEN = 32
GATE_EPSILON = 1e-6

INJECTION_MODES = [
    "attention_bias",
    "feature_reweight",
    "hybrid",
]

# Composite loss and optimizer
LAMBDA_BUDGET = 0.1
LAMBDA_GROUND = 0.5
EVIDENCE_BUDGET = 0.05
LEARNING_RATE = 2e-4
WEIGHT_DECAY = 1e-5
GRAD_CLIP = 5.0
ADAM_BETAS = (0.9, 0.999)
ADAM_EPSILON = 1e-8
DEFAULT_EPOCHS = 15
MAX_TRAIN_PATCHES = 512
ADAPTER_RANK = 8
GROUND_EPSILON = 1e-12

# Discrete recovery
RECOVERY_THRESHOLD = 0.5
COVERAGE_TARGET = 0.95

# Diagnostics
BUDGET_FRACTION = 0.05
DROP_TOLERANCE = 0.05
SUBSET_SIZES = [8, 16, 32]
SUBSET_POLICIES = [
    "sufficient_prefix",
    "attention_topk",
    "random_topk",
]
BUDGET_GRID = [0.01, 0.02, 0.05, 0.10, 0.20, 1.00]
SUFFICIENCY_DELTA = 0.05
NECESSITY_DELTA = 0.05
RECOVERABILITY_DELTA = 0.05
LIPSCHITZ_PROBES = 100
UNAVAILABLE = "unavailable"

BASELINE_RULES = [
    "random_k",
    "attention_topk",
    "gradient_topk",
    "occlusion_topk",
    "gce_discrete",
    "gce_soft_threshold",
]

SPLITS = ["train", "val", "test"]

# Dataset defaults (desk scale)
DEFAULT_SEED = 42
DATASET_FORMAT_VERSION = 1
CONFIG_SCHEMA_VERSION = 1
ENV_THREADS = "EVSEL_THREADS"
