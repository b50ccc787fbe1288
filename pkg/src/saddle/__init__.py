"""Deterministic desk-scale simulator for decentralized deep learning.

Implements gossip SGD and its momentum/sharpness-aware/compressed variants
over sparse topologies, with exact bookkeeping of consensus error,
compression error, communication bits, and curvature diagnostics.

Three entry points:

- :class:`DecentralizedClassifier` — scikit-learn estimator facade.
- :func:`run` with a :class:`RunConfig` — the library API for one run.
- ``saddle run|validate|report`` — config-file driven CLI for sweeps.
"""

from .algorithms import (
    ALGORITHMS,
    Hyper,
    RunConfig,
    RunResult,
    run,
)
from .compression import (
    CompressionOp,
    apply_error_feedback,
    bit_cost,
    compress,
    contraction_delta,
    identity_op,
    sign_scaled,
    stochastic_quant,
    top_k,
)
from .config import ExperimentSpec, RunLeaf, build_experiment, load_experiment
from .datagen import (
    Dataset,
    PartitionPlan,
    iid_partition,
    make_blobs,
    make_spirals,
    partition_dirichlet,
)
from .errors import (
    ConfigError,
    DivergenceError,
    IndexWidthError,
    InfeasiblePartitionError,
    InvalidTopologyError,
    SaddleError,
)
from .estimator import DecentralizedClassifier
from .metrics import (
    MetricsLog,
    RoundRow,
    consensus_error,
    cost_ratio,
    lambda_max,
    loss_surface,
    read_rounds_csv,
    variance_diagnostics,
    write_rounds_csv,
)
from .models import (
    Batch,
    GradOracle,
    LogisticRegressionOracle,
    MLPOracle,
    QuadraticOracle,
)
from .optim import LrSchedule, parse_lr_schedule, sam_gradient
from .topology import (
    MixingMatrix,
    build_complete,
    build_ring,
    build_torus,
    spectral_gap,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "Batch",
    "CompressionOp",
    "ConfigError",
    "Dataset",
    "DecentralizedClassifier",
    "DivergenceError",
    "ExperimentSpec",
    "GradOracle",
    "Hyper",
    "IndexWidthError",
    "InfeasiblePartitionError",
    "InvalidTopologyError",
    "LogisticRegressionOracle",
    "LrSchedule",
    "MLPOracle",
    "MetricsLog",
    "MixingMatrix",
    "PartitionPlan",
    "QuadraticOracle",
    "RoundRow",
    "RunConfig",
    "RunLeaf",
    "RunResult",
    "SaddleError",
    "apply_error_feedback",
    "bit_cost",
    "build_complete",
    "build_experiment",
    "build_ring",
    "build_torus",
    "compress",
    "consensus_error",
    "contraction_delta",
    "cost_ratio",
    "identity_op",
    "iid_partition",
    "lambda_max",
    "load_experiment",
    "loss_surface",
    "make_blobs",
    "make_spirals",
    "partition_dirichlet",
    "parse_lr_schedule",
    "read_rounds_csv",
    "run",
    "sam_gradient",
    "sign_scaled",
    "spectral_gap",
    "stochastic_quant",
    "top_k",
    "variance_diagnostics",
    "write_rounds_csv",
    "__version__",
]
