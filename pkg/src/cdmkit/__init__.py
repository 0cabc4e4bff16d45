"""Conditional denoising surrogates for steady-state physical systems.

The package trains a denoiser to restore clean steady states from
corrupted ones, conditioned on experimental controls, and turns inference
into deterministic trajectories toward the learned solution manifold:
either a walk down a noise ladder or a fixed-point iteration of a static
restoration field. A physics-consistent regressor and its projection
variant serve as baselines, benchmarked on a built-in synthetic
steady-state reaction network or on external CSV datasets.
"""

__version__ = "0.1.0"

from .data import DataSplits, Dataset, Standardizer
from .errors import (
    CdmkitError,
    ConfigError,
    DivergedTrainingError,
    DomainError,
    SampleRejectionError,
    SamplerDivergenceError,
    ShapeError,
    VariantMismatchError,
)
from .evalbench import (
    METHODS,
    RunReport,
    SplitSpec,
    physics_rmse,
    rmse,
    run_ensemble,
    run_method_matrix,
    sweep,
)
from .model import (
    CdmModel,
    CorruptionKernel,
    VARIANT_TIME_DEPENDENT,
    VARIANT_TIME_INDEPENDENT,
    build_cdm,
    corrupt,
    load_checkpoint,
    save_checkpoint,
)
from .netcore import (
    AdamState,
    DenseLayer,
    LayerNormParams,
    NetWidths,
    NetworkParams,
    adam_step,
    forward,
    gelu,
    init_network,
    layer_norm,
    loss_and_grad,
    sinusoidal_embed,
)
from .physics import (
    ConstraintSet,
    ReactionNetwork,
    SamplingBox,
    SteadyStateSolverConfig,
    default_benchmark,
    generate_benchmark_dataset,
    project,
    residuals,
    solve_steady_state,
)
from .samplers import (
    BatchSampleResult,
    SAMPLER_KINDS,
    SamplerConfig,
    Trajectory,
    batch_sample,
    sample_cdm_0,
    sample_cdm_t,
)
from .schedule import (
    SigmaLadder,
    SineSchedule,
    discretize,
    euler_eta,
    geometric_sigma,
    sigma_of_t,
)
from .training import (
    RegressorModel,
    TrainConfig,
    TrainReport,
    train_cdm,
    train_regressor,
    validation_loss,
)
