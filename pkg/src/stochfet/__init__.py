"""Mixture-density-network modelling of stochastic FeFET drain current.

Device-to-device variation is captured by a learned embedding per device, the
network is trained with a closed-form mixture CRPS, and currents are sampled
through a zero-truncated mixture so they stay non-negative.
"""
from ._accel import USING_NUMBA
from .crps import crps_mixture, crps_gradient, gnll_loss, gnll_gradient
from .embedding import (
    EmbeddingGaussian,
    PcaModel,
    SyntheticDeviceSet,
    fit_gaussian,
    pca_fit,
    pca_project,
    sample_embedding,
    structured_embeddings,
)
from .errors import (
    BracketError,
    ConfigError,
    ConvergenceError,
    DegenerateComponentError,
    DeviceLookupError,
    DomainError,
    MetricError,
    ModelFormatError,
    ParseError,
    ShapeError,
    StochFetError,
    TrainingError,
)
from .io import load_measurements, load_model, save_model
from .mdn import (
    MixtureParams,
    NetworkConfig,
    NetworkParams,
    forward,
    forward_with_embedding,
    init_params,
    mixture_pdf,
)
from .oracle import OracleConfig, OracleTruth, generate_synthetic_dataset
from .special import brent_root, erf, mish, mish_prime, softmax, softplus, std_normal_cdf, std_normal_pdf
from .sweep import SweepTrace, Waveform, detect_q_events, predicted_pdf_average, quantile_trace, simulate_sweep
from .train import (
    DataPoint,
    Dataset,
    Scaling,
    TrainConfig,
    TrainedModel,
    evaluate_crps,
    gradient_check,
    r_squared,
    train,
)
from .truncated import TruncatedMixture, clip_quantile, inverse_cdf, trunc_cdf, trunc_pdf, truncate, truncated_mean

__version__ = "0.1.0"
