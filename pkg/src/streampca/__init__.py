"""Streaming k-PCA: Oja, Krasulina and implicit Krasulina updates, batch EM,
an exact eigendecomposition reference, and synchronous model averaging."""

from . import backend
from .data_io import Dataset, SyntheticSpec, center, load_csv, load_idx, split, synthetic_gaussian
from .distributed import CombineWeights, SyncConfig, combine_average, combine_qr, run_synchronous
from .errors import (
    BadK,
    BadMagic,
    BadSpec,
    ConfigError,
    DimensionMismatch,
    NotOrthonormal,
    NotSymmetric,
    ParseError,
    RaggedRows,
    RankDeficient,
    StreamPCAError,
    TruncatedFile,
)
from .pca_core import ComponentState, CovarianceLoss, InverseMode, compression_loss, project, reconstruct
from .trace import LossTrace
from .updates import (
    LearningSchedule,
    batch_em_fit,
    batch_pca_oracle,
    explicit_unconstrained_step,
    implicit_krasulina_minibatch,
    implicit_krasulina_stochastic,
    init_state,
    krasulina_step,
    oja_step,
    stream,
)

__version__ = "0.1.0"
