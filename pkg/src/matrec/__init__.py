"""Rank-aware cosine matrix factorization for skewed rating data."""

from .dataio import (
    RatingDataset,
    RatingTriple,
    load_lastfm,
    load_movielens,
    normalize_ratings,
    split,
)
from .errors import (
    ColdStartError,
    DegenerateFeatureError,
    IngestionError,
    InvalidArgumentError,
    InvalidDataError,
    InvalidStateError,
    MatRecError,
    NumericalError,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .model import (
    Hyperparams,
    MatRecModel,
    MatRecParams,
    PairIntermediates,
    TrainTrace,
    build_features,
    init_params,
    pair_loss,
    predict_pair,
    sgd_step,
    train,
)
from .ranking import RankTable, compute_ranks

__version__ = "0.1.0"
