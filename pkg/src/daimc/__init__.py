"""Incomplete multi-view clustering by weighted semi-NMF with regression-aligned bases."""

from .dataset import (MultiViewDataset, apply_incomplete_rate, build_weight_matrix,
                      load_manifest, save_manifest, synth_planted)
from .errors import (ConstraintViolationError, DaimcError, FormatError,
                     InvalidInputError, NumericError)
from .evaluation import ClusterResult, accuracy, kmeans, nmi
from .model import FactorizationState, Hyperparams, fit, objective

__version__ = "0.1.0"
