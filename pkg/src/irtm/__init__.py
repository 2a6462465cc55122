"""Constrained Bayesian IRT with analyst-coded loading constraints.

Estimates multiple, possibly correlated latent dimensions from binary
response matrices. Per-item diagonal code tables state which items load on
which dimensions and in which direction; those codes become truncated
priors on the loadings and drive synthetic anchor units that pin the
orientation and scale of the latent space.
"""
from .model import (
    ConstraintSet,
    Hyperparameters,
    IdentificationReport,
    ParameterState,
    PosteriorDraws,
    ResponseMatrix,
    loading_prior,
    validate_identification,
)
from .sampling import RngStream, TruncationBounds
from .anchors import AnchorUnavailableError, augment_with_anchors, make_anchor, strip_anchors
from .gibbs import IdentificationError, run_sampler
from .baselines import fit_pca, fit_unconstrained_irt
from .estimators import IRTM, BinaryPCA, UnconstrainedIRT

__version__ = "0.1.0"

__all__ = [
    "AnchorUnavailableError",
    "BinaryPCA",
    "ConstraintSet",
    "Hyperparameters",
    "IRTM",
    "IdentificationError",
    "IdentificationReport",
    "ParameterState",
    "PosteriorDraws",
    "ResponseMatrix",
    "RngStream",
    "TruncationBounds",
    "UnconstrainedIRT",
    "augment_with_anchors",
    "fit_pca",
    "fit_unconstrained_irt",
    "loading_prior",
    "make_anchor",
    "run_sampler",
    "strip_anchors",
    "validate_identification",
]
