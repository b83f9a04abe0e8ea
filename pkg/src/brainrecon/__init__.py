"""Toolkit for reconstructing seen images from fMRI activity.

The pipeline decodes brain activity in two stages: ridge regression maps
voxel patterns to the latent spaces of frozen pretrained generative models
(a hierarchical VAE for a low-level initial guess, plus vision and text
embeddings for semantic guidance), and a latent diffusion sampler turns
those predictions into images. This package owns everything that does not
need the heavy networks: the regression solvers, the latent-space layouts
and file formats, the noise-schedule arithmetic, the evaluation battery,
and region-of-interest analysis. Network inference runs in a separate
process driven by the JSON job manifests emitted here.
"""

from . import dataio, latents, metrics, ridge, roisynth, schedule
from .errors import (
    CapacityError,
    ConfigError,
    DataConsistencyError,
    DataError,
    DegenerateInputError,
    LayoutError,
    NpyFormatError,
    RankDeficiencyError,
    UndefinedCorrelationError,
    UnsupportedDtypeError,
)

__version__ = "0.1.0"

__all__ = [
    "dataio",
    "latents",
    "metrics",
    "ridge",
    "roisynth",
    "schedule",
    "CapacityError",
    "ConfigError",
    "DataConsistencyError",
    "DataError",
    "DegenerateInputError",
    "LayoutError",
    "NpyFormatError",
    "RankDeficiencyError",
    "UndefinedCorrelationError",
    "UnsupportedDtypeError",
    "__version__",
]
