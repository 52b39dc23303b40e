"""Liouville measures, Liouville Brownian motion and KPZ dimension experiments."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.1.0"

from .errors import (BracketNotFound, BracketNotFoundWarning, DomainError, EmbeddingError,
                     InvariantViolation, OutOfDomain, TruncationError)
from .field import (CovarianceModel, FieldSample, GridSpec, apply_girsanov_shift, cov_mff,
                    cov_wn, cutoff_variance, sample_field)
from .gmc import (ChaosMeasure, ball_mass, ball_masses, build_measure, doubling_statistic,
                  log_weighted_mass, moment_spectrum, xi)
