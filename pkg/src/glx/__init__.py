"""Extremes of Gaussian interface models on the lattice.

Covariances, exact sampling, Poisson approximation bounds, Gumbel limits
and point-process checks for the discrete Gaussian free field, the membrane
model, the massive free field and the fractional free field.
"""
__version__ = "0.1.0"

from .errors import (CertificateError, ConditioningError, ConfigError, ConsistencyError,
                     GlxError, ParameterError, PartitionError, RangeError, SizeError, SPDError,
                     TruncationError)
from .lattice import (BoxDomain, DependencyRadiusPolicy, ball_sites, bulk_sites,
                      dependency_radius, enumerate_box, outer_boundary2)
from .models import ModelSpec
from .green import (GreenMatrix, InfiniteGreen, finite_green, kappa, killed_walk_green_oracle,
                    precision_matrix, walk_green_infinite)
from .stable import fractional_green_infinite, fractional_transition, stable_density
from .gaussian import GaussianSampler, conditional_variances, sample_field
from .steinchen import (bivariate_exceed_prob, build_family, compute_bounds, exceed_prob,
                        multivariate_tv_bound, savage_bound)
from .evt import gumbel_cdf, ks_distance, limit_cdf, scaling_constants, simulate_maxima
from .pointprocess import CellSpec, kallenberg_check, poisson_intensity

__all__ = [n for n in dir() if not n.startswith("_")]
