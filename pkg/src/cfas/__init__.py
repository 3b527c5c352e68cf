"""Simulation and closed-form analysis of continuous fluid antenna systems."""

__version__ = "0.1.0"

from .analytics import (afd_asymptotic, afd_closed_form, afd_special_equal_beta, ccdf_sir, cdf_sir,
                        cdf_sup_asymptotic, cdf_sup_lower_bound, lcr_asymptotic, lcr_closed_form,
                        lcr_envelope_ratio, lcr_special_equal_beta)
from .channel import (ComplexField, CorrelationKind, CorrelationModel, CovarianceFactor, SpatialGrid,
                      build_covariance, correlation, curvature_b, empirical_correlation, sample_field)
from .errors import (CfasError, DegenerateSampleError, InvalidParameterError, ModelNotPSDError,
                     NoEventsError, ResourceError)
from .estimators import (CrossingStats, EstimateWithCI, count_crossings, derivative_variance,
                         empirical_afd, empirical_cdf, empirical_lcr)
from .sirproc import ScenarioParams, SirTrace, SupremumResult, assemble_sir, dfas_select, supremum
