"""dualgeo: Hamiltonian dynamics as geodesic flow in a conformal dual geometry.

Core surface:

* :mod:`dualgeo.fields` - potentials, gauge fields, conformal dual metrics
  and the gauge-extended metric object.
* :mod:`dualgeo.geometry` - connection, curvature and mapped-form blocks.
* :mod:`dualgeo.dynamics` - canonical flows, dual geodesics, tangent map,
  Lorentz references and the integrators.
* :mod:`dualgeo.deviation` - geodesic deviation in extended covariant form
  and stability indicators.
* :mod:`dualgeo.maxwell5d` - five-dimensional off-shell field checks.
* :mod:`dualgeo.conservation` - conserved-generator diagnostics.
* :mod:`dualgeo.scenarios` - config loading and run orchestration (CLI).
"""

from .errors import (ConfigError, DegenerateTrajectory, DimensionMismatch,
                     DualGeoError, GridTooSmall, NonConvergentTail,
                     NonUniformSampling, NotAGaugeFunction, ParseError,
                     SchemaError, SingularConformalFactor, SingularMetric,
                     SingularityReached, StepFailure, TooFewSamples,
                     UnknownCatalogId)
from .fields import (ConformalFactor, ExtendedMetric, FieldStrength, Gauge3,
                     Gauge5, ParticleParams, PotentialNR, ScalarPotential,
                     ScalarTimeField, VectorTimeField, conformal_extended_metric,
                     conformal_metric_nr, conformal_metric_rel, delta3, eta4,
                     extend_metric, field_strength, flat_metric)
from .geometry import (ConnectionBlock, CurvatureBlock, MForm, connection,
                       connection_fd, curvature, curvature_fd_gamma, m_form)
from .dynamics import (DualGeodesicFlow, EquivalenceReport, FlatHamiltonFlow,
                       GeodesicState, IntegratorConfig, LorentzFlow,
                       MappedGeodesicFlow, MetricHamiltonFlow, PhaseState,
                       Trajectory, VelocityState, dual_equivalence,
                       geodesic_mapped, geodesic_rhs_dual, hamilton_rhs,
                       integrate, lorentz_reference, lowered_velocity,
                       mapped_acceleration, random_onshell_velocity,
                       tangent_map)
from .deviation import (DeviationState, DeviationTrajectory, PairwiseResult,
                        StabilityReport, covariant_deriv, deviation_rhs,
                        deviation_rhs_raw, integrate_deviation,
                        pairwise_oracle, stability_indicator)
from .conservation import (ConservationReport, conservation_report,
                           gutzwiller_condition_residual, k_value,
                           mass_balance_residual, mass_squared)
from .maxwell5d import (Current5, Grid4, ModeField,
                        discrete_frequency_for, fourier_modes,
                        gauge_transform, grid_field_strength, load_grid_field,
                        mode_residual, modes_to_samples, save_grid_field,
                        spatial_stencil_symbol, stencil_symbol,
                        wave_residual, zero_mode_reduce)
from .catalog import CATALOG_IDS, build_field

__version__ = "0.1.0"
