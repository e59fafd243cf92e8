"""Exception hierarchy for the dualgeo package."""


class DualGeoError(Exception):
    """Base class for all dualgeo errors."""


class SingularConformalFactor(DualGeoError):
    """Conformal denominator is within the singular guard band (turning point)."""


class SingularMetric(DualGeoError):
    """Metric is not invertible at the requested point."""


class DimensionMismatch(DualGeoError):
    """Inconsistent dimensions between metric, gauge field or state."""


class StepFailure(DualGeoError):
    """Integrator could not meet the local tolerance or exceeded its step budget."""


class SingularityReached(DualGeoError):
    """Trajectory ran into a field/metric singularity.

    Carries the partial trajectory up to the last accepted state in
    ``self.partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DegenerateTrajectory(DualGeoError):
    """Deviation norm underflowed; no growth exponent can be fitted."""


class TooFewSamples(DualGeoError):
    """Not enough samples for the requested finite-difference or fit."""


class GridTooSmall(DualGeoError):
    """Grid does not admit central stencils (fewer than 4 points on an axis)."""


class NonUniformSampling(DualGeoError):
    """Transform axis is not uniformly sampled."""


class NonConvergentTail(DualGeoError):
    """Field does not decay on the integration window (tail above threshold)."""


class NotAGaugeFunction(DualGeoError):
    """Scalar does not satisfy the wave-equation gauge condition."""


class ConfigError(DualGeoError):
    """Base class for scenario-configuration errors (CLI exit code 2)."""


class ParseError(ConfigError):
    """Config file could not be parsed; message carries line/column."""


class SchemaError(ConfigError):
    """Config parsed but violates the schema.

    ``self.violations`` is a list of (path, reason) pairs covering every
    violation found, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{path}: {reason}" for path, reason in self.violations)
        super().__init__(f"invalid scenario config: {lines}")


class UnknownCatalogId(ConfigError):
    """Field catalog id not recognised; message lists the valid ids."""
