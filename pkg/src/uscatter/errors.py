"""Exception types raised by the uscatter library."""


class UscatterError(Exception):
    """Base class for all library errors."""


class NonPrimeP(UscatterError):
    """The lattice base p is not a prime number."""


class GridTooLarge(UscatterError):
    """Requested grid exceeds the configured cell-count limit."""


class IndexOutOfRange(UscatterError):
    """Cell index outside [0, cell_count)."""


class GridMismatch(UscatterError):
    """Operands live on different grids."""


class NegativeKernelValue(UscatterError):
    """A kernel evaluation or modulation produced a negative value."""


class DiagonalSingularity(UscatterError):
    """Radial profile is undefined at displacement zero and no policy was given."""


class KernelValidationError(UscatterError):
    """Kernel parameters violate a construction requirement."""


class MissingAnalyticK(UscatterError):
    """Analytic loss mode selected without supplying the loss profile."""


class NegativeLoss(UscatterError):
    """Supplied analytic loss profile has negative entries."""


class NonRadialKernel(UscatterError):
    """Operation requires a radial (displacement-norm) kernel."""


class NonEvaluable(UscatterError):
    """Kernel spec cannot be evaluated on the given grid."""


class StepTooLarge(UscatterError):
    """Explicit step violates the dt * k_max stability guard."""


class ToleranceNotReached(UscatterError):
    """Matrix-exponential series did not meet the requested tolerance."""


class NoPositiveSteadyState(UscatterError):
    """Iteration did not produce a strictly positive steady vector."""


class ReducibleGenerator(UscatterError):
    """Gain structure is not irreducible; the Perron direction is ambiguous."""


class NonConvergence(UscatterError):
    """Iterative solver failed to reach its tolerance within the step cap."""


class DegenerateGrid(UscatterError):
    """Grid too small for the requested spectral computation."""


class NonPositiveN(UscatterError):
    """Reference steady state must be strictly positive."""


class InsufficientSamples(UscatterError):
    """Trajectory has too few samples for finite differencing."""


class NonPositiveValue(UscatterError):
    """Decay-rate fitting requires strictly positive series values."""


class ConfigError(UscatterError):
    """Experiment configuration is missing, malformed, or inconsistent."""


class CheckFailure(UscatterError):
    """A verified property assertion failed (CLI exit code 2)."""
