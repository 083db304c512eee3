"""Exception and warning types shared across the package."""


class PhononPairError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(PhononPairError, ValueError):
    """Inconsistent or out-of-range physical parameters."""


class HeatingRegimeError(ParameterError):
    """Anti-Stokes rate does not exceed Stokes rate: no net laser cooling."""


class AsymmetryError(ParameterError):
    """Two-cavity parameters differ beyond the tolerance assumed by the
    symmetric closed forms."""


class DegenerateWitnessError(PhononPairError):
    """Witness denominator vanishes: the two conditional correlations are
    equal and the ratio carries no information."""


class BlindSpotError(PhononPairError):
    """Interference phase sits at a zero of the witness visibility."""


class EmptyChannelError(PhononPairError):
    """A correlation estimate was requested for a detector channel with no
    events."""


class InsufficientClicksError(PhononPairError):
    """Too few events to form the requested estimate."""


class RateInconsistencyError(PhononPairError):
    """Jump-channel rates do not reproduce the steady state they were
    derived from."""


class TruncationError(PhononPairError):
    """Fock-space truncation ceiling carries non-negligible population."""


class FloorFitError(PhononPairError):
    """Noise-floor fit of a heterodyne spectrum failed or is inconsistent
    with the declared floor."""


class AliasingError(PhononPairError):
    """Sampling interval too coarse for the requested sideband frequency."""


class ConfigError(PhononPairError):
    """Malformed or ambiguous run configuration."""


class ValidityWarning(UserWarning):
    """A soft modelling assumption (scale separation, weak coupling) is
    stretched but not violated outright."""
