"""Exception hierarchy; names follow the operation contracts."""


class DiracSeaError(Exception):
    """Base class for all package errors."""


class ValidationError(DiracSeaError):
    """Invalid input (bad spec field, malformed config, bad flag value)."""


class NonHermitian(DiracSeaError):
    """Assembled one-particle operator failed the hermiticity check."""


class ZeroMode(DiracSeaError):
    """One-particle spectrum touches zero; the positive/negative split is ambiguous."""


class ConjugationMismatch(DiracSeaError):
    """No verified anti-unitary intertwiner C with C h1 C^-1 = -h1."""


class DegeneracyResolutionFailed(DiracSeaError):
    """Momentum labeling failed; the operator is not translation invariant."""


class DimensionMismatch(DiracSeaError):
    """Vector length does not match the mode count or Fock dimension."""


class NotNormalized(DiracSeaError):
    """State required to be normalized is not."""


class NotOrthonormal(DiracSeaError):
    """Mode vectors required to be orthonormal are not."""


class ChargeOutOfRange(DiracSeaError):
    """Per-site charge outside {-d/2, ..., +d/2}."""


class SitesNotDistinct(DiracSeaError):
    """Configuration locations required to be pairwise distinct are not."""


class ZeroProbabilityConfiguration(DiracSeaError):
    """Jump rates requested at a configuration with (numerically) zero weight."""


class StepTooCoarse(DiracSeaError):
    """Rate times step size exceeds the stability bound after maximal subdivision."""


class ConvergenceFailure(DiracSeaError):
    """Iterative evolution did not meet the requested tolerance."""


class TooLarge(DiracSeaError):
    """Fock dimension exceeds the configured guard."""


class RegionTooLarge(DiracSeaError):
    """Region (or its grown set) covers the whole lattice; the check is vacuous."""


class SchemaMismatch(DiracSeaError):
    """CSV input does not carry the columns required by the consumer."""


class EmptyInput(DiracSeaError):
    """Input file contains no data rows."""
