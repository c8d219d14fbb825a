"""Exception hierarchy for the micromaser detection-statistics package."""


class MicromaserError(Exception):
    """Base class for all numerical failures raised by this package."""


class InvalidParams(MicromaserError, ValueError):
    """A physical or numerical parameter is outside its admissible range."""


class TruncationOverflow(MicromaserError):
    """Probability mass pushed past the Fock-space cutoff exceeds tolerance."""


class NonConvergentTruncation(MicromaserError):
    """No photon-number cutoff below the configured cap meets the tail criterion."""


class StepSizeUnderflow(MicromaserError):
    """The adaptive integrator could not meet its tolerance."""


class NonDecayingTail(MicromaserError):
    """An improper time integral did not converge within the horizon limit."""


class CrossCheckMismatch(MicromaserError):
    """Time integration and direct solve disagree beyond the cross-check tolerance."""


class DegenerateChannel(MicromaserError):
    """A ratio statistic is undefined because a rate or switch probability is zero."""


class SingularResolvent(DegenerateChannel):
    """The no-detection generator has no inverse (no detector is active)."""


class InsufficientData(MicromaserError):
    """Too few events in a detection record to form an estimate."""
