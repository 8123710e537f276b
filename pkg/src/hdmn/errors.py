"""Exception hierarchy shared across the package."""


class HDMNError(Exception):
    """Base class for all package errors."""


class ModelError(HDMNError):
    """A network, CPD, constraint or model file is malformed."""


class DegeneratePotentialError(HDMNError):
    """A continuous variable could not be integrated out (singular precision)."""


class InconsistentEvidenceError(HDMNError):
    """Evidence and constraints leave zero probability mass.

    ``t`` is the time slice at which the inconsistency surfaced, when known.
    """

    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} (t={t})")
        self.t = t


class FilterFailure(HDMNError):
    """Every particle died; carries the slice index and rejection statistics."""

    def __init__(self, t, rejections, draws):
        super().__init__(
            f"particle filter failed at t={t}: no live particles "
            f"({rejections} rejected of {draws} draws so far)"
        )
        self.t = t
        self.rejections = rejections
        self.draws = draws
