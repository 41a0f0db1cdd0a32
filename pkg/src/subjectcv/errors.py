"""Exception types raised across the toolkit.

Every error is a subclass of SubjectCVError so callers can catch the whole
family; the CLI maps subfamilies to exit codes.
"""


class SubjectCVError(Exception):
    """Base class for all toolkit errors."""


class ParseError(SubjectCVError):
    """A document could not be parsed at all (malformed JSON/CSV)."""


class ValidationError(SubjectCVError):
    """A parsed document or value violates a structural invariant."""


class DomainError(SubjectCVError):
    """A numeric argument is outside its mathematical domain."""


class InvalidParams(SubjectCVError):
    """Plan parameters are invalid for the requested scheme."""


class InsufficientSubjects(SubjectCVError):
    """The manifest has too few subjects for the requested partitioning."""


class EmptyManifest(SubjectCVError):
    """The manifest declares no windows at all."""


class AlignmentError(SubjectCVError):
    """Two artifacts that must align (fold-wise or subject-wise) do not."""


class FingerprintMismatch(SubjectCVError):
    """An artifact references a different manifest than the one supplied."""


class UnknownSplit(SubjectCVError):
    """A prediction log references a split_id absent from the plan."""


class UnknownLabel(SubjectCVError):
    """A label is not a member of the label space."""


class EmptyLog(SubjectCVError):
    """A metric was requested on an empty prediction log."""


class EmptyInput(SubjectCVError):
    """A summary was requested on an empty value list."""


class DivisionByZero(SubjectCVError):
    """Percentage change requested against a zero reference."""


class MismatchedInputs(SubjectCVError):
    """Two reports being compared do not share manifest or metric."""


class DegenerateInput(SubjectCVError):
    """Regression input carries no usable variation."""


class MissingLog(SubjectCVError):
    """A bias estimate is missing the eval or heldout log for a split."""


class TooFewSubjects(SubjectCVError):
    """Advice requested for fewer subjects than any scheme supports."""


class EmptySplit(SubjectCVError):
    """Training was requested with an empty train or validation set."""


class InvalidConfig(SubjectCVError):
    """A synthetic-dataset configuration violates its invariants."""


class EmptyMatrix(SubjectCVError):
    """A signal operation received a matrix with no samples."""


class ZeroVariance(SubjectCVError):
    """A channel with zero variance cannot be standardized."""
