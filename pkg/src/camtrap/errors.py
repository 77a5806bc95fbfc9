"""Exception hierarchy shared by every pipeline stage.

The CLI maps the three base classes onto exit codes 2, 3 and 4.
"""


class CamtrapError(Exception):
    exit_code = 1


class ValidationError(CamtrapError, ValueError):
    """Input data or arguments violate a documented contract."""

    exit_code = 2


class NumericalError(CamtrapError, ArithmeticError):
    exit_code = 3


class FormatError(CamtrapError, OSError):
    """A binary or CSV file could not be parsed as the expected format."""

    exit_code = 4


# manifest
class MalformedRow(ValidationError):
    pass


class DuplicateImage(ValidationError):
    pass


class EmptyConflict(ValidationError):
    pass


class InconsistentWidth(ValidationError):
    pass


class EmptyManifest(ValidationError):
    pass


# schedule
class StepOutOfRange(ValidationError, IndexError):
    pass


# trainer
class DimensionMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class MissingFlippedFeatures(ValidationError):
    pass


class NonFiniteGradient(NumericalError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite gradient at optimizer step {step}")


# ensemble / metrics
class KeyMismatch(ValidationError):
    pass


class VocabularyMismatch(ValidationError):
    pass


class EmptyTableList(ValidationError):
    pass


class WeightMismatch(ValidationError):
    pass


class BadWeights(ValidationError):
    pass
