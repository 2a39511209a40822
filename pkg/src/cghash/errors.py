"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures
onto its documented exit statuses without a lookup table.
"""


class CGHError(Exception):
    exit_code = 1


class InputError(CGHError):
    """Missing or corrupt input artifact."""

    exit_code = 3


class ParseError(InputError):
    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class DuplicateEntry(InputError):
    pass


class CorruptArtifact(InputError):
    pass


class EmptyVocabulary(InputError):
    pass


class DegenerateSplit(InputError):
    pass


class EmptyTrainingSet(InputError):
    pass


class ShapeError(CGHError, ValueError):
    exit_code = 2


class DimensionMismatch(ShapeError):
    pass


class LengthMismatch(ShapeError):
    pass


class KExceedsN(ShapeError):
    pass


class MissingUserCodes(ShapeError):
    pass


class UnknownEntity(ShapeError):
    """User or item id outside the known range."""


class DomainError(CGHError, ValueError):
    exit_code = 2


class NumericalError(CGHError, ArithmeticError):
    exit_code = 4


class SingularSystem(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    pass


class InsufficientNegatives(CGHError):
    """Raised only when a protocol asks for strict negative counts."""

    exit_code = 3


class ConfigError(CGHError, ValueError):
    """Unknown configuration key or a value that does not parse."""

    exit_code = 2
