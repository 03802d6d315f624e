"""Exception types shared across the pipeline."""


class EquateError(Exception):
    """Base class for all pipeline errors."""


class EmptyInput(EquateError):
    pass


class ParseError(EquateError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateKey(EquateError):
    pass


class DuplicateFeature(EquateError):
    pass


class NoBoundaries(EquateError):
    pass


class SpecMismatch(EquateError):
    pass


class NoDonor(EquateError):
    pass


class TooFewPoints(EquateError):
    pass


class NonPositiveCount(EquateError):
    pass


class NonPositiveValue(EquateError):
    pass


class DegenerateInput(EquateError):
    pass


class NonConvergence(EquateError):
    """Raised (or flagged on the result) when an iterative fit stalls."""


class SingularDesign(EquateError):
    pass


class UnknownLanguage(EquateError):
    pass
