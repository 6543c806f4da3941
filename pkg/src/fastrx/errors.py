"""Exception hierarchy.

Every error carries a short ``code`` string so that the CLI (and any caller
logging failures) can tell apart e.g. a malformed header from a size mismatch.
"""


class RXError(Exception):
    code = "E_RX"
    #: CLI exit status for this family of errors
    exit_status = 2


class InvalidData(RXError, ValueError):
    code = "E_INVALID"


class DegenerateData(RXError, ValueError):
    code = "E_DEGENERATE"


class ShapeMismatch(InvalidData):
    code = "E_SHAPE"


class HeaderError(InvalidData):
    code = "E_HEADER"


class SizeMismatch(InvalidData):
    code = "E_SIZE"


class NonFiniteData(InvalidData):
    code = "E_NONFINITE"


class NumericFailure(RXError, ArithmeticError):
    code = "E_NUMERIC"
    exit_status = 3


class NotPositiveDefinite(NumericFailure):
    code = "E_NOT_PD"


class TooLarge(NumericFailure):
    code = "E_TOO_LARGE"
