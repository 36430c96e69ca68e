"""Exception types raised across the package.

Every exception carries a stable ``code`` string so callers (and the CLI)
can branch on the failure class without parsing messages.
"""


class StrataError(ValueError):
    code = "STRATA_ERROR"


class EmptyInputError(StrataError):
    code = "EMPTY_INPUT"


class InvalidRecordError(StrataError):
    code = "INVALID_RECORD"


class EmptyStratumError(StrataError):
    code = "EMPTY_STRATUM"


class AllStrataDegenerateError(StrataError):
    """No stratum has subjects in both compared arms."""

    code = "ALL_STRATA_DEGENERATE"


class EmptyArmError(StrataError):
    code = "EMPTY_ARM"


class SameArmError(StrataError):
    code = "SAME_ARM"


class ZeroTotalVarianceError(StrataError):
    code = "ZERO_TOTAL_VARIANCE"


class TooFewValidReplicatesError(StrataError):
    code = "TOO_FEW_VALID_REPLICATES"


class DimensionMismatchError(StrataError):
    code = "DIMENSION_MISMATCH"


class InfeasibleParametersError(StrataError):
    code = "INFEASIBLE_PARAMETERS"


class RejectionCapError(StrataError):
    code = "REJECTION_CAP"


class ReconstructionError(StrataError):
    code = "RECONSTRUCTION_FAILED"


class FormatError(StrataError):
    """Malformed input file; ``line`` is 1-based when known."""

    code = "FORMAT_ERROR"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvalidFactorError(StrataError):
    code = "INVALID_FACTOR"
