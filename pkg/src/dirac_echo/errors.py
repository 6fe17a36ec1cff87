"""Exception and warning types.

Every error carries a short machine-readable ``kind`` and a ``context``
dictionary, which the command-line front end serialises verbatim.
"""


class DiracEchoError(Exception):
    kind = "error"
    exit_code = 1

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self):
        return {"kind": self.kind, "message": self.message, "context": self.context}


class ParseError(DiracEchoError):
    kind = "parse"
    exit_code = 2


class GridMismatchError(DiracEchoError):
    kind = "grid-mismatch"
    exit_code = 2


class ParameterError(DiracEchoError):
    kind = "parameter"
    exit_code = 3


class DomainError(DiracEchoError):
    kind = "domain"
    exit_code = 3


class PreconditionError(DiracEchoError):
    kind = "precondition"
    exit_code = 3


class IllPosedDeconvolutionError(DiracEchoError):
    kind = "ill-posed-deconvolution"
    exit_code = 4


class ResidualError(DiracEchoError):
    kind = "residual"
    exit_code = 4


class NonContractiveEstimateError(DiracEchoError):
    kind = "non-contractive-estimate"
    exit_code = 4


class MobiusPoleError(DiracEchoError):
    kind = "mobius-pole"
    exit_code = 4


class TruncationError(DiracEchoError):
    kind = "truncation"
    exit_code = 4


class NotAValidAccelerantError(DiracEchoError):
    """The structured operator lost positivity: the data is not a response function."""

    kind = "not-a-valid-accelerant"
    exit_code = 4


class InvalidParametersError(DiracEchoError):
    kind = "invalid-parameters"
    exit_code = 3


class PoleError(DiracEchoError):
    kind = "pole"
    exit_code = 4


class DifferentiationError(DiracEchoError):
    kind = "differentiation"
    exit_code = 3


class SingularMatrixError(DiracEchoError):
    kind = "internal"
    exit_code = 1


class NumericalWarning(UserWarning):
    """Warning that carries a numeric estimate (``.value``) alongside the message."""

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class TruncationWarning(NumericalWarning):
    pass


class StepSizeWarning(NumericalWarning):
    pass


class RegionWarning(NumericalWarning):
    pass
