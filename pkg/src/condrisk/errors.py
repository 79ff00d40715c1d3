"""Exception hierarchy.

Every error carries a short machine-readable ``category`` and the process
exit code the CLI maps it to.
"""


class CondRiskError(Exception):
    category = "error"
    exit_code = 1


class InputError(CondRiskError):
    category = "input"
    exit_code = 2


class NumericalError(CondRiskError):
    category = "numerical"
    exit_code = 3


class ConfigError(CondRiskError):
    category = "config"
    exit_code = 4


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateLocation(ParseError):
    pass


class TooFewPoints(InputError):
    pass


class SingularLocalFit(NumericalError):
    """Too few points inside the kernel support to fit a local plane."""


class DegenerateDenominator(NumericalError):
    pass


class NonFiniteObjective(NumericalError):
    pass


class DegenerateCloud(NumericalError):
    pass


class EmptyPilot(NumericalError):
    pass


class ZeroSill(NumericalError):
    pass


class NotPSD(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class DegenerateResiduals(NumericalError):
    pass
