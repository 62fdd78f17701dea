"""Exception hierarchy shared by all subpackages."""


class CircuitOptError(Exception):
    """Base class."""


class AnalyticFailure(CircuitOptError):
    """A well-formed input whose analysis came out negative (CLI exit code 1)."""


class InputError(CircuitOptError):
    """Malformed input (CLI exit code 2)."""


class ParseError(InputError):
    def __init__(self, msg, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + msg)


class InvalidNetlist(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class DegenerateCircuit(AnalyticFailure):
    pass


class NotAdmissible(AnalyticFailure):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class ZeroNormal(InputError):
    pass


class SubproblemDiverged(CircuitOptError):
    pass


class NonCancelableNegativeResistor(AnalyticFailure):
    pass


class AlgebraicLoopUnsolved(CircuitOptError):
    pass


class InconsistentInitialState(InputError):
    pass


class NoConvergence(CircuitOptError):
    pass


class NumericalBlowup(CircuitOptError):
    pass


class NonRepresentable(AnalyticFailure):
    pass


class MaxIter(CircuitOptError):
    pass


class CertificateInvalid(AnalyticFailure):
    pass


class NoFeasibleParams(AnalyticFailure):
    pass


class GraphRequired(InputError):
    pass


class Disconnected(InputError):
    pass


class LayoutMismatch(InputError):
    pass


class ParameterWindowViolated(AnalyticFailure):
    pass


class TargetNotReached(CircuitOptError):
    pass


class BareNonsmoothDevice(AnalyticFailure):
    """Continuous simulation of a nonsmooth device with no series resistance."""
