"""Exception hierarchy. Each class carries the CLI exit code used for it."""

from __future__ import annotations


class CausalXRLError(Exception):
    exit_code = 1


class InvalidConfig(CausalXRLError, ValueError):
    exit_code = 2


class IoError(CausalXRLError, OSError):
    exit_code = 3


class MissingColumn(CausalXRLError, KeyError):
    exit_code = 4

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class SegmentTooShort(CausalXRLError, IndexError):
    exit_code = 5


class UnseenState(CausalXRLError, KeyError):
    exit_code = 6

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class AllZero(CausalXRLError, ValueError):
    exit_code = 7


class GraphError(CausalXRLError, ValueError):
    exit_code = 8


class CycleDetected(GraphError):
    pass


class UnknownVariable(GraphError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class DuplicateName(GraphError):
    pass


class InvalidHorizon(GraphError):
    pass


class SingularDesignMatrix(CausalXRLError, ValueError):
    exit_code = 9


class EmptyDataset(CausalXRLError, ValueError):
    exit_code = 10


class IncompleteObservation(CausalXRLError, ValueError):
    exit_code = 11


class OutOfRange(CausalXRLError, ValueError):
    exit_code = 12


class ActionAfterDone(CausalXRLError, RuntimeError):
    exit_code = 13


class UnknownEnvironment(CausalXRLError, KeyError):
    exit_code = 14

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""
