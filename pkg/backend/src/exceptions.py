"""
Error types shared by the qmle services.
Each class corresponds to one failure kind a service can report; the command
layer maps them to process exit codes.
"""

from typing import Optional, Tuple


class QMLEError(Exception):
    """Base class for all qmle errors"""


class InvalidArgumentError(QMLEError, ValueError):
    """An argument is outside the documented domain of an operation"""


class UnsupportedError(QMLEError, ValueError):
    """The request is well-formed but asks for something not implemented"""


class CapacityExceededError(QMLEError):
    """The dense reference backend cannot hold the requested system"""


class ContractViolationError(QMLEError):
    """A pipeline stage received a state that breaks its input contract"""


class ConstructionFailedError(QMLEError):
    """Polynomial certification still failed after the last refinement round"""

    def __init__(
        self,
        message: str,
        sup_error: float = float("nan"),
        degree: int = 0,
        interval: Optional[Tuple[float, float]] = None,
    ):
        super().__init__(message)
        self.sup_error = sup_error
        self.degree = degree
        self.interval = interval

    def to_dict(self):
        return {
            "error": str(self),
            "sup_error": self.sup_error,
            "degree": self.degree,
            "interval": list(self.interval) if self.interval else None,
        }


class PlanConditionsError(QMLEError):
    """A plan was built but fails the grid checks required for its estimate"""

    def __init__(self, message: str, failed: Tuple[str, ...] = ()):
        super().__init__(message)
        self.failed = tuple(failed)
