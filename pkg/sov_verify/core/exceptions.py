from typing import Any, Optional


class SovVerifyError(Exception):
    """Base error; `detail` carries the human-readable reason."""

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# cfield
class NonIntegerDifference(SovVerifyError):
    pass


class PoleEncountered(SovVerifyError):
    pass


# plane
class OriginSingularity(SovVerifyError):
    pass


class NotConverged(SovVerifyError):
    def __init__(self, detail: str, estimate: Any = None):
        super().__init__(detail)
        self.estimate = estimate


class PreconditionViolated(SovVerifyError):
    pass


# diagrams
class NotAChain(SovVerifyError):
    pass


class DegenerateChain(SovVerifyError):
    pass


class UniquenessViolated(SovVerifyError):
    pass


class NoPlaneWave(SovVerifyError):
    pass


class IndexSumMismatch(SovVerifyError):
    pass


class UnsupportedDiagram(SovVerifyError):
    pass


class StuckDiagram(SovVerifyError):
    def __init__(self, detail: str, diagram: Any = None):
        super().__init__(detail)
        self.diagram = diagram


# sov
class TooShort(SovVerifyError):
    pass


class ConvergenceDomainViolated(SovVerifyError):
    pass


class BranchCutHit(SovVerifyError):
    pass


class FormMismatch(SovVerifyError):
    def __init__(self, detail: str, forms: Any = None):
        super().__init__(detail)
        self.forms = forms


# gustafson
class PoleOnContour(SovVerifyError):
    pass


# cli
class ConfigError(SovVerifyError):
    pass


class BudgetExceeded(SovVerifyError):
    def __init__(self, detail: str, report: Optional[Any] = None):
        super().__init__(detail)
        self.report = report


class IoError(SovVerifyError):
    pass
