from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

SUITES = ("gamma", "rules", "scalar-products", "eigen", "gustafson")


class SuiteConfig(BaseModel):
    """What to run and how strictly to judge it."""

    suite: str
    chain_file: Optional[str] = None
    tolerances: Dict[str, float] = Field(default_factory=dict)
    seed: int = 20240517
    budget: float = Field(default=600.0, gt=0)
    threads: Optional[int] = Field(default=None, ge=1)

    @field_validator("tolerances")
    @classmethod
    def check_tolerances(cls, value: Dict[str, float]) -> Dict[str, float]:
        for name, tol in value.items():
            if tol <= 0:
                raise ValueError(f"tolerance for {name} must be positive")
        return value


class CheckRecord(BaseModel):
    """One comparison of a computed value against its expected value."""

    name: str
    anchor: str
    lhs: complex
    rhs: complex
    abs_err: float
    rel_err: float
    tol: float
    passed: bool = Field(alias="pass")
    evals: int = 0
    wall_time: float = 0.0
    error: Optional[str] = None
    table: Optional[List[Dict[str, Any]]] = None

    model_config = ConfigDict(populate_by_name=True)

    @model_validator(mode="after")
    def check_verdict(self) -> "CheckRecord":
        if self.error is None:
            measured = self.abs_err if self.rhs == 0 else self.rel_err
            if self.passed != (measured <= self.tol):
                raise ValueError(f"{self.name}: verdict does not match its errors")
        return self


class ReportSummary(BaseModel):
    total: int = 0
    passed: int = 0
    failed: int = 0
    errors: int = 0


class Report(BaseModel):
    suite: str
    seed: int
    checks: List[CheckRecord] = Field(default_factory=list)
    budget_exceeded: bool = False

    @computed_field
    @property
    def summary(self) -> ReportSummary:
        errors = sum(1 for c in self.checks if c.error is not None)
        passed = sum(1 for c in self.checks if c.passed)
        return ReportSummary(
            total=len(self.checks), passed=passed, failed=len(self.checks) - passed - errors, errors=errors
        )

    @property
    def ok(self) -> bool:
        return not self.budget_exceeded and all(c.passed for c in self.checks)
