"""Exception hierarchy; each class carries the CLI exit code it maps to."""

from __future__ import annotations

from typing import Any


class NetContractError(Exception):
    exit_code = 4
    kind = "error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details
        self.stage: str | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"error": self.kind, "message": self.message}
        if self.stage:
            out["stage"] = self.stage
        out.update(self.details)
        out["exit_code"] = self.exit_code
        return out


class ModelValidationError(NetContractError, ValueError):
    exit_code = 2
    kind = "validation"


class AssumptionViolation(NetContractError):
    exit_code = 3
    kind = "assumption"


class NumericError(NetContractError, ArithmeticError):
    exit_code = 4
    kind = "numeric"


class SpectralRadiusError(NumericError):
    """Eigen routine and power-iteration fallback both failed; ``estimate`` is the best guess."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message, estimate=estimate)
        self.estimate = estimate


class ConsistencyError(NetContractError):
    exit_code = 5
    kind = "consistency"


class PropertyViolation(ConsistencyError):
    kind = "property-violation"
