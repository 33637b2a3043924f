"""
Error taxonomy for HVBK Spectral

Every error carries a machine-readable error_type and the process exit code
the CLI reports for it (2 precondition, 3 singularity, 4 numerical).
"""
from typing import Any, Dict, List, Optional, Sequence, Tuple


class HVBKError(Exception):
    """Base class for all simulator errors"""

    error_type = "HVBK_ERROR"
    exit_code = 4

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": self.message,
            "error_code": self.error_type,
            "exit_code": self.exit_code,
        }


class ResolutionError(HVBKError):
    """Grid or truncation sizes are incompatible"""

    error_type = "RESOLUTION_ERROR"
    exit_code = 2


class ConsistencyError(HVBKError):
    """A structural invariant of a field or state does not hold"""

    error_type = "CONSISTENCY_ERROR"


class SingularityError(HVBKError):
    """Superfluid vorticity magnitude fell to or below the admissible floor"""

    error_type = "SINGULARITY_ERROR"
    exit_code = 3

    def __init__(self, message: str, location: Optional[Tuple[int, ...]] = None,
                 value: Optional[float] = None):
        super().__init__(message)
        self.location = location
        self.value = value

    def to_dict(self) -> Dict[str, Any]:
        result = super().to_dict()
        if self.location is not None:
            result["location"] = list(self.location)
        if self.value is not None:
            result["value"] = self.value
        return result


class GevreyRangeError(HVBKError):
    """Exponential weight or exact factorial out of floating-point range"""

    error_type = "GEVREY_RANGE_ERROR"

    def __init__(self, message: str, k: Optional[Sequence[int]] = None):
        super().__init__(message)
        self.k = tuple(int(c) for c in k) if k is not None else None


class DivergentSeriesError(HVBKError):
    """Reciprocal-magnitude series ratio 2*C0*sigma0/m_f is not below one"""

    error_type = "DIVERGENT_SERIES_ERROR"
    exit_code = 2


class PreconditionError(HVBKError):
    """Inputs violate an operation's precondition"""

    error_type = "PRECONDITION_ERROR"
    exit_code = 2


class ConfigError(PreconditionError, ValueError):
    """Configuration could not be parsed or breaks named hypotheses"""

    error_type = "CONFIG_ERROR"

    def __init__(self, message: str, violations: Optional[List[str]] = None):
        super().__init__(message)
        self.violations = list(violations or [])

    def to_dict(self) -> Dict[str, Any]:
        result = super().to_dict()
        result["violations"] = self.violations
        return result


class FitError(HVBKError):
    """Spectral decay fit has too little data"""

    error_type = "FIT_ERROR"


class CostGuardError(HVBKError):
    """Brute-force oracle requested at a resolution it cannot afford"""

    error_type = "COST_GUARD_ERROR"
    exit_code = 2


class EstimateViolationError(HVBKError):
    """Nonlinear estimate right-hand side vanished while the left did not"""

    error_type = "ESTIMATE_VIOLATION"


class SamplingError(HVBKError):
    """Random draw could not be floor-certified within the retry limit"""

    error_type = "SAMPLING_ERROR"


class PresetError(HVBKError):
    """Unknown initial-condition preset or invalid preset parameters"""

    error_type = "PRESET_ERROR"
    exit_code = 2


__all__ = [
    "HVBKError",
    "ResolutionError",
    "ConsistencyError",
    "SingularityError",
    "GevreyRangeError",
    "DivergentSeriesError",
    "PreconditionError",
    "ConfigError",
    "FitError",
    "CostGuardError",
    "EstimateViolationError",
    "SamplingError",
    "PresetError",
]
