"""
Pydantic models for HVBK Spectral
"""
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, Field, field_validator, model_validator


DIAGNOSTICS_COLUMNS = [
    "t", "energy_s", "energy_n", "dissipation_rate",
    "momentum_x", "momentum_y", "momentum_z",
    "X", "Y", "sigma", "min_vort",
    "mean_us_x", "mean_us_y", "mean_us_z",
    "mean_un_x", "mean_un_y", "mean_un_z",
    "torque_budget_used", "sigma_fit",
]

Vector3 = Tuple[float, float, float]


class Formulation(str, Enum):
    """Which Galerkin system the integrator advances"""
    VELOCITY = "velocity"
    VORTICITY = "vorticity"


class StopReason(str, Enum):
    """Why a run ended"""
    T1 = "T1"
    TMAX = "TMAX"
    T2 = "T2"
    TORQUE_BUDGET = "TORQUE_BUDGET"


# Parameter models

class GevreyParams(BaseModel):
    """Indices of the analytic norm ||A^{(p+r)/2} e^{sigma A^{1/2}} f||"""
    p: float = Field(..., description="Regularity index", ge=0)
    sigma: float = Field(default=0.0, description="Analyticity radius", ge=0)
    r: float = Field(default=0.0, description="Extra power of A", ge=0)

    class Config:
        json_schema_extra = {
            "example": {"p": 2.6, "sigma": 0.1, "r": 0.0}
        }


class VorticityFloorParams(BaseModel):
    """Pointwise floors of the superfluid vorticity and the radius they admit"""
    m_i: float = Field(..., description="Initial floor inf|omega_s^0|", gt=0)
    m_f: float = Field(..., description="Evolution floor", gt=0)
    C0: float = Field(default=1.0, description="Poincare constant of the box", gt=0)
    sigma0: float = Field(..., description="Initial analyticity radius", ge=0)

    @model_validator(mode="after")
    def check_floor_order(self) -> "VorticityFloorParams":
        if not self.m_f < self.m_i:
            raise ValueError("m_f<m_i required")
        return self

    @property
    def beta(self) -> float:
        """Ratio of the reciprocal-magnitude series"""
        return 2.0 * self.C0 * self.sigma0 / self.m_f

    def hypothesis_violations(self) -> List[str]:
        violations = []
        if not 2.0 * self.C0 * self.sigma0 < self.m_f:
            violations.append("2*C0*sigma0<m_f required")
        if not self.sigma0 < self.m_i / (2.0 * self.C0):
            violations.append("sigma0<m_i/(2*C0) required")
        return violations


class Densities(BaseModel):
    """Superfluid and normal fluid density fractions"""
    rho_s: float = Field(..., gt=0, lt=1)
    rho_n: float = Field(..., gt=0, lt=1)

    @model_validator(mode="after")
    def check_partition(self) -> "Densities":
        if abs(self.rho_s + self.rho_n - 1.0) > 1e-12:
            raise ValueError("rho_s+rho_n=1 required")
        return self

    @classmethod
    def from_rho_s(cls, rho_s: float) -> "Densities":
        return cls(rho_s=rho_s, rho_n=1.0 - rho_s)


class RunControls(BaseModel):
    """Integrator controls"""
    dt: float = Field(..., description="Time step", gt=0)
    t_max: float = Field(..., description="Run horizon", gt=0)
    formulation: Formulation = Field(default=Formulation.VORTICITY)
    oversample: int = Field(default=2, description="Friction grid factor", ge=1)
    stop_on_floor: bool = Field(default=True, description="Stop at the T2 event")
    stop_on_torque_budget: bool = Field(
        default=True, description="Stop once the torque budget is exhausted"
    )
    stop_on_t1: bool = Field(default=True, description="Stop at the ledger time T1")
    max_steps: Optional[int] = Field(default=None, description="Step cap", ge=1)
    snapshot_every: int = Field(default=0, description="Snapshot period in steps", ge=0)

    class Config:
        json_schema_extra = {
            "example": {
                "dt": 0.01,
                "t_max": 1.0,
                "formulation": "vorticity",
                "oversample": 2,
            }
        }


class LedgerConstants(BaseModel):
    """Explicit existence-time constants of the Gevrey energy ledger"""
    C_ledger: float = Field(..., gt=0)
    X0: float
    Ubar: float
    sigma0: float
    delta: float
    T1: float


# Run outputs

class DiagnosticsRecord(BaseModel):
    """One row of the per-step ledger"""
    t: float
    energy_s: float
    energy_n: float
    dissipation_rate: float
    momentum: Vector3
    X: float
    Y: float
    sigma: float
    min_vort: float
    mean_u_s: Vector3
    mean_u_n: Vector3
    torque_budget_used: float
    sigma_fit: float = Field(default=float("nan"))

    @property
    def energy(self) -> float:
        return self.energy_s + self.energy_n

    def to_row(self) -> Dict[str, float]:
        row = {
            "t": self.t,
            "energy_s": self.energy_s,
            "energy_n": self.energy_n,
            "dissipation_rate": self.dissipation_rate,
            "X": self.X,
            "Y": self.Y,
            "sigma": self.sigma,
            "min_vort": self.min_vort,
            "torque_budget_used": self.torque_budget_used,
            "sigma_fit": self.sigma_fit,
        }
        for axis, value in zip("xyz", self.momentum):
            row[f"momentum_{axis}"] = value
        for axis, value in zip("xyz", self.mean_u_s):
            row[f"mean_us_{axis}"] = value
        for axis, value in zip("xyz", self.mean_u_n):
            row[f"mean_un_{axis}"] = value
        return {column: row[column] for column in DIAGNOSTICS_COLUMNS}

    @classmethod
    def from_row(cls, row: Dict[str, Any]) -> "DiagnosticsRecord":
        def vec(prefix: str) -> Vector3:
            return tuple(float(row[f"{prefix}_{axis}"]) for axis in "xyz")

        return cls(
            t=float(row["t"]),
            energy_s=float(row["energy_s"]),
            energy_n=float(row["energy_n"]),
            dissipation_rate=float(row["dissipation_rate"]),
            momentum=vec("momentum"),
            X=float(row["X"]),
            Y=float(row["Y"]),
            sigma=float(row["sigma"]),
            min_vort=float(row["min_vort"]),
            mean_u_s=vec("mean_us"),
            mean_u_n=vec("mean_un"),
            torque_budget_used=float(row["torque_budget_used"]),
            sigma_fit=float(row["sigma_fit"]),
        )


class RunEvent(BaseModel):
    """Notable moment of a run (floor crossing, budget exhaustion, sigma hitting zero)"""
    kind: str
    t: float
    detail: Dict[str, Any] = Field(default_factory=dict)


class RunSummary(BaseModel):
    """Outcome of a simulate invocation"""
    stop_reason: StopReason
    t_final: float
    steps: int
    T1: float
    delta: float
    X0: float
    Ubar: float
    C_ledger: float
    torque_budget: float
    torque_budget_used: float
    t2_bracket: Optional[Tuple[float, float]] = None
    momentum_drift: float
    events: List[RunEvent] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)


# Configuration

class InitialCondition(BaseModel):
    """Preset name and its parameters"""
    name: str = Field(..., min_length=1)
    params: Dict[str, float] = Field(default_factory=dict)


class SimConfig(BaseModel):
    """Run configuration; optional fields are filled in by harness.resolve_config"""
    N: int = Field(..., description="Truncation radius", ge=1)
    oversample: int = Field(default=2, ge=1)
    rho_s: float = Field(default=0.5, description="Superfluid density fraction")
    p: float = Field(default=2.6, description="Regularity index", ge=0)
    sigma0: Optional[float] = Field(default=None, description="Initial radius")
    C0: float = Field(default=1.0, description="Poincare constant", gt=0)
    C_ledger: float = Field(default=1.0, description="Ledger constant C", gt=0)
    m_i: Optional[float] = Field(default=None, description="Measured initial floor")
    m_f: Optional[float] = Field(default=None, description="Evolution floor")
    dt: float = Field(default=0.0, description="Time step, 0 selects the CFL default", ge=0)
    t_max: float = Field(default=1.0, gt=0)
    steps: Optional[int] = Field(default=None, description="Step cap", ge=1)
    formulation: Formulation = Field(default=Formulation.VORTICITY)
    ic: InitialCondition = Field(default_factory=lambda: InitialCondition(name="beltrami_shear"))
    seed: int = Field(default=0)
    output_dir: Optional[str] = Field(default=None)
    snapshot_every: int = Field(default=0, ge=0)
    strict_mode: Optional[bool] = Field(default=None)
    stop_on_floor: bool = Field(default=True)
    stop_on_torque_budget: bool = Field(default=True)
    stop_on_t1: bool = Field(default=True)

    @field_validator("ic", mode="before")
    @classmethod
    def coerce_ic(cls, value: Union[str, Dict[str, Any], InitialCondition]) -> Any:
        if isinstance(value, str):
            return {"name": value, "params": {}}
        return value

    def hypothesis_violations(self, strict: bool = False) -> List[str]:
        """Named hypotheses broken by this (resolved) config"""
        violations = []
        if not 0.0 < self.rho_s < 1.0:
            violations.append("rho_s in (0,1) required")
        if self.m_i is None or self.m_f is None or self.sigma0 is None:
            violations.append("m_i, m_f and sigma0 must be resolved")
            return violations
        if not self.m_f > 0.0:
            violations.append("m_f>0 required")
        if not self.m_f < self.m_i:
            violations.append("m_f<m_i required")
        if not self.sigma0 > 0.0:
            violations.append("sigma0>0 required")
        if not 2.0 * self.C0 * self.sigma0 < self.m_f:
            violations.append("2*C0*sigma0<m_f required")
        if not self.sigma0 < self.m_i / (2.0 * self.C0):
            violations.append("sigma0<m_i/(2*C0) required")
        if strict and not self.p > 2.5:
            violations.append("p>5/2 required in strict mode")
        if not all(math.isfinite(v) for v in (self.m_i, self.m_f, self.sigma0)):
            violations.append("finite m_i, m_f, sigma0 required")
        return violations

    def gevrey_params(self) -> GevreyParams:
        return GevreyParams(p=self.p, sigma=self.sigma0 or 0.0)

    def floor_params(self) -> VorticityFloorParams:
        return VorticityFloorParams(m_i=self.m_i, m_f=self.m_f, C0=self.C0, sigma0=self.sigma0)

    def densities(self) -> Densities:
        return Densities.from_rho_s(self.rho_s)

    def run_controls(self, dt: float) -> RunControls:
        return RunControls(
            dt=dt,
            t_max=self.t_max,
            formulation=self.formulation,
            oversample=self.oversample,
            stop_on_floor=self.stop_on_floor,
            stop_on_torque_budget=self.stop_on_torque_budget,
            stop_on_t1=self.stop_on_t1,
            max_steps=self.steps,
            snapshot_every=self.snapshot_every,
        )

    class Config:
        json_schema_extra = {
            "example": {
                "N": 4,
                "ic": {"name": "counterflow", "params": {"U": 1.0}},
                "t_max": 0.5,
            }
        }


# Verification reports

class LemmaReport(BaseModel):
    """Nonlinear estimate verification"""
    K: int
    p: float
    sigma: float
    N: int
    trials: int
    seed: int
    max_ratio: float
    mean_ratio: float
    quantiles: Dict[str, float]
    frozen_bound: Optional[float]
    passed: bool

    def to_report(self) -> Dict[str, Any]:
        data = self.model_dump(exclude={"passed"})
        data["pass"] = self.passed
        return {"lemma": data}


class AlgebraReport(BaseModel):
    """Algebra-constant verification"""
    p: float
    sigma: float
    N: int
    trials: int
    seed: int
    max_ratio: float
    frozen_bound: Optional[float]
    passed: bool

    def to_report(self) -> Dict[str, Any]:
        data = self.model_dump(exclude={"passed"})
        data["pass"] = self.passed
        return {"algebra": data}


class AppendixReport(BaseModel):
    """Reciprocal-magnitude bound verification"""
    trials: int
    seed: int
    N: int
    p: float
    sigma0: float
    C0: float
    epsilon: float
    m_f: float
    redraws: int
    min_measured_floor: float
    min_margin: Dict[str, float]
    max_norm: Dict[str, float]
    derivative_ratio: Dict[str, float]
    passed: bool

    def to_report(self) -> Dict[str, Any]:
        data = self.model_dump(exclude={"passed"})
        data["pass"] = self.passed
        return {"appendix": data}


class MeanVelocityBoundReport(BaseModel):
    """Growth check of the mean velocities against their a-priori bound"""
    holds: bool
    C_mean_s: float
    C_mean_n: float
    sup_vorticity_norm: float
    min_slack_s: float
    max_slack_s: float
    min_slack_n: float
    max_slack_n: float


__all__ = [
    "DIAGNOSTICS_COLUMNS",
    "Formulation",
    "StopReason",
    "GevreyParams",
    "VorticityFloorParams",
    "Densities",
    "RunControls",
    "LedgerConstants",
    "DiagnosticsRecord",
    "RunEvent",
    "RunSummary",
    "InitialCondition",
    "SimConfig",
    "LemmaReport",
    "AlgebraReport",
    "AppendixReport",
    "MeanVelocityBoundReport",
]
