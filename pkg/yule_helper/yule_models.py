"""Validated configuration and report models shared by the CLI, the skills and the library."""
from __future__ import annotations

from datetime import datetime
from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from yule_helper.yule_config import (
    QUADRATURE_ABS_TOL,
    QUADRATURE_MAX_LEVEL,
    QUADRATURE_MIN_LEVEL,
    TOOL_VERSION,
    TRUNCATION_U,
)
from yule_helper.yule_errors import InvalidParameterError


class ProcessKind(str, Enum):
    BM = "bm"
    OU = "ou"
    BB = "bb"
    CBM = "cbm"


class QuadratureScheme(str, Enum):
    GAUSS_LEGENDRE_PANELS = "gauss_legendre_panels"
    TANH_SINH_2D = "tanh_sinh_2d"


class Route(str, Enum):
    JET_QUADRATURE = "jet_quadrature"
    EXPLICIT_M2 = "explicit_m2"
    MONTE_CARLO = "monte_carlo"


class ProcessSpec(BaseModel):
    """One of the four Gaussian process families together with its horizon."""

    model_config = ConfigDict(frozen=True)

    kind: ProcessKind
    r: float | None = None
    c: float | None = None
    T: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _check_family_parameters(self):
        if self.kind is ProcessKind.OU:
            if self.r is None or not self.r > 0:
                raise ValueError("ou requires a mean-reversion rate r > 0")
        elif self.r is not None:
            raise ValueError("r only applies to the ou process")

        if self.kind is ProcessKind.CBM:
            if self.c is None or not -1 < self.c < 1:
                raise ValueError("cbm requires a correlation c in (-1, 1)")
        elif self.c is not None:
            raise ValueError("c only applies to the cbm process")

        if self.kind is ProcessKind.BB and self.T != 1.0:
            raise ValueError("the Brownian bridge is pinned at T = 1")
        return self

    @property
    def symmetric(self) -> bool:
        """Odd moments of rho vanish."""
        return self.kind is not ProcessKind.CBM

    @property
    def exchangeable(self) -> bool:
        # cbm components share the same marginal law, so phi(s11, s12, s22) = phi(s22, s12, s11)
        return True

    @property
    def label(self) -> str:
        if self.kind is ProcessKind.OU:
            text = f"ou(r={self.r:g})"
        elif self.kind is ProcessKind.CBM:
            text = f"cbm(c={self.c:g})"
        else:
            text = self.kind.value
        if self.T != 1.0:
            text += f"[T={self.T:g}]"
        return text


class QuadratureConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    abs_tol: float = Field(default=QUADRATURE_ABS_TOL, gt=0)
    max_level: int = Field(default=QUADRATURE_MAX_LEVEL, ge=QUADRATURE_MIN_LEVEL)
    scheme: QuadratureScheme = QuadratureScheme.GAUSS_LEGENDRE_PANELS
    symmetry_fold: bool = True
    truncation: float = Field(default=TRUNCATION_U, gt=0)


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    spec: ProcessSpec
    n_paths: int = Field(ge=1)
    n_steps: int = Field(ge=2)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)


class RunManifest(BaseModel):
    command: str
    parameters: dict[str, Any]
    seed: int | None = None
    tool_version: str = TOOL_VERSION
    timestamp: datetime | None = None
    routes: list[str] = Field(default_factory=list)


class MomentRow(BaseModel):
    k: int
    value: float
    err_estimate: float
    route: Route


class MomentReport(BaseModel):
    manifest: RunManifest
    process: str
    rows: list[MomentRow]


class DensityReport(BaseModel):
    manifest: RunManifest
    process: str
    order: int
    coefficients: list[float]
    moments: list[float]
    min_value: float
    negative_fraction: float
    flatness_ratio: float


class SimulationRow(BaseModel):
    k: int
    estimate: float
    standard_error: float


class SimulationReport(BaseModel):
    manifest: RunManifest
    process: str
    n_paths: int
    n_accepted: int
    n_steps: int
    rows: list[SimulationRow]


class VerifyPoint(BaseModel):
    s11: float
    s12: float
    s22: float
    closed_form: float
    oracle: float
    deviation: float


class VerifyReport(BaseModel):
    manifest: RunManifest
    process: str
    tolerance: float
    max_deviation: float
    passed: bool
    worst_point: VerifyPoint
    points: list[VerifyPoint]


class CltRow(BaseModel):
    T: float
    n_steps: int
    var_sqrt_t_rho: float
    var_sqrt_t_rho_se: float
    var_cross: float
    var_cross_se: float
    mean_y11_over_t: float
    mean_y11_over_t_se: float
    mean_rho: float
    mean_rho_se: float
    ks_distance: float
    ks_pvalue: float
    limit_sqrt_t_rho: float
    limit_cross: float
    var_gap: float
    gap_slope: float | None = None


class CltReport(BaseModel):
    manifest: RunManifest
    r: float
    rows: list[CltRow]


class SweepReport(BaseModel):
    manifest: RunManifest
    process: str
    k: int
    rows: list[dict[str, float]]


REPORT_MODELS = {
    "moments": MomentReport,
    "density": DensityReport,
    "simulate": SimulationReport,
    "verify": VerifyReport,
    "clt": CltReport,
    "sweep": SweepReport,
    "manifest": RunManifest,
}


def build_process_spec(process: str, r: float | None = None, c: float | None = None, T: float = 1.0) -> ProcessSpec:
    """ProcessSpec from loose user input, with validation failures surfaced as usage errors."""
    try:
        return ProcessSpec(kind=process, r=r, c=c, T=T)
    except ValidationError as e:
        raise InvalidParameterError(_validation_message(e))


def build_model(model: type[BaseModel], **kwargs) -> BaseModel:
    try:
        return model(**kwargs)
    except ValidationError as e:
        raise InvalidParameterError(_validation_message(e))


def _validation_message(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        loc = ".".join(str(x) for x in item.get("loc", ()))
        msg = item.get("msg", "invalid value")
        parts.append(f"{loc}: {msg}" if loc else msg)
    return "; ".join(parts)


def parse_orders(raw) -> list[int]:
    """Orders from a list, a single value or a comma separated string such as '2,4,6'."""
    if raw is None:
        return []
    if isinstance(raw, str):
        items = [item for item in raw.replace(" ", "").split(",") if item]
    elif isinstance(raw, (list, tuple)):
        items = list(raw)
    else:
        items = [raw]
    try:
        return [int(item) for item in items]
    except (TypeError, ValueError):
        raise InvalidParameterError(f"moment orders must be integers, got {raw!r}")
