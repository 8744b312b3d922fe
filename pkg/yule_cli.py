"""
Command line for the nonsense-correlation toolkit.

Every command prints a CSV table (or a JSON report with --format json) to stdout or to --out.
A file written with --out gets a `<out>.manifest.json` sidecar recording the command, its full
parameter set and a timestamp; `replay` reruns such a manifest and reproduces the output bytes.

Exit codes: 0 ok, 2 invalid parameters, 3 numerical non-convergence, 4 verification failure.
"""
from __future__ import annotations

import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import pandas as pd
import typer
from pydantic import BaseModel
from rich.console import Console

from yule_helper.density import density_moments, emit_density_table, fit_process_density, flatness_ratio, negativity
from yule_helper.montecarlo import clt_experiment, moments_from_sample, sample_rho, steps_for_horizon
from yule_helper.moments import moment_table, parameter_sweep
from yule_helper.riccati import compare_with_closed_form
from yule_helper.yule_config import (
    CBM_C_GRID,
    CLT_T_GRID,
    DEFAULT_ORDERS,
    DENSITY_POINTS,
    ERROR_FORMAT,
    MC_STEPS,
    OU_R_GRID,
    QUADRATURE_ABS_TOL,
    QUADRATURE_MAX_LEVEL,
    VALUE_FORMAT,
    VERIFY_STEPS,
    VERIFY_TOLERANCE,
    VERIFY_TOLERANCE_BB,
)
from yule_helper.yule_errors import InvalidParameterError, VerificationError, YuleError
from yule_helper.yule_models import (
    REPORT_MODELS,
    CltReport,
    CltRow,
    DensityReport,
    MomentReport,
    MomentRow,
    ProcessKind,
    QuadratureConfig,
    QuadratureScheme,
    RunManifest,
    SimConfig,
    SimulationReport,
    SimulationRow,
    SweepReport,
    VerifyPoint,
    VerifyReport,
    build_model,
    build_process_spec,
    parse_orders,
)

logger = logging.getLogger(__name__)

app = typer.Typer(
    help="Moments, densities and asymptotics of Yule's nonsense correlation.",
    add_completion=False,
    no_args_is_help=True,
)

ERROR_COLUMNS = ("err_estimate", "standard_error", "deviation")


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


@dataclass
class CommandResult:
    frame: pd.DataFrame
    report: BaseModel
    failure: YuleError | None = None
    # extra files written next to --out, keyed by suffix
    attachments: dict[str, str] = field(default_factory=dict)


# ---------------------------------------------------------------------------------------------
# formatting


def _is_error_column(name: str) -> bool:
    return name in ERROR_COLUMNS or name.endswith("_se")


def format_frame(df: pd.DataFrame) -> pd.DataFrame:
    """Floats as fixed 6-decimal strings, error columns in scientific notation, missing as empty."""
    out = pd.DataFrame(index=df.index)
    for col in df.columns:
        series = df[col]
        if pd.api.types.is_float_dtype(series) or series.dtype == object and series.map(
                lambda x: x is None or isinstance(x, float)).all():
            fmt = ERROR_FORMAT if _is_error_column(col) else VALUE_FORMAT
            out[col] = [("" if x is None or pd.isna(x) else fmt.format(x)) for x in series]
        else:
            out[col] = series
    return out


def to_csv(df: pd.DataFrame) -> str:
    buffer = io.StringIO()
    format_frame(df).to_csv(buffer, index=False, lineterminator="\n")
    return buffer.getvalue()


def _clean(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def _records(df: pd.DataFrame) -> list[dict]:
    return [{k: _clean(v) for k, v in row.items()} for row in df.to_dict(orient="records")]


def _parse_floats(raw: str | None, name: str) -> list[float]:
    if raw is None:
        return []
    try:
        return [float(item) for item in raw.replace(" ", "").split(",") if item]
    except ValueError:
        raise InvalidParameterError(f"{name} must be a comma separated list of numbers, got {raw!r}")


# ---------------------------------------------------------------------------------------------
# command bodies; each takes the recorded parameter set, so a manifest is enough to rerun it


def _spec(params: dict):
    return build_process_spec(params["process"], params.get("r"), params.get("c"), params.get("T", 1.0))


def _quadrature(params: dict) -> QuadratureConfig:
    return build_model(
        QuadratureConfig,
        abs_tol=params.get("tol", QUADRATURE_ABS_TOL),
        max_level=params.get("max_level", QUADRATURE_MAX_LEVEL),
        scheme=params.get("scheme", QuadratureScheme.GAUSS_LEGENDRE_PANELS.value),
    )


def _run_moments(params: dict, manifest: RunManifest) -> CommandResult:
    spec = _spec(params)
    orders = params.get("orders") or list(DEFAULT_ORDERS[spec.kind.value])
    results = moment_table(spec, orders, _quadrature(params))
    manifest.routes = sorted({r.route.value for r in results})
    rows = [MomentRow(k=r.k, value=r.value, err_estimate=r.err_estimate, route=r.route) for r in results]
    frame = pd.DataFrame([row.model_dump(mode="json") for row in rows], columns=["k", "value", "err_estimate", "route"])
    return CommandResult(frame, MomentReport(manifest=manifest, process=spec.label, rows=rows))


def _run_density(params: dict, manifest: RunManifest) -> CommandResult:
    spec = _spec(params)
    order = params["order"]
    poly = fit_process_density(spec, order, _quadrature(params))
    manifest.routes = ["jet_quadrature"]
    low, fraction = negativity(poly, params.get("points", DENSITY_POINTS))
    report = DensityReport(
        manifest=manifest,
        process=spec.label,
        order=order,
        coefficients=[float(a) for a in poly.coeffs],
        moments=[float(m) for m in density_moments(poly)],
        min_value=low,
        negative_fraction=fraction,
        flatness_ratio=flatness_ratio(poly),
    )
    frame = emit_density_table(poly, params.get("points", DENSITY_POINTS))
    return CommandResult(frame, report, attachments={".coefficients.json": report.model_dump_json(indent=2)})


def _run_simulate(params: dict, manifest: RunManifest) -> CommandResult:
    spec = _spec(params)
    orders = params.get("orders") or list(DEFAULT_ORDERS[spec.kind.value])
    n_steps = params.get("steps") or steps_for_horizon(spec.T)
    cfg = build_model(SimConfig, spec=spec, n_paths=params["paths"], n_steps=n_steps, seed=params["seed"])
    sample = sample_rho(cfg)
    results = moments_from_sample(sample, orders)
    manifest.routes = ["monte_carlo"]
    rows = [SimulationRow(k=r.k, estimate=r.value, standard_error=r.err_estimate) for r in results]
    report = SimulationReport(
        manifest=manifest,
        process=spec.label,
        n_paths=cfg.n_paths,
        n_accepted=int(sample.accepted.sum()),
        n_steps=cfg.n_steps,
        rows=rows,
    )
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=["k", "estimate", "standard_error"])
    return CommandResult(frame, report)


def _run_verify(params: dict, manifest: RunManifest) -> CommandResult:
    spec = _spec(params)
    bridge = spec.kind is ProcessKind.BB
    tolerance = params.get("tolerance") or (VERIFY_TOLERANCE_BB if bridge else VERIFY_TOLERANCE)
    points = [VerifyPoint(**p) for p in compare_with_closed_form(spec, steps=params.get("steps", VERIFY_STEPS),
                                                                  richardson=bridge)]
    worst = max(points, key=lambda p: p.deviation)
    passed = worst.deviation < tolerance
    manifest.routes = ["jet_quadrature", "riccati"]
    report = VerifyReport(
        manifest=manifest,
        process=spec.label,
        tolerance=tolerance,
        max_deviation=worst.deviation,
        passed=passed,
        worst_point=worst,
        points=points,
    )
    frame = pd.DataFrame([p.model_dump() for p in points])
    failure = None if passed else VerificationError(worst.model_dump(), worst.deviation, tolerance)
    return CommandResult(frame, report, failure=failure)


def _run_clt(params: dict, manifest: RunManifest) -> CommandResult:
    frame = clt_experiment(
        params["r"],
        params.get("T_grid") or list(CLT_T_GRID),
        n_paths=params["paths"],
        seed=params["seed"],
        steps_per_unit=params.get("steps_per_unit", MC_STEPS),
    )
    manifest.routes = ["monte_carlo"]
    rows = [CltRow(**row) for row in _records(frame)]
    return CommandResult(frame, CltReport(manifest=manifest, r=params["r"], rows=rows))


def _run_sweep(params: dict, manifest: RunManifest) -> CommandResult:
    kind = ProcessKind(params["process"])
    if kind not in (ProcessKind.OU, ProcessKind.CBM):
        raise InvalidParameterError(f"sweeps run over ou (r) or cbm (c), not {kind.value}")
    values = params.get("values") or list(OU_R_GRID if kind is ProcessKind.OU else CBM_C_GRID)
    frame = parameter_sweep(kind, values, params.get("k", 2), _quadrature(params), T=params.get("T", 1.0))
    manifest.routes = ["jet_quadrature"]
    report = SweepReport(manifest=manifest, process=kind.value, k=params.get("k", 2), rows=_records(frame))
    return CommandResult(frame, report)


RUNNERS: dict[str, Callable[[dict, RunManifest], CommandResult]] = {
    "moments": _run_moments,
    "density": _run_density,
    "simulate": _run_simulate,
    "verify": _run_verify,
    "clt": _run_clt,
    "sweep": _run_sweep,
}


# ---------------------------------------------------------------------------------------------
# plumbing


def _fail(error: YuleError):
    Console(stderr=True).print(f"error: {error.message}", style="bold red", markup=False, highlight=False,
                               soft_wrap=True)
    raise typer.Exit(code=error.exit_code)


def _write(text: str, out: Path | None):
    if out is None:
        typer.echo(text, nl=False)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)


def execute(command: str, params: dict, out: Path | None = None):
    """Runs one command from its parameter set and writes the table or report."""
    fmt = OutputFormat(params.get("format", OutputFormat.CSV.value))
    manifest = RunManifest(command=command, parameters=params, seed=params.get("seed"))
    try:
        result = RUNNERS[command](params, manifest)
    except YuleError as e:
        _fail(e)

    if fmt is OutputFormat.JSON:
        _write(result.report.model_dump_json(indent=2) + "\n", out)
    else:
        _write(to_csv(result.frame), out)

    if out is not None:
        stamped = manifest.model_copy(update={"timestamp": datetime.now(timezone.utc)})
        _write(stamped.model_dump_json(indent=2) + "\n", Path(f"{out}.manifest.json"))
        for suffix, text in result.attachments.items():
            _write(text, Path(f"{out}{suffix}"))
        logger.info(f"{command} written to {out}")

    if result.failure is not None:
        _fail(result.failure)


def _process_params(process: ProcessKind, r: float | None, c: float | None, T: float) -> dict:
    params = {"process": process.value, "T": T}
    if r is not None:
        params["r"] = r
    if c is not None:
        params["c"] = c
    return params


ProcessOption = typer.Option(..., "--process", help="bm, ou, bb or cbm")
ROption = typer.Option(None, "--r", help="OU mean-reversion rate (ou only)")
COption = typer.Option(None, "--c", help="Brownian correlation in (-1, 1) (cbm only)")
TOption = typer.Option(1.0, "--T", help="Horizon; the bridge is pinned at 1")
TolOption = typer.Option(QUADRATURE_ABS_TOL, "--tol", help="Absolute tolerance between quadrature levels")
FormatOption = typer.Option(OutputFormat.CSV, "--format")
OutOption = typer.Option(None, "--out", help="Output file; a .manifest.json sidecar is written next to it")


@app.callback()
def main(log_level: str = typer.Option("WARNING", "--log-level", envvar="YULE_LOG_LEVEL",
                                       help="DEBUG, INFO, WARNING or ERROR; logs go to stderr")):
    level = logging.getLevelName(log_level.upper())
    if not isinstance(level, int):
        raise typer.BadParameter(f"unknown log level {log_level!r}", param_hint="--log-level")
    logging.basicConfig(level=level, stream=sys.stderr, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@app.command()
def moments(
        process: ProcessKind = ProcessOption,
        r: Optional[float] = ROption,
        c: Optional[float] = COption,
        T: float = TOption,
        orders: Optional[str] = typer.Option(None, "--orders", help="Comma separated orders in 1..16"),
        tol: float = TolOption,
        max_level: int = typer.Option(QUADRATURE_MAX_LEVEL, "--max-level"),
        scheme: QuadratureScheme = typer.Option(QuadratureScheme.GAUSS_LEGENDRE_PANELS, "--scheme"),
        format: OutputFormat = FormatOption,
        out: Optional[Path] = OutOption,
):
    """
    E rho^k by Taylor jets in s12 and 2-D quadrature:

    E rho^k = (-1)^k k! 4 / (2^k Gamma(k/2)^2) int int (uv)^(k-1) [s12^k] phi(u^2, s12, v^2) du dv
    """
    try:
        params = _process_params(process, r, c, T)
        params.update(orders=parse_orders(orders), tol=tol, max_level=max_level, scheme=scheme.value,
                      format=format.value)
    except YuleError as e:
        _fail(e)
    execute("moments", params, out)


@app.command()
def density(
        process: ProcessKind = ProcessOption,
        r: Optional[float] = ROption,
        c: Optional[float] = COption,
        T: float = TOption,
        order: int = typer.Option(..., "--order", help="Polynomial order; even for symmetric processes"),
        points: int = typer.Option(DENSITY_POINTS, "--points"),
        tol: float = TolOption,
        format: OutputFormat = FormatOption,
        out: Optional[Path] = OutOption,
):
    """
    Degree-k polynomial p on [-1, 1] with int x^j p(x) dx = E rho^j for j = 0..k.

    CSV output is the sampled curve; the coefficients go to <out>.coefficients.json (or use --format json).
    """
    params = _process_params(process, r, c, T)
    params.update(order=order, points=points, tol=tol, format=format.value)
    execute("density", params, out)


@app.command()
def simulate(
        process: ProcessKind = ProcessOption,
        r: Optional[float] = ROption,
        c: Optional[float] = COption,
        T: float = TOption,
        paths: int = typer.Option(100_000, "--paths"),
        steps: Optional[int] = typer.Option(None, "--steps", help="Time steps per path; 2048 per unit of T when omitted"),
        seed: int = typer.Option(0, "--seed"),
        orders: Optional[str] = typer.Option(None, "--orders"),
        format: OutputFormat = FormatOption,
        out: Optional[Path] = OutOption,
):
    """
    Monte Carlo E rho^k from exact-transition paths, with delete-a-block jackknife standard errors.

    rho = Y12 / sqrt(Y11 Y22), Y_ij = int (X_i - mean X_i)(X_j - mean X_j) dt by the trapezoid rule.
    """
    try:
        params = _process_params(process, r, c, T)
        params.update(paths=paths, steps=steps, seed=seed, orders=parse_orders(orders), format=format.value)
    except YuleError as e:
        _fail(e)
    execute("simulate", params, out)


@app.command()
def verify(
        process: ProcessKind = ProcessOption,
        r: Optional[float] = ROption,
        c: Optional[float] = COption,
        T: float = TOption,
        steps: int = typer.Option(VERIFY_STEPS, "--steps", help="RK4 steps for the Riccati oracle"),
        tolerance: Optional[float] = typer.Option(None, "--tolerance"),
        format: OutputFormat = FormatOption,
        out: Optional[Path] = OutOption,
):
    """
    Closed-form phi(S) against the backward Riccati oracle on a grid of S.

    The oracle integrates V' = V Sigma V - (VB + B'V) - Q, b' = (V Sigma - B')b - V delta - z,
    gamma' = (b' Sigma b - tr V Sigma - delta' b)/2 from zero terminal values, then mixes the
    linear coefficient over N(0, S/T). Exits 4 when the largest deviation exceeds the tolerance.
    """
    params = _process_params(process, r, c, T)
    params.update(steps=steps, format=format.value)
    if tolerance is not None:
        params["tolerance"] = tolerance
    execute("verify", params, out)


@app.command()
def clt(
        r: float = typer.Option(..., "--r"),
        T: Optional[str] = typer.Option(None, "--T", help="Comma separated horizons, increasing"),
        paths: int = typer.Option(100_000, "--paths"),
        seed: int = typer.Option(0, "--seed"),
        steps_per_unit: int = typer.Option(MC_STEPS, "--steps-per-unit"),
        format: OutputFormat = FormatOption,
        out: Optional[Path] = OutOption,
):
    """
    Large-T behaviour of rho for two independent OU processes.

    Reports Var(sqrt(T) rho) against its limit 1/r, Var(T^(-1/2) int X1 X2) against 1/(4 r^3),
    mean Y11/T, and the KS distance of sqrt(rT) rho to N(0, 1).
    """
    try:
        if not r > 0:
            raise InvalidParameterError(f"--r must be positive, got {r}")
        params = {"r": r, "T_grid": _parse_floats(T, "--T"), "paths": paths, "seed": seed,
                  "steps_per_unit": steps_per_unit, "format": format.value}
    except YuleError as e:
        _fail(e)
    execute("clt", params, out)


@app.command()
def sweep(
        process: ProcessKind = ProcessOption,
        values: Optional[str] = typer.Option(None, "--values", help="Comma separated r (ou) or c (cbm) values"),
        k: int = typer.Option(2, "--k"),
        T: float = TOption,
        tol: float = TolOption,
        format: OutputFormat = FormatOption,
        out: Optional[Path] = OutOption,
):
    """E rho^k over an r-grid for ou, or mean, second moment and variance over a c-grid for cbm."""
    try:
        params = {"process": process.value, "values": _parse_floats(values, "--values"), "k": k, "T": T,
                  "tol": tol, "format": format.value}
    except YuleError as e:
        _fail(e)
    execute("sweep", params, out)


@app.command()
def replay(
        manifest_path: Path = typer.Argument(..., exists=True, dir_okay=False),
        out: Optional[Path] = OutOption,
):
    """Reruns the command recorded in a manifest; outputs match the original byte for byte."""
    try:
        manifest = build_model(RunManifest, **json.loads(manifest_path.read_text(encoding="utf-8")))
        if manifest.command not in RUNNERS:
            raise InvalidParameterError(f"cannot replay command {manifest.command!r}")
    except json.JSONDecodeError as e:
        _fail(InvalidParameterError(f"{manifest_path} is not valid JSON: {e}"))
    except YuleError as e:
        _fail(e)
    execute(manifest.command, dict(manifest.parameters), out)


@app.command()
def schema(out_dir: Path = typer.Argument(Path("schemas"), file_okay=False)):
    """Writes the JSON schema of every report model as <name>.schema.json."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, model in REPORT_MODELS.items():
        _write(json.dumps(model.model_json_schema(), indent=2) + "\n", out_dir / f"{name}.schema.json")
    typer.echo(f"{len(REPORT_MODELS)} schemas written to {out_dir}")


if __name__ == "__main__":
    app()
