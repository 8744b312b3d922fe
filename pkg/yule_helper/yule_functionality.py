import json
import logging
from dataclasses import dataclass, field

import jinja2
import pandas as pd
from skill_framework import ExitFromSkillException, ExportData, ParameterDisplayDescription, SkillInput, SkillOutput, \
    SkillVisualization
from skill_framework.layouts import wire_layout

from yule_helper.density import density_moments, emit_density_table, fit_process_density, flatness_ratio, negativity
from yule_helper.montecarlo import estimate_moments, steps_for_horizon
from yule_helper.moments import MomentResult, moment_table
from yule_helper.yule_config import DENSITY_POINTS, ERROR_FORMAT, VALUE_FORMAT
from yule_helper.yule_errors import InvalidParameterError, YuleError
from yule_helper.yule_models import ProcessSpec, SimConfig, build_model, build_process_spec, parse_orders

logger = logging.getLogger(__name__)

ROUTE_CHOICES = ["quadrature", "monte_carlo"]


@dataclass
class YuleSkillState:
    spec: ProcessSpec | None = None
    title: str = "Yule's nonsense correlation"
    subtitle: str = ""
    table: pd.DataFrame | None = None
    exports: dict[str, pd.DataFrame] = field(default_factory=dict)
    display: dict[str, str] = field(default_factory=dict)


def _optional_float(value):
    if value is None or value == "":
        return None
    try:
        return float(value)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"expected a number, got {value!r}")


def spec_from_arguments(arguments) -> ProcessSpec:
    return build_process_spec(
        process=getattr(arguments, "process", None) or "bm",
        r=_optional_float(getattr(arguments, "r", None)),
        c=_optional_float(getattr(arguments, "c", None)),
        T=_optional_float(getattr(arguments, "T", None)) or 1.0,
    )


def _render_table(layout: str, headline: str, sub_headline: str, df: pd.DataFrame) -> str:
    variables = {
        "headline": headline,
        "sub_headline": sub_headline,
        "data_table_columns": [{"name": col} for col in df.columns],
        "data_table_data": df.astype(str).values.tolist(),
    }
    return wire_layout(json.loads(layout), variables)


def _format_moment_rows(results: list[MomentResult]) -> pd.DataFrame:
    return pd.DataFrame({
        "k": [str(r.k) for r in results],
        "value": [VALUE_FORMAT.format(r.value) for r in results],
        "err_estimate": [ERROR_FORMAT.format(r.err_estimate) for r in results],
        "route": [r.route.value for r in results],
    })


def _skill_output(state: YuleSkillState, layout: str, final_prompt: str) -> SkillOutput:
    rendered = _render_table(layout, state.title, state.subtitle, state.table)
    return SkillOutput(
        final_prompt=final_prompt,
        narrative=None,
        visualizations=[SkillVisualization(title=state.title, layout=rendered)],
        parameter_display_descriptions=[ParameterDisplayDescription(key=k, value=v) for k, v in state.display.items()],
        export_data=[ExportData(name=name, data=df) for name, df in state.exports.items()],
    )


def run_yule_moments(parameters: SkillInput) -> SkillOutput:
    """
    Moments E rho^k for one process, by the jet/quadrature route or by Monte Carlo.

    Parameter or numerical failures surface as ExitFromSkillException so Max can relay them.
    """
    logger.info("Starting Yule moments")
    logger.info("Parameters: " + str(parameters.arguments))
    args = parameters.arguments
    try:
        state = YuleSkillState(spec=spec_from_arguments(args))
        orders = parse_orders(getattr(args, "orders", None)) or [2]
        route = getattr(args, "route", None) or "quadrature"
        if route not in ROUTE_CHOICES:
            raise InvalidParameterError(f"route must be one of {ROUTE_CHOICES}, got {route!r}")

        state.display = {"Process": state.spec.label, "Orders": ", ".join(str(k) for k in orders), "Route": route}
        if route == "monte_carlo":
            cfg = build_model(
                SimConfig,
                spec=state.spec,
                n_paths=int(getattr(args, "paths", None) or 100_000),
                n_steps=int(getattr(args, "steps", None) or steps_for_horizon(state.spec.T)),
                seed=int(getattr(args, "seed", None) or 0),
            )
            results = estimate_moments(cfg, orders)
            state.display["Paths"] = str(cfg.n_paths)
            state.display["Seed"] = str(cfg.seed)
        else:
            results = moment_table(state.spec, orders)
    except YuleError as e:
        logger.info(f"Yule moments failed: {e.message}")
        raise ExitFromSkillException(
            message=e.message,
            prompt_message="Let the user know the moments could not be computed and repeat the reason given."
        )

    state.title = f"Moments of rho for {state.spec.label}"
    state.subtitle = f"Route: {route}"
    state.table = _format_moment_rows(results)
    state.exports["yule_moments"] = pd.DataFrame([
        {"k": r.k, "value": r.value, "err_estimate": r.err_estimate, "route": r.route.value} for r in results
    ])

    final_prompt = jinja2.Template(args.max_prompt).render(process=state.spec.label, route=route, facts=results)
    return _skill_output(state, args.table_viz_layout, final_prompt)


def run_yule_density(parameters: SkillInput) -> SkillOutput:
    """Moment-matched polynomial density of rho: coefficient table plus the sampled curve as export."""
    logger.info("Starting Yule density")
    logger.info("Parameters: " + str(parameters.arguments))
    args = parameters.arguments
    try:
        state = YuleSkillState(spec=spec_from_arguments(args))
        order = getattr(args, "order", None)
        order = 4 if order is None else int(order)
        points = int(getattr(args, "points", None) or DENSITY_POINTS)
        poly = fit_process_density(state.spec, order)
        moments = density_moments(poly)
        curve = emit_density_table(poly, points)
        low, fraction = negativity(poly, points)
    except YuleError as e:
        logger.info(f"Yule density failed: {e.message}")
        raise ExitFromSkillException(
            message=e.message,
            prompt_message="Let the user know the density could not be fitted and repeat the reason given."
        )

    state.title = f"Order-{order} density of rho for {state.spec.label}"
    state.subtitle = f"Flatness on (-0.5, 0.5): max/min = {flatness_ratio(poly):.4f}"
    state.display = {"Process": state.spec.label, "Order": str(order), "Points": str(points)}
    state.table = pd.DataFrame({
        "power": [str(i) for i in range(order + 1)],
        "coefficient": [VALUE_FORMAT.format(a) for a in poly.coeffs],
        "moment": [VALUE_FORMAT.format(m) for m in moments],
    })
    state.exports["yule_density_coefficients"] = pd.DataFrame({"power": range(order + 1), "coefficient": poly.coeffs})
    state.exports["yule_density_curve"] = curve

    final_prompt = jinja2.Template(args.max_prompt).render(
        order=order, process=state.spec.label, negative_fraction=fraction, min_value=low
    )
    return _skill_output(state, args.table_viz_layout, final_prompt)
