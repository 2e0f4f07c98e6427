from pathlib import Path

import logfire
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from gfkit.artifacts.plots import plot_distance, plot_perron
from gfkit.artifacts.writers import write_frame, write_model, write_snapshots
from gfkit.errors import NonPositiveData, UnsupportedKernel
from gfkit.initial_conditions import InitialConditionDispatcher
from gfkit.models.coefficients import Mode, threshold_alpha
from gfkit.models.grid import DiscreteField
from gfkit.models.scenario import Scenario
from gfkit.models.trace import SimulationTrace, TimeSeries
from gfkit.models.validation import validate_hypotheses
from gfkit.numerics.diagnostics import (
    OscillationReport,
    OsgoodRecord,
    RateFit,
    aeg_distance,
    fit_rate,
    growth_bound_ratio,
    osgood_demo,
    trace_oscillation,
)
from gfkit.numerics.eigensolver import solve_perron
from gfkit.numerics.evolution import evolve
from gfkit.numerics.particles import FieldSampler, simulate


class RunSummary(BaseModel):
    model_config = ConfigDict(populate_by_name=True, ser_json_inf_nan="constants")

    lam: float = Field(alias="lambda")
    direct_residual: float
    dual_residual: float
    sandwich_C: float
    threshold_alpha: float
    conservation_drift: float
    sigma: float
    goodness: float
    periodic: bool

    scenario: str
    mode: Mode
    validation_passed: bool
    cells: int
    x_max: float
    lambda_dt: float
    iterations: int
    tail_loss: float
    G_tail_mass: float = Field(description="∫G held by the last cell, the neglected tail at x_max.")
    lambda_positive: bool = Field(description="λ > 0; standard mode expects growth and only warns otherwise.")
    phi_source: str = Field(description="step_calibrated (perron_dt.csv) or generator (perron.csv).")


class DiagnosticsReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    alpha: float
    fit: RateFit | None
    oscillation: OscillationReport
    conservation_drift: float
    growth_bound_ratio: float
    osgood: list[OsgoodRecord] = Field(default_factory=list)


def _fit(d: TimeSeries, window: tuple[float, float] | None) -> RateFit | None:
    try:
        return fit_rate(d, window)
    except NonPositiveData as e:
        logfire.warning(f"No decay rate fitted: {e}")
        return None


def _oracle_frame(scenario: Scenario, f_in: DiscreteField, trace: SimulationTrace) -> pd.DataFrame | None:
    """Oracle moments next to the unrescaled PDE moments at the same times."""

    spec = scenario.oracle
    times = sorted(t for t in spec.times if t <= spec.t_end)
    try:
        series = simulate(
            scenario.coefficients,
            spec.n0,
            FieldSampler(f_in),
            spec.t_end,
            scenario.seed,
            times=times or None,
            replicas=spec.replicas,
            phi=trace.triple.phi,
        )
    except UnsupportedKernel as e:
        logfire.warning(f"Particle oracle skipped: {e}")
        return None

    frame = series.to_frame()
    growth = np.exp(trace.lam * series.t) if trace.rescaled else np.ones(series.t.size)
    frame["pde_number"] = np.interp(series.t, trace.times, trace.number) * growth
    frame["pde_mass"] = np.interp(series.t, trace.times, trace.mass) * growth
    frame["pde_bracket"] = np.interp(series.t, trace.times, trace.bracket_phi) * growth
    frame["bracket_mean_rescaled"] = frame["bracket_mean"] * np.exp(-trace.lam * series.t)

    return frame


def run_scenario(scenario: Scenario, out: Path, oracle: bool = True) -> RunSummary:
    """validate → Perron triple → evolution → diagnostics → oracle, writing every artifact under `out`."""

    out.mkdir(parents=True, exist_ok=True)
    coeffs = scenario.coefficients
    diagnostics = scenario.diagnostics
    alpha = diagnostics.alpha

    with logfire.span(f"Scenario {scenario.name}"):
        with logfire.span("Validation"):
            grid = scenario.build_grid()
            report = validate_hypotheses(coeffs, grid.centers)
            write_model(report, out / "validation.json")

        with logfire.span("Perron triple"):
            triple = solve_perron(coeffs, grid, scenario.perron.tol, scenario.perron.max_iter)
            write_frame(triple.to_frame(), out / "perron.csv")
            plot_perron(triple, out / "perron.svg")

        with logfire.span("Evolution"):
            f_in = InitialConditionDispatcher().build(scenario.initial, grid, triple.phi)
            trace = evolve(coeffs, grid, triple, f_in, scenario.evolution)
            write_frame(trace.triple.to_frame(), out / "perron_dt.csv")
            write_frame(trace.to_frame(), out / "trace.csv")
            write_snapshots(trace, out / "snapshots")

        with logfire.span("Diagnostics"):
            fit = None
            if trace.rescaled:
                d = aeg_distance(trace, trace.triple, f_in, alpha)
                trace = trace.with_distance(d)
                write_frame(d.to_frame(), out / "distance.csv")
                fit = _fit(d, diagnostics.fit_window)
                plot_distance(d, out / "distance.svg", fit)

            oscillation = (
                trace_oscillation(trace, alpha)
                if diagnostics.oscillation
                else OscillationReport(periodic=False, reason="disabled")
            )
            records = []
            if scenario.osgood.etas and coeffs.mode == Mode.OSGOOD:
                records = osgood_demo(coeffs, grid, triple, scenario.osgood.etas, scenario.osgood.t, scenario.evolution.dt)

            drift = trace.conservation_drift()
            write_model(
                DiagnosticsReport(
                    alpha=alpha,
                    fit=fit,
                    oscillation=oscillation,
                    conservation_drift=drift,
                    growth_bound_ratio=growth_bound_ratio(trace, alpha),
                    osgood=records,
                ),
                out / "diagnostics.json",
            )

        if oracle and scenario.oracle.enabled:
            with logfire.span("Particle oracle"):
                frame = _oracle_frame(scenario, f_in, trace)
                if frame is not None:
                    write_frame(frame, out / "oracle.csv")

        summary = RunSummary(
            lam=triple.lam,
            direct_residual=triple.direct_residual,
            dual_residual=triple.dual_residual,
            sandwich_C=triple.sandwich_constant,
            threshold_alpha=threshold_alpha(coeffs),
            conservation_drift=drift,
            sigma=fit.sigma if fit else float("nan"),
            goodness=fit.goodness if fit else float("nan"),
            periodic=oscillation.periodic,
            scenario=scenario.name,
            mode=coeffs.mode,
            validation_passed=report.passed,
            cells=grid.n,
            x_max=grid.x_max,
            lambda_dt=trace.lam,
            iterations=triple.iterations,
            tail_loss=float(trace.tail_loss[-1]),
            G_tail_mass=triple.tail_mass,
            lambda_positive=triple.lam > 0,
            phi_source="step_calibrated" if scenario.evolution.consistent_dual else "generator",
        )
        (out / "summary.json").write_text(summary.model_dump_json(indent=2, by_alias=True) + "\n", encoding="utf-8")
        logfire.info(f"Scenario {scenario.name} done: λ={summary.lam:.10g}, σ={summary.sigma:.4g}", out=str(out))

    return summary
