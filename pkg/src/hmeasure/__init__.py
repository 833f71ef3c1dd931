"""Stationary harmonic measure on the upper half-plane lattice.

The package computes absorption measures of obstacle sets sitting on an
absorbing floor, by two independent routes (an exact sourced linear
solve and reversed-chain Monte Carlo), generates the standard obstacle
families, verifies the two main growth/decay statements at desk scale,
and simulates the square-root birth process.
"""

from .lattice import (
    DirectedEdge,
    RngStream,
    Site,
    SiteSet,
    UnboundedColumnError,
    format_set_text,
    parse_set_text,
)
from .walk import (
    Estimate,
    StepCapExceeded,
    mc_edge_measure,
    mc_escape_probability,
    mc_hat_measure,
    mc_point_measure,
    mc_visits_to_line,
    run_until_absorbed,
    sky_jump_table,
)
from .solver import (
    ConvergenceTable,
    HittingField,
    MeasureReport,
    NotEnclosedError,
    ScalarField,
    TruncatedDomain,
    converge_measure,
    default_halfwidth,
    exact_edge_measure,
    exact_hat_measure,
    exact_point_measure,
    green_field,
    hitting_probability,
    measure_report,
    solve_hitting,
    visits_line_exact,
)
from .setgen import (
    GrowthClass,
    classify_growth,
    load_set,
    make_counterexample,
    make_power_envelope,
    make_wedge,
    save_set,
)
from .theorems import (
    ScheduleParams,
    VerificationReport,
    calculus_check,
    rectangle_escape_table,
    schedule_params,
    verify_thm1,
    verify_thm2,
    visits_identity_check,
)
from .growth import (
    ClockSet,
    GrowthBudgetError,
    GrowthState,
    HarmonicStep,
    HeightBoundReport,
    ProbeReport,
    harmonic_growth_step,
    height_bound_check,
    positivity_probe,
    simulate_sqrt_process,
)

__version__ = "1.0.0"

__all__ = [
    "__version__",
    # lattice
    "Site", "DirectedEdge", "SiteSet", "RngStream", "UnboundedColumnError",
    "format_set_text", "parse_set_text",
    # walk engine
    "Estimate", "StepCapExceeded", "run_until_absorbed", "sky_jump_table",
    "mc_point_measure", "mc_edge_measure", "mc_hat_measure",
    "mc_visits_to_line", "mc_escape_probability",
    # exact solver
    "TruncatedDomain", "ScalarField", "MeasureReport", "HittingField",
    "ConvergenceTable", "NotEnclosedError", "green_field",
    "exact_point_measure", "exact_edge_measure", "exact_hat_measure",
    "measure_report", "solve_hitting", "hitting_probability",
    "visits_line_exact", "converge_measure", "default_halfwidth",
    # set generators
    "GrowthClass", "make_counterexample", "make_wedge",
    "make_power_envelope", "classify_growth", "load_set", "save_set",
    # theorem harness
    "ScheduleParams", "VerificationReport", "schedule_params",
    "calculus_check", "rectangle_escape_table", "verify_thm1",
    "verify_thm2", "visits_identity_check",
    # growth
    "GrowthState", "ClockSet", "GrowthBudgetError", "HarmonicStep",
    "ProbeReport", "HeightBoundReport", "simulate_sqrt_process",
    "harmonic_growth_step", "positivity_probe", "height_bound_check",
]
