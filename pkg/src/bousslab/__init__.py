"""Lagrangian marker laboratory for 1D singular Boussinesq-type transport models."""

from .model import (
    ConfigurationError,
    DomainError,
    InitialDataSpec,
    LagrangianState,
    ModelParams,
    X_WARMUP,
    Z_MODEL,
    build_initial_state,
    frame_transform,
    make_params,
    rho0_profile,
)
from .biotsavart import (
    PrefixTable,
    build_prefix_table,
    dx_velocity,
    stretch_rate,
    velocity_x,
    velocity_z,
)
from .solver import (
    SimulationResult,
    StepControl,
    advance_step,
    refine_markers,
    rhs_eval,
    run_simulation,
)
from .diagnostics import (
    BlowupReport,
    DiagnosticsFrame,
    RunChecks,
    check_gamma_bound,
    check_positivity_window,
    compute_frame,
    detect_blowup,
)
from .oracles import (
    FieldOracle,
    OracleCurve,
    gamma_closed_form,
    gamma_tstar,
    solve_f_picard,
    solve_gamma,
    solve_tau0,
    solve_warmup_g,
    verify_induction_ladder,
)

__version__ = "0.1.0"
