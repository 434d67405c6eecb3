"""Adaptive Lagrangian time stepping with marker refinement.

The stepper is classical four-stage Runge-Kutta with step-doubling error
control.  The accepted solution is the two-half-step one *without* local
extrapolation, so the scheme is plain fourth order and the Richardson ratio
under dt halving is ~16; the full step only serves the error estimate.
Runs stop at the first blow-up proxy (vorticity cap, step underflow, marker
crossing, amplitude overflow) rather than integrating past a suspected
singularity; the proxies are reported as termination causes, never hidden.

A simulation is sequential and deterministic.  Independent simulations share
no mutable state and may run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import diagnostics
from .biotsavart import (
    PrefixTable,
    TableConsistencyError,
    build_prefix_table,
    dx_velocity,
    stretch_rate,
    velocity_x,
)
from .model import (
    X_WARMUP,
    Z_MODEL,
    ConfigurationError,
    InitialDataSpec,
    LagrangianState,
    ModelParams,
    build_initial_state,
    rho0_profile,
    warmup_support,
)

CAUSE_HORIZON = "horizon"
CAUSE_OMEGA_CAP = "omega_cap"
CAUSE_UNDERFLOW = "step_underflow"
CAUSE_CROSSING = "crossing"
CAUSE_OVERFLOW = "overflow"

PHI_EXP_MAX = 700.0     # exp(phi) overflows not far beyond this
X_POSITION_MIN = 1e-300

# Error-norm floors per state component (phi, omega, D, W): the error ratio is
# |err| / (floor + |y|), so phi is controlled essentially relatively (it spans
# many decades in the x frame) while near-zero omega noise is ignored.
_ERR_FLOORS = np.array([1e-14, 1e-6, 1e-9, 1e-9])[:, None]


class SolverError(RuntimeError):
    pass


class TrajectoryCrossingError(SolverError):
    pass


class StepUnderflowError(SolverError):
    pass


class AmplitudeOverflowError(SolverError):
    pass


class StepBudgetError(SolverError):
    pass


@dataclass
class StepControl:
    """Step-size, refinement, and termination thresholds."""

    dt_init: float = 1e-6
    dt_min: float = 1e-14
    dt_max: float | None = None  # optional ceiling, e.g. to force dense frames
    dt_safety: float = 0.8
    rk_tol: float = 1e-9
    omega_cap: float = 1e8
    h_max: float | None = None   # default: 4x mean marker gap of the initial layout
    refine_tol: float = 0.05
    t_end: float = 1e-2
    frame_stride: int = 16
    max_markers: int = 262144
    max_steps: int = 2_000_000

    def validate(self) -> None:
        if not 0.0 < self.dt_min < self.dt_init:
            raise ConfigurationError(
                f"dt_min < dt_init required with both positive, got {self.dt_min}, {self.dt_init}"
            )
        if not 0.0 < self.dt_safety < 1.0:
            raise ConfigurationError(f"dt_safety must lie in (0, 1), got {self.dt_safety}")
        for name in ("rk_tol", "omega_cap", "refine_tol", "t_end"):
            if getattr(self, name) <= 0.0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.h_max is not None and self.h_max <= 0.0:
            raise ConfigurationError(f"h_max must be positive, got {self.h_max}")
        if self.dt_max is not None and self.dt_max <= self.dt_min:
            raise ConfigurationError(f"dt_max must exceed dt_min, got {self.dt_max}")
        if self.frame_stride < 1:
            raise ConfigurationError(f"frame_stride >= 1 required, got {self.frame_stride}")

    def resolved_h_max(self, spec: InitialDataSpec) -> float:
        if self.h_max is not None:
            return self.h_max
        if spec.frame == Z_MODEL:
            span = (spec.L4 + spec.margin) - (1.0 - spec.margin)
        else:
            s_lo, s_hi = warmup_support(spec)
            p_lo, p_hi = spec.warmup_plateau
            span = (s_hi + 0.5 * (s_hi - p_hi)) - (s_lo - 0.5 * (p_lo - s_lo))
        return span / spec.n_markers * 4.0


def _rhs_z_fused(phi: np.ndarray, omega: np.ndarray, rho: np.ndarray, D: np.ndarray, params: ModelParams) -> np.ndarray:
    """z-frame derivatives with batched table queries (hot path).

    Equivalent to velocity_z / stretch_rate on a fresh prefix table; the two
    window endpoints are queried through one searchsorted and one interp call.
    """
    if phi[-1] > PHI_EXP_MAX:
        raise AmplitudeOverflowError(
            f"amplitude overflow (blow-up proxy): max position {phi[-1]:.3g} exceeds exp range"
        )
    gaps = np.diff(phi)
    if not np.all(gaps > 0.0):
        raise TableConsistencyError("marker positions must be strictly increasing")
    n = phi.size
    cum = np.empty(n)
    cum[0] = 0.0
    np.cumsum(0.5 * (omega[1:] + omega[:-1]) * gaps, out=cum[1:])
    slope = np.diff(omega) / gaps

    p = np.maximum(phi - params.gamma1, 0.0)
    q = np.maximum(phi + params.gamma2, 0.0)
    queries = np.concatenate((p, q))
    xq = np.clip(queries, phi[0], phi[-1])
    idx = np.clip(np.searchsorted(phi, xq, side="right") - 1, 0, n - 2)
    dx = xq - phi[idx]
    vals = cum[idx] + omega[idx] * dx + 0.5 * slope[idx] * dx * dx
    cp, cq = vals[:n], vals[n:]
    c0 = 0.0
    if phi[0] < 0.0:
        c0 = float(PrefixTable.from_samples(phi, omega).cumulative(0.0))
    u = 2.0 * cp - cq - c0

    om_interp = np.interp(queries, phi, omega, left=0.0, right=0.0)
    t1 = np.where(p > 0.0, om_interp[:n], 0.0)
    t2 = np.where(q > 0.0, om_interp[n:], 0.0)
    growth = 2.0 * t1 - t2

    forcing = np.exp(phi)
    return np.stack((u, rho * forcing, D * growth, forcing))


def _rhs_arrays(frame: str, rho: np.ndarray, params: ModelParams, Y: np.ndarray) -> np.ndarray:
    """Stacked derivatives (dphi, domega, dD, dW) for stacked state Y."""
    phi, omega, D = Y[0], Y[1], Y[2]
    if frame == Z_MODEL:
        return _rhs_z_fused(phi, omega, rho, D, params)
    if phi[0] < X_POSITION_MIN:
        raise AmplitudeOverflowError(
            "amplitude overflow (blow-up proxy): marker position underflowed toward the origin"
        )
    if phi[-1] >= 1.0 - 1e-12:
        raise AmplitudeOverflowError(
            "amplitude overflow (blow-up proxy): marker reached the x = 1 cutoff"
        )
    table = PrefixTable.from_samples(phi, omega)
    u = velocity_x(phi, table, params)
    growth = dx_velocity(phi, table, params)
    forcing = 1.0 / phi
    return np.stack((u, rho * forcing, D * growth, forcing))


def rhs_eval(state: LagrangianState, params: ModelParams):
    """Per-marker time derivatives (dphi, domega, dD, dW) of the current state."""
    out = _rhs_arrays(state.frame, state.rho, params, _pack(state))
    return out[0], out[1], out[2], out[3]


def _pack(state: LagrangianState) -> np.ndarray:
    return np.stack((state.phi, state.omega, state.D, state.W))


def _unpack(state: LagrangianState, Y: np.ndarray, t: float) -> LagrangianState:
    return LagrangianState(t, state.frame, state.z, Y[0], state.rho, Y[1], Y[2], Y[3])


def _rk4(Y, dt, f, k1=None):
    if k1 is None:
        k1 = f(Y)
    k2 = f(Y + (0.5 * dt) * k1)
    k3 = f(Y + (0.5 * dt) * k2)
    k4 = f(Y + dt * k3)
    return Y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _error_ratio(Y_fine: np.ndarray, Y_full: np.ndarray) -> float:
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        e = np.abs(Y_fine - Y_full) / (_ERR_FLOORS + np.abs(Y_fine))
        m = float(np.max(e))
    return m if np.isfinite(m) else np.inf


def advance_step(state: LagrangianState, params: ModelParams, ctrl: StepControl, dt_try: float | None = None):
    """One accepted RK4 step with step-doubling control.

    Returns ``(new_state, dt_used, dt_next)``.  The trial step size is capped
    by ``dt_safety * min(error budget, 1/max|stretch_rate|, collision guard)``
    and the accepted solution must keep the markers strictly ordered and the
    deformation positive.  Falling below ``dt_min`` raises
    :class:`TrajectoryCrossingError` when ordering was the blocker, otherwise
    :class:`StepUnderflowError`.
    """
    Y0 = _pack(state)
    f = lambda Y: _rhs_arrays(state.frame, state.rho, params, Y)

    rhs0 = f(Y0)  # state-level overflow propagates as a blow-up proxy
    cap = np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = np.abs(rhs0[2] / np.where(Y0[2] > 0, Y0[2], 1.0))
    max_rate = float(np.max(rate)) if rate.size else 0.0
    if max_rate > 0.0:
        cap = min(cap, 1.0 / max_rate)
    gaps = np.diff(Y0[0])
    closing = np.diff(rhs0[0])
    mask = closing < 0.0
    if np.any(mask):
        cap = min(cap, 0.5 * float(np.min(gaps[mask] / -closing[mask])))

    dt = dt_try if dt_try is not None else ctrl.dt_init
    dt = min(dt, ctrl.dt_safety * cap)
    if ctrl.dt_max is not None:
        dt = min(dt, ctrl.dt_max)
    dt = max(dt, ctrl.dt_min)

    last_block = "error"
    while True:
        err = np.inf
        Yn = None
        try:
            full = _rk4(Y0, dt, f, k1=rhs0)
            h1 = _rk4(Y0, 0.5 * dt, f, k1=rhs0)
            h2 = _rk4(h1, 0.5 * dt, f)
            err = _error_ratio(h2, full)
            Yn = h2
        except TableConsistencyError:
            last_block = "crossing"
        except (AmplitudeOverflowError, FloatingPointError, OverflowError):
            last_block = "overflow"

        if Yn is not None:
            ordered = bool(np.all(np.diff(Yn[0]) > 0.0))
            positive_D = bool(np.all(Yn[2] > 0.0))
            if err <= ctrl.rk_tol and ordered and positive_D:
                grow = ctrl.dt_safety * (ctrl.rk_tol / max(err, 1e-300)) ** 0.2
                dt_next = dt * min(max(grow, 0.2), 5.0)
                return _unpack(state, Yn, state.t + dt), dt, dt_next
            # crossing takes precedence in the dt_min diagnosis: an inaccurate
            # step that also swaps markers points at resolution, not stiffness
            last_block = "crossing" if not ordered else "error"

        if err is np.inf or not np.isfinite(err):
            shrink = 0.25
        else:
            shrink = min(max(ctrl.dt_safety * (ctrl.rk_tol / err) ** 0.2, 0.1), 0.9)
        new_dt = dt * shrink
        if new_dt < ctrl.dt_min:
            if last_block == "crossing":
                raise TrajectoryCrossingError(
                    "trajectory crossing -- resolution insufficient at the minimum step size"
                )
            if last_block == "overflow":
                raise AmplitudeOverflowError(
                    "amplitude overflow (blow-up proxy) persists at the minimum step size"
                )
            raise StepUnderflowError(
                f"step underflow near suspected singularity: dt {new_dt:.3g} < dt_min {ctrl.dt_min:.3g}"
            )
        dt = new_dt


def refine_markers(state: LagrangianState, ctrl: StepControl, spec: InitialDataSpec) -> LagrangianState:
    """Insert midpoint-label markers where the mesh is too coarse.

    An interval qualifies when its position gap exceeds ``h_max`` or its
    vorticity jump exceeds ``refine_tol * sup omega``.  The new marker takes
    the exact initial density at its label, monotone-cubic interpolants for
    position, deformation, and accumulator, and ``omega = rho * W`` (exact
    along trajectories for the zero-initial-vorticity data built here).
    Returns the input state unchanged when nothing qualifies.
    """
    return _refine(state, ctrl, spec)[0]


def _refine(state: LagrangianState, ctrl: StepControl, spec: InitialDataSpec):
    gaps = np.diff(state.phi)
    h_max = ctrl.resolved_h_max(spec)
    need = gaps > h_max
    sup = float(np.max(state.omega)) if state.omega.size else 0.0
    if sup > 0.0:
        need |= np.abs(np.diff(state.omega)) > ctrl.refine_tol * sup
    if not np.any(need):
        return state, False
    idx = np.nonzero(need)[0]
    if state.n + idx.size > ctrl.max_markers:
        return state, True

    z_new = 0.5 * (state.z[idx] + state.z[idx + 1])
    phi_new = PchipInterpolator(state.z, state.phi)(z_new)
    D_new = PchipInterpolator(state.z, state.D)(z_new)
    W_new = np.maximum(PchipInterpolator(state.z, state.W)(z_new), 0.0)
    rho_new = rho0_profile(z_new, spec)
    omega_new = rho_new * W_new

    at = idx + 1
    out = LagrangianState(
        state.t,
        state.frame,
        np.insert(state.z, at, z_new),
        np.insert(state.phi, at, phi_new),
        np.insert(state.rho, at, rho_new),
        np.insert(state.omega, at, omega_new),
        np.insert(state.D, at, D_new),
        np.insert(state.W, at, W_new),
    )
    if not np.all(np.diff(out.phi) > 0.0):
        # interpolated positions collided with a neighbour; better to keep the
        # coarse mesh than to corrupt ordering
        return state, False
    return out, False


@dataclass
class SimulationResult:
    """Frames, probe trajectories, and the termination cause of one run."""

    frames: list
    final_state: LagrangianState
    cause: str
    steps: int
    probe_labels: np.ndarray
    probe_t: np.ndarray
    probes: np.ndarray    # (n_frames, n_probes): positions at frame times
    probe_D: np.ndarray   # deformation at the probe labels
    probe_K: np.ndarray   # local deformation growth rate at the probe positions
    checks: object | None = None

    @property
    def t_stop(self) -> float:
        return float(self.final_state.t)


def _snap_labels(state: LagrangianState, labels) -> np.ndarray:
    """Resolve requested probe labels to the nearest existing marker labels."""
    labels = np.atleast_1d(np.asarray(labels, dtype=float))
    idx = np.clip(np.searchsorted(state.z, labels), 1, state.n - 1)
    left = state.z[idx - 1]
    right = state.z[idx]
    return np.where(np.abs(labels - left) <= np.abs(right - labels), left, right)


def run_simulation(
    params: ModelParams,
    spec: InitialDataSpec,
    ctrl: StepControl,
    probe_labels=(),
    checks=None,
) -> SimulationResult:
    """Advance the marker system until horizon, blow-up proxy, or failure.

    Emits a diagnostics frame every ``ctrl.frame_stride`` accepted steps (plus
    the initial and final states) and records probe trajectories at frame
    times.  Step failures become termination causes; they are never swallowed
    as success.
    """
    ctrl.validate()
    state = build_initial_state(spec, params)
    labels = _snap_labels(state, probe_labels) if len(probe_labels) else np.empty(0)
    if checks is not None:
        checks.bind(state)

    frames: list = []
    probe_rows: list = []
    probe_D_rows: list = []
    probe_K_rows: list = []
    probe_ts: list = []
    quality_extra = 0

    def emit(st: LagrangianState, dt: float) -> None:
        prev = frames[-1] if frames else None
        frame = diagnostics.compute_frame(st, params, spec, prev=prev, dt=dt, extra_quality=quality_extra)
        frames.append(frame)
        if labels.size:
            idx = [st.label_index(l) for l in labels]
            probe_rows.append([st.phi[i] for i in idx])
            probe_D_rows.append([st.D[i] for i in idx])
            table = build_prefix_table(st)
            pos = st.phi[idx]
            if st.frame == Z_MODEL:
                rate = stretch_rate(pos, table, params)
            else:
                rate = dx_velocity(pos, table, params)
            probe_K_rows.append(list(np.atleast_1d(rate)))
            probe_ts.append(st.t)
        if checks is not None:
            checks.observe(st, frame)

    emit(state, 0.0)
    cause = None
    steps = 0
    dt_next = ctrl.dt_init
    dt_used = 0.0
    emitted_at_step = 0

    while True:
        if float(np.max(state.omega)) >= ctrl.omega_cap:
            cause = CAUSE_OMEGA_CAP
            break
        remaining = ctrl.t_end - state.t
        if remaining <= 1e-15 * max(1.0, abs(ctrl.t_end)):
            cause = CAUSE_HORIZON
            break
        if steps >= ctrl.max_steps:
            raise StepBudgetError(f"step budget {ctrl.max_steps} exhausted at t={state.t:.6g}")
        try:
            state, dt_used, dt_next = advance_step(state, params, ctrl, min(dt_next, remaining))
        except TrajectoryCrossingError:
            cause = CAUSE_CROSSING
            break
        except StepUnderflowError:
            cause = CAUSE_UNDERFLOW
            break
        except AmplitudeOverflowError:
            cause = CAUSE_OVERFLOW
            break
        steps += 1
        state, saturated = _refine(state, ctrl, spec)
        if saturated:
            quality_extra |= diagnostics.QUALITY_REFINE_SATURATED
        if steps % ctrl.frame_stride == 0:
            emit(state, dt_used)
            emitted_at_step = steps

    if emitted_at_step != steps or len(frames) == 1:
        emit(state, dt_used)

    return SimulationResult(
        frames=frames,
        final_state=state,
        cause=cause,
        steps=steps,
        probe_labels=labels,
        probe_t=np.asarray(probe_ts),
        probes=np.asarray(probe_rows) if probe_rows else np.empty((0, labels.size)),
        probe_D=np.asarray(probe_D_rows) if probe_D_rows else np.empty((0, labels.size)),
        probe_K=np.asarray(probe_K_rows) if probe_K_rows else np.empty((0, labels.size)),
        checks=checks,
    )
