"""Per-frame blow-up indicators, positivity window, and comparison checks.

All functions here are pure in the state and frames they receive; nothing is
mutated, so frames can be processed in parallel.  The checks are numerical
evidence at marker resolution, not proofs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .biotsavart import PrefixTable, build_prefix_table, dx_velocity, stretch_rate, velocity_z
from .model import (
    X_WARMUP,
    Z_MODEL,
    InitialDataSpec,
    LagrangianState,
    ModelParams,
    warmup_support,
)

QUALITY_D_MISMATCH = 1       # deformation ODE vs finite differences off by > 2%
QUALITY_REFINE_SATURATED = 2
QUALITY_EXP_CLAMPED = 4      # an exp() argument was clamped to stay finite

D_FD_RTOL = 0.02
OMEGA_CONSISTENCY_TOL = 1e-8
GAMMA_COMPARISON_SLACK = 1e-3
F_COMPARISON_SLACK = 1e-3
WARMUP_G_SLACK = 1e-2
POSITIVITY_TOL_SCALE = 1e-10
PROP2_SLACK_SCALE = 1e-6

_EXP_CLAMP = 700.0
_DELTA_FLOOR = 1e-320

PROXY_CAUSES = ("omega_cap", "step_underflow", "overflow")


@dataclass
class DiagnosticsFrame:
    """Time-stamped indicator snapshot; the I_* fields are running integrals."""

    t: float
    delta_x: float
    psi: float
    sup_omega: float
    sup_dzrho: float
    sup_dxrho: float
    sup_dxu: float
    min_K: float
    max_K: float
    min_D: float
    I_omega: float
    I_drho: float
    I_dxu: float
    dt: float
    quality: int
    d_fd_mismatch: float


@dataclass
class BlowupReport:
    classification: str  # blowup | regular_horizon | aborted
    T_est: float | None
    slope: float | None
    n_fit: int
    reason: str = ""


def _support_top_label(spec: InitialDataSpec) -> float:
    return spec.L4 if spec.frame == Z_MODEL else warmup_support(spec)[1]


def _support_low_label(spec: InitialDataSpec) -> float:
    return 1.0 if spec.frame == Z_MODEL else warmup_support(spec)[0]


def _clamped_exp(a):
    clipped = np.minimum(a, _EXP_CLAMP)
    return np.exp(clipped), bool(np.any(a > _EXP_CLAMP))


def compute_frame(
    state: LagrangianState,
    params: ModelParams,
    spec: InitialDataSpec,
    prev: DiagnosticsFrame | None = None,
    dt: float = 0.0,
    extra_quality: int = 0,
) -> DiagnosticsFrame:
    """Indicators of one state; running integrals advance by trapezoid from ``prev``."""
    table = build_prefix_table(state)
    quality = extra_quality
    clamped = False

    dphi = np.diff(state.phi)
    drho_slope = np.abs(np.diff(state.rho)) / dphi
    sup_omega = float(np.max(state.omega))
    min_D = float(np.min(state.D))

    if state.frame == Z_MODEL:
        i_top = state.label_index(spec.L4)
        phi_top = float(state.phi[i_top])
        delta_x = max(math.exp(-min(phi_top, 745.0)), _DELTA_FLOOR)
        psi_now = phi_top
        sup_dzrho = float(np.max(drho_slope)) if drho_slope.size else 0.0
        mid = 0.5 * (state.phi[1:] + state.phi[:-1])
        weights, c1 = _clamped_exp(mid)
        clamped |= c1
        sup_dxrho = float(np.max(drho_slope * weights)) if drho_slope.size else 0.0
        u = velocity_z(state.phi, table, params)
        K = stretch_rate(state.phi, table, params)
        sup_dxu = float(np.max(np.abs(K - u)))
        cut = int(np.searchsorted(state.phi, phi_top + params.gamma1, side="left"))
        in_window = (state.z >= spec.L1 - 1e-12) & (np.arange(state.n) < cut)
        if np.any(in_window):
            min_K = float(np.min(K[in_window]))
            max_K = float(np.max(K[in_window]))
        else:
            min_K = max_K = 0.0
    else:
        i_lo = state.label_index(_support_low_label(spec))
        delta_x = float(state.phi[i_lo])
        psi_now = -math.log(delta_x)
        sup_dxrho = float(np.max(drho_slope)) if drho_slope.size else 0.0
        mid = 0.5 * (state.phi[1:] + state.phi[:-1])
        sup_dzrho = float(np.max(drho_slope * mid)) if drho_slope.size else 0.0
        du = dx_velocity(state.phi, table, params)
        sup_dxu = float(np.max(np.abs(du)))
        s_lo, s_hi = warmup_support(spec)
        in_support = (state.z >= s_lo - 1e-12) & (state.z <= s_hi + 1e-12)
        min_K = float(np.min(du[in_support]))
        max_K = float(np.max(du[in_support]))

    psi = max(prev.psi, psi_now) if prev is not None else psi_now

    # deformation quality: ODE-carried D against label-space finite differences
    fd = np.gradient(state.phi, state.z)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(fd[1:-1] - state.D[1:-1]) / np.abs(state.D[1:-1])
    d_fd_mismatch = float(np.max(rel)) if rel.size else 0.0
    if d_fd_mismatch > D_FD_RTOL:
        quality |= QUALITY_D_MISMATCH
    if clamped:
        quality |= QUALITY_EXP_CLAMPED

    if prev is None:
        I_omega = I_drho = I_dxu = 0.0
    else:
        h = state.t - prev.t
        I_omega = prev.I_omega + 0.5 * h * (prev.sup_omega + sup_omega)
        I_drho = prev.I_drho + 0.5 * h * (prev.sup_dxrho + sup_dxrho)
        I_dxu = prev.I_dxu + 0.5 * h * (prev.sup_dxu + sup_dxu)

    return DiagnosticsFrame(
        t=float(state.t),
        delta_x=delta_x,
        psi=psi,
        sup_omega=sup_omega,
        sup_dzrho=sup_dzrho,
        sup_dxrho=sup_dxrho,
        sup_dxu=sup_dxu,
        min_K=min_K,
        max_K=max_K,
        min_D=min_D,
        I_omega=I_omega,
        I_drho=I_drho,
        I_dxu=I_dxu,
        dt=float(dt),
        quality=quality,
        d_fd_mismatch=d_fd_mismatch,
    )


@dataclass
class PositivityCheck:
    min_K: float
    max_K: float
    tol_K: float
    window_label_hi: float
    passed: bool
    prop2_min_slack: float
    prop2_sup_K: float
    n_window: int


def check_positivity_window(state: LagrangianState, params: ModelParams, spec: InitialDataSpec) -> PositivityCheck:
    """Stretching-rate positivity on [L1, Phi^-1(Phi(L4)+gamma1)) plus the
    [L2, L3] lower bound ``K >= (2 exp(-g1-g2) - 1) W``."""
    if state.frame != Z_MODEL:
        raise ValueError("positivity window is defined for the z frame")
    table = build_prefix_table(state)
    K = stretch_rate(state.phi, table, params)
    phi_top = float(state.phi[state.label_index(spec.L4)])

    cut = int(np.searchsorted(state.phi, phi_top + params.gamma1, side="left"))
    in_window = (state.z >= spec.L1 - 1e-12) & (np.arange(state.n) < cut)
    sup_omega = float(np.max(state.omega))
    tol_K = POSITIVITY_TOL_SCALE * sup_omega
    if np.any(in_window):
        min_K = float(np.min(K[in_window]))
        max_K = float(np.max(K[in_window]))
        window_hi = float(np.max(state.z[in_window]))
    else:
        min_K = max_K = 0.0
        window_hi = spec.L1
    passed = min_K >= -tol_K

    m23 = (state.z >= spec.L2 - 1e-12) & (state.z <= spec.L3 + 1e-12)
    slack = K[m23] - params.stretch_constant * state.W[m23]
    prop2_min_slack = float(np.min(slack)) if np.any(m23) else 0.0
    prop2_sup_K = float(np.max(K[m23])) if np.any(m23) else 0.0

    return PositivityCheck(
        min_K=min_K,
        max_K=max_K,
        tol_K=tol_K,
        window_label_hi=window_hi,
        passed=passed,
        prop2_min_slack=prop2_min_slack,
        prop2_sup_K=prop2_sup_K,
        n_window=int(np.count_nonzero(in_window)),
    )


@dataclass
class GammaCheck:
    passed: bool
    max_ratio: float
    skipped: list


def check_gamma_bound(state: LagrangianState, gamma_values: dict) -> GammaCheck:
    """Upper-bound check Phi(z, t) <= Gamma(z, t) * (1 + slack) at probe labels.

    ``gamma_values`` maps probe labels to the comparison solution evaluated at
    ``state.t``.  Probes without a matching marker are skipped and recorded.
    """
    max_ratio = 0.0
    skipped = []
    for label, gval in gamma_values.items():
        try:
            i = state.label_index(label)
        except KeyError:
            skipped.append(label)
            continue
        if not np.isfinite(gval):
            continue
        max_ratio = max(max_ratio, float(state.phi[i]) / float(gval))
    return GammaCheck(passed=max_ratio <= 1.0 + GAMMA_COMPARISON_SLACK, max_ratio=max_ratio, skipped=skipped)


def detect_blowup(frames, cause: str) -> BlowupReport:
    """Classify a finished run from its frames and termination cause.

    Blow-up means a proxy cause plus super-linear growth of ``sup omega`` over
    the last decade of frames (log-log slope > 1.5); the singular-time
    estimate comes from a linear fit of ``1/sup omega`` over that window.
    """
    n = len(frames)
    if n < 8:
        return BlowupReport("aborted", None, None, 0, reason=f"estimator declined: only {n} frames")

    k = max(8, n // 10)
    window = frames[-k:]
    ts = np.array([f.t for f in window])
    sup = np.array([f.sup_omega for f in window])
    valid = (ts > 0.0) & (sup > 0.0) & np.isfinite(sup)
    slope = None
    if int(np.count_nonzero(valid)) >= 8:
        slope = float(np.polyfit(np.log(ts[valid]), np.log(sup[valid]), 1)[0])
    growth = slope is not None and slope > 1.5

    if cause in PROXY_CAUSES and growth:
        y = 1.0 / sup[valid]
        b, a = np.polyfit(ts[valid], y, 1)
        t_last = float(ts[-1])
        T_est = float(-a / b) if b < 0.0 else t_last
        return BlowupReport("blowup", max(T_est, t_last), slope, int(np.count_nonzero(valid)))
    if cause == "horizon" and not growth:
        return BlowupReport("regular_horizon", None, slope, int(np.count_nonzero(valid)))
    reason = "no growth signature" if not growth else f"cause {cause!r} is not a blow-up proxy"
    return BlowupReport("aborted", None, slope, int(np.count_nonzero(valid)), reason=reason)


class RunChecks:
    """Incremental comparison checks evaluated at every emitted frame.

    The evaluators are injected so this module stays independent of the
    oracle implementations:

    * ``gamma_eval(z, t)`` and ``gamma_tstar(z)`` for the trajectory upper bound,
    * ``f_eval(z_array, t)`` for the deformation lower bound on [L2, L3],
    * ``g_eval(t)`` for the warm-up reciprocal-position lower bound,
    * ``tau0`` for the positivity horizon.
    """

    def __init__(
        self,
        params: ModelParams,
        spec: InitialDataSpec,
        gamma_probes=(),
        gamma_eval=None,
        gamma_tstar=None,
        tau0: float | None = None,
        f_eval=None,
        g_eval=None,
        g_t_max: float = np.inf,
    ):
        self.params = params
        self.spec = spec
        self.gamma_probes = np.atleast_1d(np.asarray(gamma_probes, dtype=float))
        self.gamma_eval = gamma_eval
        self.gamma_tstar = gamma_tstar
        self.tau0 = tau0
        self.f_eval = f_eval
        self.g_eval = g_eval
        self.g_t_max = g_t_max

        self.omega_consistency_max = 0.0
        self.gamma_max_ratio = 0.0
        self.gamma_points = 0
        self.positivity_all_passed = True
        self.positivity_frames = 0
        self.positivity_worst = np.inf       # min over frames of (min_K + tol_K)
        self.prop2_worst_margin = np.inf     # min over frames of slack + scale
        self.f_min_ratio = np.inf
        self.f_points = 0
        self.warmup_g_min_ratio = np.inf
        self.warmup_g_points = 0
        self.warmup_g_skipped = 0
        self._bound = False
        self._f_labels = None
        self._probe_snapped = None

    def bind(self, state: LagrangianState) -> None:
        if self.gamma_probes.size:
            from .solver import _snap_labels  # local import to avoid a cycle at module load

            self._probe_snapped = _snap_labels(state, self.gamma_probes)
        if self.f_eval is not None and state.frame == Z_MODEL:
            m = (state.z >= self.spec.L2 - 1e-12) & (state.z <= self.spec.L3 + 1e-12)
            self._f_labels = state.z[m]
        self._bound = True

    def observe(self, state: LagrangianState, frame: DiagnosticsFrame) -> None:
        if not self._bound:
            self.bind(state)
        sup = float(np.max(state.omega))
        dev = float(np.max(np.abs(state.omega - state.rho * state.W))) / (1.0 + sup)
        self.omega_consistency_max = max(self.omega_consistency_max, dev)

        if self._probe_snapped is not None and self.gamma_eval is not None:
            for label in self._probe_snapped:
                if state.t > 0.9 * self.gamma_tstar(label):
                    continue
                gval = self.gamma_eval(label, state.t)
                if not np.isfinite(gval):
                    continue
                i = state.label_index(label)
                self.gamma_max_ratio = max(self.gamma_max_ratio, float(state.phi[i]) / float(gval))
                self.gamma_points += 1

        if self.tau0 is not None and state.frame == Z_MODEL and state.t <= self.tau0 * (1 + 1e-12):
            res = check_positivity_window(state, self.params, self.spec)
            self.positivity_frames += 1
            self.positivity_all_passed &= res.passed
            self.positivity_worst = min(self.positivity_worst, res.min_K + res.tol_K)
            margin = res.prop2_min_slack + PROP2_SLACK_SCALE * (1.0 + res.prop2_sup_K)
            self.prop2_worst_margin = min(self.prop2_worst_margin, margin)

        if self._f_labels is not None and self._f_labels.size:
            fvals = self.f_eval(self._f_labels, state.t)
            finite = np.isfinite(fvals)
            if np.any(finite):
                idx = [state.label_index(l) for l in self._f_labels[finite]]
                ratios = state.D[idx] / fvals[finite]
                self.f_min_ratio = min(self.f_min_ratio, float(np.min(ratios)))
                self.f_points += int(np.count_nonzero(finite))

        if self.g_eval is not None and state.frame == X_WARMUP:
            if state.t <= self.g_t_max:
                p_lo = self.spec.warmup_plateau[0]
                i = state.label_index(p_lo)
                g = float(self.g_eval(state.t))
                if g > 0.0 and np.isfinite(g):
                    self.warmup_g_min_ratio = min(self.warmup_g_min_ratio, (1.0 / float(state.phi[i])) / g)
                    self.warmup_g_points += 1
            else:
                self.warmup_g_skipped += 1

    def summary(self) -> dict:
        out: dict = {}
        out["omega_consistency"] = {
            "max_normalized_deviation": self.omega_consistency_max,
            "pass": self.omega_consistency_max <= OMEGA_CONSISTENCY_TOL,
        }
        out["gamma_bound"] = (
            None
            if self.gamma_eval is None or self._probe_snapped is None
            else {
                "max_ratio": self.gamma_max_ratio,
                "points": self.gamma_points,
                "pass": self.gamma_max_ratio <= 1.0 + GAMMA_COMPARISON_SLACK,
            }
        )
        out["positivity"] = (
            None
            if self.tau0 is None
            else {
                "tau0": self.tau0,
                "frames_in_horizon": self.positivity_frames,
                "worst_min_K_plus_tol": None if self.positivity_frames == 0 else self.positivity_worst,
                "prop2_worst_margin": None if self.positivity_frames == 0 else self.prop2_worst_margin,
                "pass": self.positivity_all_passed
                and (self.positivity_frames == 0 or self.prop2_worst_margin >= 0.0),
            }
        )
        out["f_comparison"] = (
            None
            if self._f_labels is None
            else {
                "min_D_over_f": None if self.f_points == 0 else self.f_min_ratio,
                "points": self.f_points,
                "pass": self.f_points == 0 or self.f_min_ratio >= 1.0 - F_COMPARISON_SLACK,
            }
        )
        out["warmup_g"] = (
            None
            if self.g_eval is None
            else {
                "min_reciprocal_over_G": None if self.warmup_g_points == 0 else self.warmup_g_min_ratio,
                "points": self.warmup_g_points,
                "skipped_beyond_grid": self.warmup_g_skipped,
                "pass": self.warmup_g_points > 0 and self.warmup_g_min_ratio >= 1.0 - WARMUP_G_SLACK,
            }
        )
        return out

    def all_passed(self) -> bool:
        return all(v is None or v["pass"] for v in self.summary().values())
