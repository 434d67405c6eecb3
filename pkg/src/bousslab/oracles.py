"""Independent comparison problems used to cross-validate the simulator.

Each oracle is solved by two routes that share no code with the marker
solver:

* trajectory upper bound Gamma:  dGamma/dt = exp(Gamma) * Gamma * t, checked
  against the separable closed form  t^2/2 = int_z^Gamma e^-s / s ds;
* warm-up reciprocal bound G:    G'' = G^2 / 2 with the first integral
  v^2 = (G^3 - 1)/3 and blow-up time sqrt(3) * int_1^inf (G^3-1)^(-1/2) dG;
* deformation lower bound f:     d f/dt = c * int_0^t exp(int_{L2}^z f) ds,
  method of lines cross-checked by Picard iteration;
* the positivity horizon tau0:   root of  tau e^{Gamma(3 L1, tau)} =
  eps / (tau (g1 + g2 + eps)), then capped by the two trajectory bounds.

All oracles are pure; evaluating them in parallel across labels or parameter
points is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import exp1

from .model import DomainError, ModelParams

_BRENTQ_RTOL = 4 * np.finfo(float).eps


class OracleFailure(RuntimeError):
    """An oracle could not produce a trustworthy answer; never guessed around."""


@dataclass
class OracleCurve:
    """A solved scalar comparison curve on a strictly increasing time grid."""

    grid: np.ndarray
    values: np.ndarray
    blowup_time: float | None
    method: str
    extra: dict = field(default_factory=dict)

    def interpolator(self, log_space: bool = False):
        from scipy.interpolate import PchipInterpolator

        if log_space:
            p = PchipInterpolator(self.grid, np.log(self.values))
            return lambda t: np.exp(p(t))
        return PchipInterpolator(self.grid, self.values)


def _integrate_adaptive(f, t0, y0, tol, stop, dt0, dt_min=1e-30, targets=(), max_steps=2_000_000):
    """Small RK4 step-doubling integrator with local extrapolation.

    ``stop(t, y) -> bool`` halts after an accepted step.  ``targets`` are time
    points hit exactly (a callback may read them off the returned grid).
    Returns (ts, ys) as arrays; ys has one row per accepted step.
    """
    t = float(t0)
    y = np.asarray(y0, dtype=float)
    dt = float(dt0)
    ts = [t]
    ys = [y.copy()]
    targets = sorted(tt for tt in targets if tt > t0)
    ti = 0

    def rk4(yy, tt, h):
        k1 = f(tt, yy)
        k2 = f(tt + 0.5 * h, yy + 0.5 * h * k1)
        k3 = f(tt + 0.5 * h, yy + 0.5 * h * k2)
        k4 = f(tt + h, yy + h * k3)
        return yy + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    steps = 0
    while True:
        steps += 1
        if steps > max_steps:
            raise OracleFailure("oracle integrator exceeded its step budget")
        capped = dt
        while ti < len(targets) and targets[ti] <= t * (1 + 4e-16):
            ti += 1
        if ti < len(targets):
            capped = min(capped, targets[ti] - t)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            full = rk4(y, t, capped)
            h1 = rk4(y, t, 0.5 * capped)
            h2 = rk4(h1, t + 0.5 * capped, 0.5 * capped)
            err_arr = np.abs(h2 - full) / (1e-300 + np.abs(h2))
        err = float(np.max(err_arr)) if np.all(np.isfinite(err_arr)) else np.inf
        if err <= tol:
            y = h2 + (h2 - full) / 15.0  # local extrapolation: effectively 5th order
            t = t + capped
            ts.append(t)
            ys.append(y.copy())
            if stop(t, y):
                break
            dt = capped * min(max(0.9 * (tol / max(err, 1e-300)) ** 0.2, 0.2), 5.0)
        else:
            dt = capped * min(max(0.9 * (tol / err) ** 0.2, 0.1), 0.9) if np.isfinite(err) else 0.25 * capped
            if dt < dt_min:
                raise OracleFailure(f"oracle integrator step underflow at t={t:.6g}")
    return np.asarray(ts), np.asarray(ys)


# ---------------------------------------------------------------------------
# Gamma: trajectory upper bound
# ---------------------------------------------------------------------------

def gamma_tstar(z: float) -> float:
    """Blow-up time of the Gamma comparison solution: sqrt(2 * int_z^inf e^-s/s ds)."""
    if z <= 0.0:
        raise DomainError(f"gamma oracle requires z > 0, got {z}")
    return math.sqrt(2.0 * float(exp1(z)))


def gamma_closed_form(z: float, t):
    """Gamma(z, t) from the separable relation t^2/2 = E1(z) - E1(Gamma).

    Newton iteration on E1 (derivative -e^-g/g), vectorized over ``t``;
    returns +inf at or beyond the blow-up time.
    """
    if z <= 0.0:
        raise DomainError(f"gamma oracle requires z > 0, got {z}")
    tq = np.asarray(t, dtype=float)
    target = float(exp1(z)) - 0.5 * tq * tq
    out = np.full(tq.shape, np.inf)
    ok = target > 0.0
    if np.any(ok):
        tgt = target[ok]
        g = np.full(tgt.shape, float(z))
        for _ in range(100):
            r = exp1(g) - tgt
            step = np.clip(r * g * np.exp(g), -5.0, 5.0)
            g = g + step
            if float(np.max(np.abs(step))) < 1e-14 * (1.0 + float(np.max(g))):
                break
        bad = np.abs(exp1(g) - tgt) > 1e-11 * np.abs(tgt)
        if np.any(bad):  # rare: fall back to bracketed root finding
            gb = g.copy()
            for i in np.nonzero(bad)[0]:
                gb[i] = brentq(lambda s: exp1(s) - tgt[i], z, z + 400.0, rtol=_BRENTQ_RTOL)
            g = gb
        out[ok] = g
    return float(out) if np.ndim(t) == 0 else out


def solve_gamma(z: float, tol: float = 1e-12, eval_times=()) -> OracleCurve:
    """Adaptive-RK solution of dGamma/dt = e^Gamma * Gamma * t, Gamma(z,0) = z.

    The returned blow-up time comes from the separable quadrature (the ODE
    route stops at a large finite amplitude); the curve itself is the ODE
    route, suitable for cross-checking against :func:`gamma_closed_form`.
    ``eval_times`` are hit exactly and can be read off the returned grid.
    """
    if z <= 0.0:
        raise DomainError(f"gamma oracle requires z > 0, got {z}")
    tstar = gamma_tstar(z)
    f = lambda t, y: np.exp(y) * y * t
    stop = lambda t, y: y[0] > z + 45.0 or t >= 0.9995 * tstar
    ts, ys = _integrate_adaptive(f, 0.0, [z], tol=tol, stop=stop, dt0=1e-4 * tstar, targets=eval_times)
    return OracleCurve(
        grid=ts,
        values=ys[:, 0],
        blowup_time=tstar,
        method="rk4 step-doubling; blow-up time from the separable quadrature",
    )


# ---------------------------------------------------------------------------
# G: warm-up reciprocal-position lower bound
# ---------------------------------------------------------------------------

def warmup_blowup_quadrature() -> float:
    """T_G = sqrt(3) * int_1^inf (G^3 - 1)^(-1/2) dG via G = 1 + s^2.

    The substitution removes the inverse-square-root endpoint at G = 1:
    the integrand becomes 2 / sqrt(3 + 3 s^2 + s^4)."""
    f = lambda s: 2.0 / math.sqrt(3.0 + 3.0 * s * s + s ** 4)
    a, _ = quad(f, 0.0, 10.0, limit=200)
    b, _ = quad(f, 10.0, np.inf, limit=200)
    return math.sqrt(3.0) * (a + b)


def solve_warmup_g(tol: float = 1e-12, g_stop: float = 1e16) -> OracleCurve:
    """Solve G'' = G^2/2, G(0) = 1, G'(0) = 0 until G reaches ``g_stop``.

    ``extra`` carries the velocity v = G', the quadrature blow-up time, and
    an independent ODE-route estimate (last grid time plus the quadrature
    tail from the final amplitude).
    """
    f = lambda t, y: np.array([y[1], 0.5 * y[0] * y[0]])
    stop = lambda t, y: y[0] >= g_stop
    ts, ys = _integrate_adaptive(f, 0.0, [1.0, 0.0], tol=tol, stop=stop, dt0=1e-4)
    T_quad = warmup_blowup_quadrature()
    g_end = float(ys[-1, 0])
    tail, _ = quad(lambda G: (G ** 3 - 1.0) ** -0.5, g_end, np.inf, limit=200)
    ode_estimate = float(ts[-1]) + math.sqrt(3.0) * tail
    return OracleCurve(
        grid=ts,
        values=ys[:, 0],
        blowup_time=T_quad,
        method="rk4 step-doubling; blow-up time from the endpoint-substituted quadrature",
        extra={"v": ys[:, 1], "ode_blowup_estimate": ode_estimate},
    )


# ---------------------------------------------------------------------------
# f: deformation lower bound on [L2, L3]
# ---------------------------------------------------------------------------

@dataclass
class FieldOracle:
    """f(z, t) on a rectangular grid with per-node divergence bookkeeping.

    ``values[i, j]`` is f at ``(t[i], z[j])`` and is +inf once node ``j`` has
    diverged; ``divergence_time[j]`` is +inf for nodes that stay finite.  The
    system is triangular in z (the forcing exponent integrates f only to the
    left), so freezing a diverged right-end node is exact for the others.
    """

    z: np.ndarray
    t: np.ndarray
    values: np.ndarray
    divergence_time: np.ndarray
    blowup_time: float | None
    picard_max_rel_diff: float | None
    picard_iterations: int | None
    method: str

    def eval(self, zq, t: float):
        """Bilinear evaluation; +inf where either bracketing sample is not finite."""
        zq = np.atleast_1d(np.asarray(zq, dtype=float))
        if t < self.t[0] - 1e-18 or t > self.t[-1] * (1 + 1e-12) + 1e-18:
            return np.full(zq.shape, np.inf)
        i = int(np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, self.t.size - 2))
        h = self.t[i + 1] - self.t[i]
        w = 0.0 if h == 0.0 else np.clip((t - self.t[i]) / h, 0.0, 1.0)
        lo = np.interp(zq, self.z, self.values[i])
        hi_row = self.values[i + 1]
        finite_hi = np.isfinite(hi_row)
        if np.all(finite_hi):
            hi = np.interp(zq, self.z, hi_row)
        else:
            # nodes at/right of the first diverged node are infinite
            first_bad = float(self.z[np.argmin(finite_hi)])
            hi = np.where(
                zq >= first_bad - 1e-15,
                np.inf,
                np.interp(zq, self.z[finite_hi], hi_row[finite_hi]),
            )
        with np.errstate(invalid="ignore"):
            out = lo + w * (hi - lo)
        out = np.where(np.isfinite(lo) & np.isfinite(hi), out, np.inf)
        return out


_F_VALUE_CAP = 1e12
_F_EXP_CAP = 690.0


def _forcing_exponent(fvals: np.ndarray, zgrid: np.ndarray) -> np.ndarray:
    gaps = np.diff(zgrid[: fvals.size])
    return np.concatenate(([0.0], np.cumsum(0.5 * (fvals[1:] + fvals[:-1]) * gaps)))


def _f_method_of_lines(c, zgrid, tgrid, tol=1e-11):
    """Integrate the semi-discrete field; every outer iteration either advances
    time or freezes the rightmost (always fastest) node as divergent.

    A node is frozen when its value or forcing exponent exceeds the caps, or
    when the stable step size collapses below the floating-point resolution of
    the current time: the tip runaway is double-exponential, so the remaining
    time to true divergence at that point is far below the recorded step."""
    n = zgrid.size
    fv = np.full(n, 0.5)
    gv = np.zeros(n)
    div_time = np.full(n, np.inf)
    alive = n
    values = np.full((tgrid.size, n), np.inf)
    values[0] = fv
    dt = max(tgrid[-1] * 1e-9, 1e-300)
    t = 0.0
    eps4 = 4.0 * np.finfo(float).eps

    def deriv(y):
        F = _forcing_exponent(y[0], zgrid)
        if F[-1] > _F_EXP_CAP:
            raise OverflowError
        return np.stack((y[1], c * np.exp(F)))

    def rk4(y, h):
        k1 = deriv(y)
        k2 = deriv(y + 0.5 * h * k1)
        k3 = deriv(y + 0.5 * h * k2)
        k4 = deriv(y + h * k3)
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    for row in range(1, tgrid.size):
        target = float(tgrid[row])
        while alive > 0 and t < target * (1 - 1e-15):
            F = _forcing_exponent(fv[:alive], zgrid)
            if fv[alive - 1] > _F_VALUE_CAP or F[alive - 1] > _F_EXP_CAP:
                div_time[alive - 1] = t
                alive -= 1
                continue
            h = min(dt, target - t)
            h_floor = max(1e-22, eps4 * t, 1e-18 * target)
            if h <= h_floor:
                div_time[alive - 1] = t
                alive -= 1
                dt = max(dt, 1e-6 * (target - t))
                continue
            y = np.stack((fv[:alive], gv[:alive]))
            accepted = False
            while h > h_floor:
                try:
                    with np.errstate(over="ignore", invalid="ignore"):
                        full = rk4(y, h)
                        half = rk4(rk4(y, 0.5 * h), 0.5 * h)
                        e = np.abs(half - full) / (1e-300 + np.abs(half))
                        err = float(np.max(e)) if np.all(np.isfinite(e)) else np.inf
                except OverflowError:
                    err = np.inf
                if err <= tol:
                    fv[:alive], gv[:alive] = half[0], half[1]
                    t += h
                    dt = h * min(max(0.9 * (tol / max(err, 1e-300)) ** 0.2, 0.2), 5.0)
                    accepted = True
                    break
                h *= min(max(0.9 * (tol / err) ** 0.2, 0.1), 0.9) if np.isfinite(err) else 0.25
            if not accepted:
                div_time[alive - 1] = t
                alive -= 1
                dt = max(dt, 1e-6 * (target - t))
        values[row, :alive] = fv[:alive]
    return values, div_time


def picard_sweep(prev: np.ndarray, c: float, zgrid: np.ndarray, tgrid: np.ndarray) -> np.ndarray:
    """One Picard update: integrate exp(int f dz) twice in time from the seed."""
    gaps = np.diff(zgrid)[None, :]
    dtg = np.diff(tgrid)[:, None]
    F = np.concatenate(
        (np.zeros((tgrid.size, 1)), np.cumsum(0.5 * (prev[:, 1:] + prev[:, :-1]) * gaps, axis=1)),
        axis=1,
    )
    E = np.exp(F)
    inner = np.concatenate(
        (np.zeros((1, zgrid.size)), np.cumsum(0.5 * (E[1:] + E[:-1]) * dtg, axis=0)), axis=0
    )
    return 0.5 + c * np.concatenate(
        (np.zeros((1, zgrid.size)), np.cumsum(0.5 * (inner[1:] + inner[:-1]) * dtg, axis=0)),
        axis=0,
    )


def _f_picard(c, zgrid, tgrid, tol, max_iter=400):
    f = np.full((tgrid.size, zgrid.size), 0.5)
    for it in range(1, max_iter + 1):
        f_new = picard_sweep(f, c, zgrid, tgrid)
        diff = float(np.max(np.abs(f_new - f)))
        f = f_new
        if diff < tol:
            return f, it
    raise OracleFailure(
        f"Picard iteration did not converge within {max_iter} sweeps (last delta {diff:.3g}) "
        "and showed no divergence signature"
    )


def picard_first_iterate(c, zgrid, tgrid, L2):
    """Closed form of the first sweep from the constant seed: 1/2 + (c t^2/2) e^{(z-L2)/2}."""
    zz, tt = np.meshgrid(zgrid, tgrid)
    return 0.5 + 0.5 * c * tt * tt * np.exp(0.5 * (zz - L2))


def solve_f_picard(
    c: float,
    L2: float,
    L3: float,
    t_max: float,
    n_z: int = 65,
    picard_tol: float = 1e-10,
    eval_times=(),
    n_t: int = 129,
    mol_tol: float = 1e-11,
) -> FieldOracle:
    """Solve the deformation comparison field on [L2, L3] x [0, t_max].

    The method-of-lines route (with per-node divergence freezing) is the
    authoritative set of values; Picard iteration from the constant seed is
    re-run on a time prefix safely below the first divergence and the maximum
    relative disagreement is recorded on the oracle.  ``mol_tol`` trades
    accuracy for speed: runaway chases cost O(tol^(-1/5)) steps per node, so
    wide domains with many diverging nodes want a looser value (divergence
    times only move at that relative order).
    """
    if c <= 0.0:
        raise DomainError(f"f oracle requires c > 0, got {c}")
    if not L2 < L3:
        raise DomainError(f"f oracle requires L2 < L3, got {L2}, {L3}")
    if n_z < 16:
        raise DomainError(f"f oracle requires n_z >= 16, got {n_z}")
    if t_max <= 0.0:
        raise DomainError(f"f oracle requires t_max > 0, got {t_max}")

    zgrid = np.linspace(L2, L3, n_z)
    extra = [tt for tt in np.atleast_1d(np.asarray(eval_times, dtype=float)) if 0.0 < tt <= t_max]
    tgrid = np.unique(np.concatenate((np.linspace(0.0, t_max, n_t), np.asarray(extra, dtype=float))))
    values, div_time = _f_method_of_lines(c, zgrid, tgrid, tol=mol_tol)

    t_first = float(np.min(div_time))
    picard_diff = None
    picard_iters = None
    t_safe = t_max if not np.isfinite(t_first) else 0.4 * t_first
    sub = tgrid[tgrid <= t_safe]
    if sub.size >= 5:
        fP, picard_iters = _f_picard(c, zgrid, sub, picard_tol)
        ref = values[: sub.size]
        finite = np.isfinite(ref)
        picard_diff = float(np.max(np.abs(fP[finite] - ref[finite]) / (1.0 + np.abs(ref[finite]))))

    blowup = float(div_time[-1]) if np.isfinite(div_time[-1]) else None
    return FieldOracle(
        z=zgrid,
        t=tgrid,
        values=values,
        divergence_time=div_time,
        blowup_time=blowup,
        picard_max_rel_diff=picard_diff,
        picard_iterations=picard_iters,
        method="method of lines with per-node divergence freeze; Picard cross-check on a safe prefix",
    )


# ---------------------------------------------------------------------------
# tau0: positivity horizon
# ---------------------------------------------------------------------------

@dataclass
class Tau0Result:
    tau0: float
    tau_root: float
    residual_rel: float
    tstar_3L1: float
    caps_applied: bool


def solve_tau0(params: ModelParams, L1: float, L0: float | None = None) -> Tau0Result:
    """Root of tau e^{Gamma(3 L1, tau)} = eps / (tau (g1+g2+eps)), then capped.

    The caps keep Gamma(L0, tau0) < L0 + L1/6 and Gamma(L1, tau0) < 3 L1 / 2
    (tau0 is decreased geometrically if needed; for sane ladders the root
    already satisfies both).
    """
    if not params.blow_up_range:
        raise OracleFailure("tau0 requires blow-up-range parameters (beta1 < 2 beta2)")
    if L0 is None:
        L0 = L1 / 4.0
    eps = params.epsilon
    gsum = params.gamma1 + params.gamma2 + eps
    z3 = 3.0 * L1
    tstar = gamma_tstar(z3)

    def g(tau):
        return tau * math.exp(gamma_closed_form(z3, tau)) - eps / (tau * gsum)

    lo = 1e-3 * tstar
    for _ in range(200):
        if g(lo) < 0.0:
            break
        lo *= 0.5
    else:
        raise OracleFailure("tau0 bracketing failed: no sign change on the left")
    hi = 0.99 * tstar
    for _ in range(200):
        if g(hi) > 0.0:
            break
        hi = tstar - 0.1 * (tstar - hi)
    else:
        raise OracleFailure("tau0 bracketing failed: no sign change on the right")

    tau_root = brentq(g, lo, hi, xtol=1e-30, rtol=_BRENTQ_RTOL)
    residual = abs(g(tau_root)) / (eps / (tau_root * gsum))

    tau0 = tau_root
    caps = False
    for _ in range(400):
        cap1 = gamma_closed_form(L0, tau0) < L0 + L1 / 6.0
        cap2 = gamma_closed_form(L1, tau0) < 1.5 * L1
        if cap1 and cap2:
            break
        tau0 *= 0.9
        caps = True
    else:
        raise OracleFailure("tau0 cap adjustment failed to terminate")
    return Tau0Result(tau0=tau0, tau_root=tau_root, residual_rel=residual, tstar_3L1=tstar, caps_applied=caps)


# ---------------------------------------------------------------------------
# induction ladder
# ---------------------------------------------------------------------------

def ladder_level(n: int) -> float:
    """The ladder constants G_n = (n+1) 2^{n+2}: 16, 48, 128, ..."""
    return float((n + 1) * 2 ** (n + 2))


def ladder_threshold_width(c: float, tau0: float) -> float:
    """Smallest Delta with c e^{Delta/4} tau0^2 / 8 >= 16 (the base case)."""
    return 4.0 * math.log(128.0 / (c * tau0 * tau0))


@dataclass
class LadderResult:
    passed: bool
    base_lhs: float
    failures: list


def verify_induction_ladder(f_curve: FieldOracle, c: float, tau0: float, delta: float) -> LadderResult:
    """Check the base case and rungs n = 1..3 of the growth ladder.

    Rung n requires f(z, tau0 (1 - 2^-n)) >= G_n for grid nodes in
    [L3 - delta 2^-n, L3]; a node that diverged before the rung time counts
    as satisfied (f is nondecreasing in t and truly infinite there).
    """
    L3 = float(f_curve.z[-1])
    if f_curve.z[0] > L3 - delta + 1e-9:
        raise DomainError(
            f"f oracle domain [{f_curve.z[0]}, {L3}] does not cover [L3 - delta, L3] with delta={delta}"
        )
    if f_curve.t[-1] < tau0 * (1 - 2.0 ** -3) - 1e-18:
        raise DomainError("f oracle time range does not reach the last ladder rung")

    failures: list = []
    base_lhs = c * math.exp(delta / 4.0) * tau0 * tau0 / 8.0
    if base_lhs < 16.0:
        failures.append(
            f"base case violated: c e^(Delta/4) tau0^2/8 = {base_lhs:.6g} < 16 (G_1)"
        )
        return LadderResult(False, base_lhs, failures)

    for n_rung in (1, 2, 3):
        t_n = tau0 * (1.0 - 2.0 ** -n_rung)
        G_n = ladder_level(n_rung)
        i = int(np.argmin(np.abs(f_curve.t - t_n)))
        if abs(float(f_curve.t[i]) - t_n) > 1e-9 * max(tau0, 1e-300):
            raise DomainError(f"rung time {t_n} missing from the f oracle grid (pass eval_times)")
        zmask = f_curve.z >= L3 - delta * 2.0 ** -n_rung - 1e-9
        for j in np.nonzero(zmask)[0]:
            if f_curve.divergence_time[j] <= t_n:
                continue
            if not f_curve.values[i, j] >= G_n:
                failures.append(
                    f"rung n={n_rung}: f({f_curve.z[j]:.6g}, {t_n:.6g}) = "
                    f"{f_curve.values[i, j]:.6g} < G_{n_rung} = {G_n}"
                )
    return LadderResult(not failures, base_lhs, failures)
