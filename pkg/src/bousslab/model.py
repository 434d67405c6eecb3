"""Kernel parameters, smooth bump initial data, and the Lagrangian marker state.

Two coordinate frames are supported:

* ``z_model`` -- logarithmic coordinates ``z = -log x`` on ``[0, inf)``.  The
  density forcing is ``rho * exp(z)`` and the velocity is a two-lobe window
  integral of the vorticity.
* ``x_warmup`` -- the unit interval ``(0, 1)`` with forcing ``rho / x``; with
  ``beta1 = beta2 = 1`` the kernel is sign-definite and all trajectories drift
  toward the origin.

Everything in this module is value-like and construction is pure, so states
and specs can be shared freely across threads or worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Z_MODEL = "z_model"
X_WARMUP = "x_warmup"
FRAMES = (Z_MODEL, X_WARMUP)

# Default epsilon when the parameters are outside the blow-up range and the
# usual half-margin rule (which would be nonpositive) does not apply.
_EPSILON_FALLBACK = 0.05


class ConfigurationError(ValueError):
    """A parameter or initial-data constraint was violated; the message names it."""


class DomainError(ValueError):
    """Evaluation was requested outside a function's domain."""


@dataclass(frozen=True)
class ModelParams:
    """Kernel window parameters and their log-frame images.

    ``gamma1 = log(beta1)`` and ``gamma2 = log(1/beta2)`` are the window
    offsets in z-coordinates; ``blow_up_range`` records ``beta1 < 2*beta2``,
    equivalently ``2*exp(-gamma1-gamma2) > 1``.
    """

    beta1: float
    beta2: float
    gamma1: float
    gamma2: float
    epsilon: float
    blow_up_range: bool

    @property
    def stretch_constant(self) -> float:
        """The lower-bound constant ``2*exp(-gamma1-gamma2) - 1``."""
        return 2.0 * math.exp(-self.gamma1 - self.gamma2) - 1.0


def make_params(beta1: float, beta2: float, epsilon: float | None = None) -> ModelParams:
    """Build :class:`ModelParams`, deriving the log offsets and range flag.

    ``epsilon`` defaults to half the available margin ``(ln 2 - g1 - g2)/2``
    inside the blow-up range; an explicit value must keep
    ``2*exp(-g1-g2-eps) > 1`` there.
    """
    beta1 = float(beta1)
    beta2 = float(beta2)
    if not math.isfinite(beta1) or not math.isfinite(beta2):
        raise ConfigurationError(f"betas must be finite, got beta1={beta1}, beta2={beta2}")
    if beta2 <= 0.0:
        raise ConfigurationError(f"beta2 must satisfy 0 < beta2, got {beta2}")
    if beta2 > 1.0:
        raise ConfigurationError(f"beta2 must satisfy beta2 <= 1, got {beta2}")
    if beta1 < 1.0:
        raise ConfigurationError(f"beta1 must satisfy beta1 >= 1, got {beta1}")

    gamma1 = math.log(beta1)
    gamma2 = -math.log(beta2)
    blow_up = beta1 < 2.0 * beta2
    margin = math.log(2.0) - gamma1 - gamma2  # eps < margin <=> 2 e^{-g1-g2-eps} > 1

    if epsilon is None:
        epsilon = margin / 2.0 if blow_up else _EPSILON_FALLBACK
    else:
        epsilon = float(epsilon)
        if epsilon <= 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
        if blow_up and epsilon >= margin:
            raise ConfigurationError(
                f"epsilon={epsilon} violates 2*exp(-gamma1-gamma2-epsilon) > 1 "
                f"(requires epsilon < {margin})"
            )
    return ModelParams(beta1, beta2, gamma1, gamma2, epsilon, blow_up)


def smooth_ramp(s):
    """C-infinity ramp: 0 for s <= 0, 1 for s >= 1, psi/(psi + psi(1-.)) between,
    with psi(s) = exp(-1/s)."""
    s = np.asarray(s, dtype=float)
    out = np.where(s >= 1.0, 1.0, 0.0)
    mid = (s > 0.0) & (s < 1.0)
    if np.any(mid):
        a = np.exp(-1.0 / s[mid])
        b = np.exp(-1.0 / (1.0 - s[mid]))
        out[mid] = a / (a + b)
    return out


@dataclass(frozen=True)
class InitialDataSpec:
    """Ladder geometry, frame, and marker layout for the smooth bump data.

    In the z frame the density ramps up on ``[1, L0]``, is identically
    ``rho_amplitude`` on ``[L0, L3]``, ramps down on ``[L3, L4]`` and vanishes
    outside ``[1, L4]``.  In the warm-up frame the plateau is
    ``warmup_plateau`` and the support is ``[p_lo/2, (1+p_hi)/2]``.
    """

    L0: float = 2.0
    L1: float = 8.0
    L2: float = 9.0
    L3: float = 12.0
    L4: float = 14.0
    frame: str = Z_MODEL
    n_markers: int = 4096
    warmup_plateau: tuple[float, float] = (1.0 / 3.0, 2.0 / 3.0)
    rho_amplitude: float = 1.0
    margin: float = 1.0

    @property
    def ramp_lo(self) -> float:
        return self.L0 - 1.0

    @property
    def ramp_hi(self) -> float:
        return self.L4 - self.L3


def warmup_support(spec: InitialDataSpec) -> tuple[float, float]:
    """Support endpoints of the warm-up bump in x coordinates."""
    p_lo, p_hi = spec.warmup_plateau
    return 0.5 * p_lo, 0.5 * (1.0 + p_hi)


def validate_spec(spec: InitialDataSpec, params: ModelParams) -> None:
    """Raise :class:`ConfigurationError` naming the first violated constraint."""
    if spec.frame not in FRAMES:
        raise ConfigurationError(f"frame must be one of {FRAMES}, got {spec.frame!r}")
    if spec.n_markers < 64:
        raise ConfigurationError(f"n_markers >= 64 required, got {spec.n_markers}")
    if not 0.0 <= spec.rho_amplitude <= 1.0:
        raise ConfigurationError(f"rho_amplitude must lie in [0, 1], got {spec.rho_amplitude}")

    if spec.frame == Z_MODEL:
        if not 1.0 < spec.L0:
            raise ConfigurationError(f"ladder must satisfy 1 < L0, got L0={spec.L0}")
        for lo, hi, name in (
            (spec.L0, spec.L1, "L0 < L1"),
            (spec.L1, spec.L2, "L1 < L2"),
            (spec.L2, spec.L3, "L2 < L3"),
            (spec.L3, spec.L4, "L3 < L4"),
        ):
            if not lo < hi:
                raise ConfigurationError(f"ladder must satisfy {name}, got {lo} >= {hi}")
        if spec.L0 > spec.L1 / 4.0:
            raise ConfigurationError(f"ladder must satisfy L0 <= L1/4, got L0={spec.L0}, L1={spec.L1}")
        if params.gamma1 >= spec.L1 / 4.0:
            raise ConfigurationError(f"gamma1 < L1/4 required, got gamma1={params.gamma1}, L1={spec.L1}")
        if params.gamma2 >= spec.L1 / 4.0:
            raise ConfigurationError(f"gamma2 < L1/4 required, got gamma2={params.gamma2}, L1={spec.L1}")
        if params.epsilon >= spec.L1 / 10.0:
            raise ConfigurationError(f"epsilon < L1/10 required, got epsilon={params.epsilon}, L1={spec.L1}")
        if spec.L2 < spec.L1 + params.gamma1:
            raise ConfigurationError(
                f"L2 >= L1 + gamma1 required, got L2={spec.L2}, L1+gamma1={spec.L1 + params.gamma1}"
            )
        if not 0.0 < spec.margin <= 1.0:
            raise ConfigurationError(f"margin must lie in (0, 1], got {spec.margin}")
    else:
        p_lo, p_hi = spec.warmup_plateau
        if not 0.0 < p_lo < p_hi < 1.0:
            raise ConfigurationError(
                f"warmup plateau must satisfy 0 < lo < hi < 1, got ({p_lo}, {p_hi})"
            )


def rho0_profile(pts, spec: InitialDataSpec) -> np.ndarray:
    """Initial density at marker labels: the glued C-infinity bump."""
    pts = np.asarray(pts, dtype=float)
    if spec.frame == Z_MODEL:
        lo, p_lo, p_hi, hi = 1.0, spec.L0, spec.L3, spec.L4
    else:
        p_lo, p_hi = spec.warmup_plateau
        lo, hi = warmup_support(spec)
    up = smooth_ramp((pts - lo) / (p_lo - lo))
    down = smooth_ramp((hi - pts) / (hi - p_hi))
    return spec.rho_amplitude * np.minimum(up, down)


@dataclass
class LagrangianState:
    """Sorted markers: frozen labels and density, evolving position/vorticity.

    Invariants: ``z`` and ``phi`` strictly increasing, ``rho`` in [0, 1],
    ``omega >= 0``, ``D > 0``, ``W >= 0`` nondecreasing in time.  With zero
    initial vorticity ``omega == rho * W`` exactly along trajectories.
    """

    t: float
    frame: str
    z: np.ndarray      # labels (initial positions)
    phi: np.ndarray    # current positions
    rho: np.ndarray    # density, frozen along trajectories
    omega: np.ndarray  # vorticity
    D: np.ndarray      # deformation d(phi)/d(label)
    W: np.ndarray      # forcing accumulator: int exp(phi) dt (z) or int dt/phi (x)

    @property
    def n(self) -> int:
        return int(self.z.size)

    def copy(self) -> "LagrangianState":
        return LagrangianState(
            self.t, self.frame,
            self.z.copy(), self.phi.copy(), self.rho.copy(),
            self.omega.copy(), self.D.copy(), self.W.copy(),
        )

    def label_index(self, label: float) -> int:
        """Index of the marker whose label equals ``label`` (to 1e-9)."""
        i = int(np.searchsorted(self.z, label))
        for j in (i - 1, i, i + 1):
            if 0 <= j < self.n and abs(self.z[j] - label) < 1e-9:
                return j
        raise KeyError(f"no marker with label {label}")


def _graded_grid(zones, n_total, anchors):
    """Concatenate per-zone uniform grids; spacing in a zone is base/weight."""
    effective = sum((b - a) * w for a, b, w in zones)
    base = effective / max(n_total - 1, 1)
    parts = []
    for a, b, w in zones:
        m = max(int(round((b - a) * w / base)), 2)
        parts.append(np.linspace(a, b, m + 1))
    grid = np.unique(np.concatenate(parts))
    anchors = np.asarray(sorted(anchors), dtype=float)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(grid))))
    keep = np.ones(grid.size, dtype=bool)
    for a in anchors:
        keep &= np.abs(grid - a) > tol
    return np.unique(np.concatenate([grid[keep], anchors]))


def build_initial_state(spec: InitialDataSpec, params: ModelParams) -> LagrangianState:
    """Markers covering the data support plus margins, with 4x ramp refinement.

    Gradients of the bump live in the two ramps, so those zones get four times
    the base marker density.  Ladder points (and plateau endpoints in the
    warm-up frame) are placed on exact markers so they can serve as probes.
    """
    validate_spec(spec, params)
    if spec.frame == Z_MODEL:
        lo, hi = 1.0 - spec.margin, spec.L4 + spec.margin
        zones = [
            (lo, 1.0, 1.0),
            (1.0, spec.L0, 4.0),
            (spec.L0, spec.L3, 1.0),
            (spec.L3, spec.L4, 4.0),
            (spec.L4, hi, 1.0),
        ]
        anchors = [lo, 1.0, spec.L0, spec.L1, spec.L2, spec.L3, spec.L4, hi]
    else:
        s_lo, s_hi = warmup_support(spec)
        p_lo, p_hi = spec.warmup_plateau
        lo = s_lo - 0.5 * (p_lo - s_lo)
        hi = s_hi + 0.5 * (s_hi - p_hi)
        zones = [
            (lo, s_lo, 1.0),
            (s_lo, p_lo, 4.0),
            (p_lo, p_hi, 1.0),
            (p_hi, s_hi, 4.0),
            (s_hi, hi, 1.0),
        ]
        anchors = [lo, s_lo, p_lo, p_hi, s_hi, hi]
    z = _graded_grid(zones, spec.n_markers, anchors)
    n = z.size
    return LagrangianState(
        t=0.0,
        frame=spec.frame,
        z=z,
        phi=z.copy(),
        rho=rho0_profile(z, spec),
        omega=np.zeros(n),
        D=np.ones(n),
        W=np.zeros(n),
    )


def _match_scalar(out, ref):
    return float(out) if np.ndim(ref) == 0 else out


def x_to_z(x):
    """Map x in (0, 1] to z = -log x."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr > 1.0):
        raise DomainError(f"x must lie in (0, 1] for the x -> z transform, got {x}")
    return _match_scalar(-np.log(arr), x)


def z_to_x(z):
    """Map z >= 0 to x = exp(-z)."""
    arr = np.asarray(z, dtype=float)
    if np.any(arr < 0.0):
        raise DomainError(f"z must satisfy z >= 0 for the z -> x transform, got {z}")
    return _match_scalar(np.exp(-arr), z)


def velocity_to_z_frame(u, x):
    """Map an x-frame velocity sample at position x to the z frame."""
    return _match_scalar(-np.asarray(u, dtype=float) / np.asarray(x, dtype=float), u)


def velocity_to_x_frame(u_tilde, z):
    """Map a z-frame velocity sample at position z to the x frame."""
    return _match_scalar(-np.exp(-np.asarray(z, dtype=float)) * np.asarray(u_tilde, dtype=float), u_tilde)


def frame_transform(value, direction: str):
    """Coordinate transform dispatcher; ``direction`` is 'x_to_z' or 'z_to_x'."""
    if direction == "x_to_z":
        return x_to_z(value)
    if direction == "z_to_x":
        return z_to_x(value)
    raise DomainError(f"unknown transform direction {direction!r}")
