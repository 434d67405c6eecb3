"""Velocity and stretching-rate evaluation from the marker vorticity field.

The vorticity is the piecewise-linear interpolant through the current marker
positions and is identically zero outside the marker range (the initial
support is compact and transported).  Integrals of both ``omega`` and
``omega/y`` have closed forms on every segment, accumulated once into prefix
tables, so any window integral is exact for the interpolant up to rounding
and a query costs one binary search.

Clamp corners (``z - gamma1`` crossing 0 in the z frame, ``beta*x`` crossing 1
in the x frame) are evaluated as one-sided limits from the right: the clamped
term is dropped exactly at the corner.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DomainError, LagrangianState, ModelParams


class TableConsistencyError(ValueError):
    """Marker positions handed to the quadrature backend were not sorted."""


@dataclass(frozen=True)
class PrefixTable:
    """Cumulative integrals of the piecewise-linear vorticity interpolant.

    ``cum[i]`` is the integral of omega from ``nodes[0]`` to ``nodes[i]``;
    ``cum_over_y`` is the same for ``omega/y`` and is only available when all
    nodes are strictly positive (x frame).  Instances are immutable after
    construction; concurrent read-only queries are safe.
    """

    nodes: np.ndarray
    omega: np.ndarray
    slope: np.ndarray
    cum: np.ndarray
    cum_over_y: np.ndarray | None
    log_nodes: np.ndarray | None

    @classmethod
    def from_samples(cls, nodes, omega) -> "PrefixTable":
        nodes = np.ascontiguousarray(nodes, dtype=float)
        omega = np.ascontiguousarray(omega, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2 or nodes.shape != omega.shape:
            raise TableConsistencyError("need matching 1-d arrays with at least two nodes")
        gaps = np.diff(nodes)
        if not np.all(gaps > 0.0):
            raise TableConsistencyError("marker positions must be strictly increasing")
        slope = np.diff(omega) / gaps
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (omega[1:] + omega[:-1]) * gaps)))
        if nodes[0] > 0.0:
            log_nodes = np.log(nodes)
            seg = (omega[:-1] - slope * nodes[:-1]) * np.diff(log_nodes) + slope * gaps
            cum_over_y = np.concatenate(([0.0], np.cumsum(seg)))
        else:
            log_nodes = None
            cum_over_y = None
        return cls(nodes, omega, slope, cum, cum_over_y, log_nodes)

    def _locate(self, x):
        xq = np.clip(x, self.nodes[0], self.nodes[-1])
        idx = np.clip(np.searchsorted(self.nodes, xq, side="right") - 1, 0, self.nodes.size - 2)
        return xq, idx

    def cumulative(self, x):
        """Integral of omega from below the support up to ``x`` (clamped)."""
        xq, idx = self._locate(np.asarray(x, dtype=float))
        dx = xq - self.nodes[idx]
        return self.cum[idx] + self.omega[idx] * dx + 0.5 * self.slope[idx] * dx * dx

    def integrate(self, a, b):
        """Signed integral of omega over [a, b]; zero outside the node range."""
        return self.cumulative(b) - self.cumulative(a)

    def cumulative_over_y(self, x):
        if self.cum_over_y is None:
            raise TableConsistencyError("omega/y integrals require strictly positive node positions")
        xq, idx = self._locate(np.asarray(x, dtype=float))
        dx = xq - self.nodes[idx]
        return (
            self.cum_over_y[idx]
            + (self.omega[idx] - self.slope[idx] * self.nodes[idx]) * (np.log(xq) - self.log_nodes[idx])
            + self.slope[idx] * dx
        )

    def integrate_over_y(self, a, b):
        """Signed integral of omega/y over [a, b]; zero outside the node range."""
        return self.cumulative_over_y(b) - self.cumulative_over_y(a)

    def interp(self, y):
        """Piecewise-linear vorticity at ``y``; zero outside the node range."""
        return np.interp(y, self.nodes, self.omega, left=0.0, right=0.0)


def build_prefix_table(state: LagrangianState) -> PrefixTable:
    """Prefix tables for the field carried by the markers' current positions."""
    return PrefixTable.from_samples(state.phi, state.omega)


def _match_scalar(out, ref):
    return float(out) if np.ndim(ref) == 0 else out


def velocity_z(z, table: PrefixTable, params: ModelParams):
    """z-frame velocity: positive lobe below ``z - g1`` minus the window lobe.

    Both integral limits are clamped at 0, the z image of the x-frame cutoff
    at 1 (for ``z <= -gamma2``, i.e. ``x >= 1/beta2``, the velocity vanishes
    identically).
    """
    zq = np.asarray(z, dtype=float)
    p = np.maximum(zq - params.gamma1, 0.0)
    q = np.maximum(zq + params.gamma2, 0.0)
    c0 = table.cumulative(0.0)
    u = 2.0 * table.cumulative(p) - table.cumulative(q) - c0
    return _match_scalar(u, z)


def velocity_x(x, table: PrefixTable, params: ModelParams):
    """x-frame velocity with the integral limits cut off at 1."""
    xq = np.asarray(x, dtype=float)
    if np.any(xq <= 0.0) or np.any(xq > 1.0):
        raise DomainError("velocity_x requires positions in (0, 1]")
    b1 = np.minimum(params.beta1 * xq, 1.0)
    b2 = np.minimum(params.beta2 * xq, 1.0)
    u = xq * (table.integrate_over_y(b2, b1) - table.integrate_over_y(b1, 1.0))
    return _match_scalar(u, x)


def stretch_rate(z, table: PrefixTable, params: ModelParams):
    """Growth rate of the deformation: ``2*omega(z-g1) - omega(z+g2)``.

    The interpolant is taken as zero outside the node range and for negative
    arguments (the cutoff image), matching the derivative of
    :func:`velocity_z` away from kinks.
    """
    zq = np.asarray(z, dtype=float)
    p = zq - params.gamma1
    q = zq + params.gamma2
    t1 = np.where(p > 0.0, table.interp(np.maximum(p, 0.0)), 0.0)
    t2 = np.where(q > 0.0, table.interp(np.maximum(q, 0.0)), 0.0)
    return _match_scalar(2.0 * t1 - t2, z)


def dx_velocity(x, table: PrefixTable, params: ModelParams):
    """Closed-form spatial derivative of :func:`velocity_x` on (0, 1).

    Terms whose clamp froze the corresponding integral limit vanish; at a
    clamp corner the one-sided limit from the right applies.
    """
    xq = np.asarray(x, dtype=float)
    if np.any(xq <= 0.0) or np.any(xq >= 1.0):
        raise DomainError("dx_velocity requires positions in (0, 1)")
    u = velocity_x(xq, table, params)
    b1 = params.beta1 * xq
    b2 = params.beta2 * xq
    t1 = np.where(b1 < 1.0, table.interp(np.minimum(b1, 1.0)), 0.0)
    t2 = np.where(b2 < 1.0, table.interp(np.minimum(b2, 1.0)), 0.0)
    return _match_scalar(u / xq + 2.0 * t1 - t2, x)
