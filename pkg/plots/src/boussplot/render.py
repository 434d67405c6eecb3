"""Render the four report figures and their numeric overlay CSVs.

Rendering is read-only on the bundle: figures and overlays go to the output
directory, and every overlay CSV contains exactly the series drawn in the
corresponding figure (tests assert on the overlays, not on pixels).
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bundle import BundleError, ReportBundle

FIGSIZE = (9.0, 3.2)
DPI = 110

X_WARMUP = "x_warmup"


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    f = float(v)
    if math.isnan(f):
        return ""
    if math.isinf(f):
        return "inf" if f > 0 else "-inf"
    return repr(f)


def _write_csv(path: Path, header, columns) -> None:
    n = len(columns[0])
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(_fmt(col[i]) for col in columns))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _log_interp(tq, t_grid, values):
    """Resample a positive curve onto query times in log space (display only)."""
    with np.errstate(divide="ignore"):
        return np.exp(np.interp(tq, t_grid, np.log(values)))


def render_indicators(bundle: ReportBundle, outdir: Path) -> None:
    """Figure 1: delta(t) and sup omega on log scale plus the oracle overlay."""
    fr = bundle.frames.columns
    pr = bundle.probes
    if pr.t.size != fr["t"].size or not np.array_equal(pr.t, fr["t"]):
        raise BundleError(f"probes.csv frame times disagree with frames.csv in {bundle.root}")

    warm = bundle.frame_kind == X_WARMUP
    if warm:
        if bundle.oracle_g is None:
            raise BundleError(f"missing input: {bundle.root / 'oracle_g.csv'}")
        j = int(np.argmin(np.abs(pr.labels - bundle.summary["spec"]["plateau"][0])))
        probe_series = 1.0 / pr.phi[:, j]
        g = bundle.oracle_g.columns
        mask = fr["t"] <= g["t"][-1]
        bound = np.full(fr["t"].shape, np.nan)
        bound[mask] = _log_interp(fr["t"][mask], g["t"], g["G"])
        probe_name, bound_name = "recip_probe_position", "G_bound"
    else:
        if bundle.oracle_gamma is None:
            raise BundleError(f"missing input: {bundle.root / 'oracle_gamma.csv'}")
        L4 = bundle.summary["spec"]["L4"]
        j = int(np.argmin(np.abs(pr.labels - L4)))
        probe_series = pr.phi[:, j]
        ga = bundle.oracle_gamma.columns
        sel = ga["z"] == L4
        bound = np.full(fr["t"].shape, np.nan)
        mask = fr["t"] <= ga["t"][sel][-1]
        bound[mask] = np.interp(fr["t"][mask], ga["t"][sel], ga["Gamma"][sel])
        probe_name, bound_name = "support_top_position", "Gamma_bound"

    fig, axes = plt.subplots(1, 3, figsize=FIGSIZE, dpi=DPI)
    axes[0].semilogy(fr["t"], fr["delta_x"], color="tab:blue")
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("support distance")
    axes[1].semilogy(fr["t"], np.maximum(fr["sup_omega"], 1e-300), color="tab:red")
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("sup vorticity")
    if warm:
        axes[2].semilogy(pr.t, probe_series, label="1/position at plateau probe", color="tab:green")
        axes[2].semilogy(fr["t"], bound, label="comparison bound", ls="--", color="k")
    else:
        axes[2].plot(pr.t, probe_series, label="support-top position", color="tab:green")
        axes[2].plot(fr["t"], bound, label="trajectory upper bound", ls="--", color="k")
    axes[2].set_xlabel("t")
    axes[2].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(outdir / "indicators.png")
    plt.close(fig)

    _write_csv(
        outdir / "overlay_indicators.csv",
        ("t", "delta_x", "sup_omega", probe_name, bound_name),
        (fr["t"], fr["delta_x"], fr["sup_omega"], probe_series, bound),
    )


def render_stretch_heatmap(bundle: ReportBundle, outdir: Path) -> None:
    """Figure 2: the deformation growth rate over (probe label, time)."""
    pr = bundle.probes
    fig, ax = plt.subplots(figsize=(5.2, 3.6), dpi=DPI)
    mesh = ax.pcolormesh(pr.t, pr.labels, pr.K.T, shading="nearest", cmap="RdBu_r")
    fig.colorbar(mesh, ax=ax, label="deformation growth rate")
    ax.set_xlabel("t")
    ax.set_ylabel("probe label")
    fig.tight_layout()
    fig.savefig(outdir / "stretch_heatmap.png")
    plt.close(fig)

    t_long = np.repeat(pr.t, pr.labels.size)
    z_long = np.tile(pr.labels, pr.t.size)
    _write_csv(outdir / "overlay_stretch.csv", ("t", "z", "K"), (t_long, z_long, pr.K.reshape(-1)))


def render_phase_diagram(bundle: ReportBundle, outdir: Path) -> None:
    """Figure 3: sweep cells over (beta1, beta2) with the beta1 = 2 beta2 line."""
    if bundle.sweep is None:
        raise BundleError(f"missing input: {bundle.root / 'sweep.csv'}")
    sw = bundle.sweep
    colors = {"blowup": "tab:red", "regular_horizon": "tab:blue", "aborted": "0.6"}
    fig, ax = plt.subplots(figsize=(4.6, 3.6), dpi=DPI)
    for cls in sorted(set(sw.classification)):
        m = np.array([c == cls for c in sw.classification])
        ax.scatter(sw.beta1[m], sw.beta2[m], s=220, marker="s",
                   color=colors.get(cls, "tab:orange"), label=cls)
    b1 = np.linspace(min(sw.beta1.min(), 1.0), sw.beta1.max() * 1.05, 50)
    ax.plot(b1, b1 / 2.0, "k--", lw=1, label="beta1 = 2 beta2")
    ax.set_xlabel("beta1")
    ax.set_ylabel("beta2")
    ax.legend(fontsize=7, loc="lower right")
    fig.tight_layout()
    fig.savefig(outdir / "phase_diagram.png")
    plt.close(fig)

    _write_csv(
        outdir / "overlay_phase.csv",
        ("beta1", "beta2", "classification", "T_est"),
        (sw.beta1, sw.beta2, sw.classification, sw.T_est),
    )


def render_deformation_panel(bundle: ReportBundle, outdir: Path) -> None:
    """Figure 4: deformation at probes; for log-frame runs the comparison
    solution f is overlaid at matched labels and times."""
    pr = bundle.probes
    spec = bundle.summary["spec"]
    warm = bundle.frame_kind == X_WARMUP

    if warm:
        sel = np.arange(pr.labels.size)
        f_matched = None
    else:
        sel = np.nonzero((pr.labels >= spec["L2"] - 1e-9) & (pr.labels <= spec["L3"] + 1e-9))[0]
        if sel.size == 0:
            raise BundleError(f"no probe labels inside [L2, L3] in {bundle.root / 'probes.csv'}")
        if bundle.oracle_f is None:
            raise BundleError(f"missing input: {bundle.root / 'oracle_f.csv'}")
        fo = bundle.oracle_f.columns
        zs = np.unique(fo["z"])
        ts = np.unique(fo["t"])
        grid = fo["f"].reshape(ts.size, zs.size) if fo["f"].size == ts.size * zs.size else None
        if grid is None:
            raise BundleError(f"ill-formed input (not a rectangular field): {bundle.root / 'oracle_f.csv'}")
        f_matched = np.empty((pr.t.size, sel.size))
        for col, j in enumerate(sel):
            per_t = np.array([np.interp(pr.labels[j], zs, grid[i]) for i in range(ts.size)])
            ok = np.isfinite(per_t)
            f_matched[:, col] = np.interp(pr.t, ts[ok], per_t[ok], right=np.nan)
            f_matched[pr.t > ts[-1], col] = np.nan

    fig, ax = plt.subplots(figsize=(5.4, 3.6), dpi=DPI)
    for col, j in enumerate(sel):
        ax.plot(pr.t, pr.D[:, j], label=f"deformation at z={pr.labels[j]:.3g}")
        if f_matched is not None:
            ax.plot(pr.t, f_matched[:, col], ls="--", lw=1,
                    label=f"lower bound f at z={pr.labels[j]:.3g}")
    ax.set_xlabel("t")
    ax.set_ylabel("deformation")
    if warm:
        ax.set_title("deformation at probes (comparison bound applies to log-frame runs)", fontsize=7)
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(outdir / "deformation_vs_f.png")
    plt.close(fig)

    t_long = np.repeat(pr.t, sel.size)
    z_long = np.tile(pr.labels[sel], pr.t.size)
    d_long = pr.D[:, sel].reshape(-1)
    if f_matched is None:
        _write_csv(outdir / "overlay_deformation.csv", ("t", "z", "D"), (t_long, z_long, d_long))
    else:
        _write_csv(
            outdir / "overlay_deformation.csv",
            ("t", "z", "D", "f"),
            (t_long, z_long, d_long, f_matched.reshape(-1)),
        )


def render_report(bundle: ReportBundle, outdir) -> list:
    """Emit the four figures plus their overlay CSVs; returns the image paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    render_indicators(bundle, outdir)
    render_stretch_heatmap(bundle, outdir)
    render_phase_diagram(bundle, outdir)
    render_deformation_panel(bundle, outdir)
    return [
        outdir / "indicators.png",
        outdir / "stretch_heatmap.png",
        outdir / "phase_diagram.png",
        outdir / "deformation_vs_f.png",
    ]
