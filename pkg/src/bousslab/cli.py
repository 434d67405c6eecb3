"""Command-line entry points: run, sweep, oracles, check.

Exit codes: 0 success, 2 configuration error, 3 numerical abort (the run was
classified ``aborted``), 4 a requested check failed (``check`` subcommand).

All emitted files are deterministic for a fixed configuration: floats are
serialized as shortest round-trip decimals (Python ``repr``), reductions are
fixed-order, and sweep rows are assembled in (beta1 outer, beta2 inner) order
regardless of worker scheduling.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .diagnostics import RunChecks, detect_blowup
from .model import X_WARMUP, Z_MODEL, ConfigurationError, rho0_profile
from .oracles import (
    OracleFailure,
    gamma_closed_form,
    gamma_tstar,
    solve_f_picard,
    solve_gamma,
    solve_tau0,
    solve_warmup_g,
)
from .solver import SolverError, run_simulation

FRAME_COLUMNS = (
    "t", "delta_x", "psi", "sup_omega", "sup_dzrho", "sup_dxu",
    "min_K", "max_K", "min_D", "I_omega", "I_drho", "I_dxu", "dt", "quality",
)


def _fmt(v) -> str:
    """Shortest round-trip decimal for floats; plain text otherwise."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (bool, str)) or obj is None:
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_frames_csv(path: Path, frames) -> None:
    lines = [",".join(FRAME_COLUMNS)]
    for f in frames:
        lines.append(",".join(_fmt(getattr(f, c)) for c in FRAME_COLUMNS))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _prepare_checks(cfg: RunConfig):
    params, spec, ctrl = cfg.params, cfg.spec, cfg.ctrl
    aux: dict = {"tau0": None, "gamma_tstar": None, "T_G": None}
    if spec.frame == Z_MODEL:
        # the positivity-window and deformation bounds assume the canonical
        # plateau at height 1; other amplitudes void their hypotheses
        canonical = spec.rho_amplitude == 1.0
        tau0 = None
        if params.blow_up_range and canonical:
            tau0 = solve_tau0(params, spec.L1, spec.L0).tau0
        f_eval = None
        if params.stretch_constant > 0.0 and canonical:
            f_oracle = solve_f_picard(
                params.stretch_constant, spec.L2, spec.L3, ctrl.t_end, n_z=65, mol_tol=1e-9
            )
            f_eval = f_oracle.eval
        checks = RunChecks(
            params,
            spec,
            gamma_probes=np.linspace(1.0, spec.L4, cfg.probes),
            gamma_eval=gamma_closed_form,
            gamma_tstar=gamma_tstar,
            tau0=tau0,
            f_eval=f_eval,
        )
        aux["tau0"] = tau0
        aux["gamma_tstar"] = gamma_tstar(spec.L4)
    else:
        g_curve = solve_warmup_g()
        checks = RunChecks(
            params,
            spec,
            g_eval=g_curve.interpolator(log_space=True),
            g_t_max=float(g_curve.grid[-1]),
        )
        aux["T_G"] = g_curve.blowup_time
    return checks, aux


def _probe_labels(cfg: RunConfig):
    if cfg.spec.frame == Z_MODEL:
        return np.linspace(1.0, cfg.spec.L4, cfg.probes)
    return np.asarray(cfg.spec.warmup_plateau)


def write_probes_csv(path: Path, result) -> None:
    """Probe trajectories at frame times: position, deformation, growth rate
    per probe label (labels were snapped to existing markers)."""
    labels = [repr(float(l)) for l in result.probe_labels]
    header = ["t"]
    for prefix in ("phi", "D", "K"):
        header.extend(f"{prefix}[{l}]" for l in labels)
    lines = [",".join(header)]
    for i, t in enumerate(result.probe_t):
        row = [_fmt(t)]
        row.extend(_fmt(v) for v in result.probes[i])
        row.extend(_fmt(v) for v in result.probe_D[i])
        row.extend(_fmt(v) for v in result.probe_K[i])
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def execute_run(cfg: RunConfig, outdir: Path, assert_checks: bool = False) -> int:
    """Run one configuration, writing frames.csv / summary.json / probes.csv
    (/ profile.csv)."""
    outdir.mkdir(parents=True, exist_ok=True)
    checks, aux = (None, {"tau0": None, "gamma_tstar": None, "T_G": None})
    if cfg.checks_enabled:
        checks, aux = _prepare_checks(cfg)

    result = run_simulation(cfg.params, cfg.spec, cfg.ctrl, probe_labels=_probe_labels(cfg), checks=checks)
    report = detect_blowup(result.frames, result.cause)

    write_frames_csv(outdir / "frames.csv", result.frames)
    write_probes_csv(outdir / "probes.csv", result)

    summary = {
        "params": {
            "beta1": cfg.params.beta1,
            "beta2": cfg.params.beta2,
            "gamma1": cfg.params.gamma1,
            "gamma2": cfg.params.gamma2,
            "epsilon": cfg.params.epsilon,
            "blow_up_range": cfg.params.blow_up_range,
        },
        "spec": {
            "L0": cfg.spec.L0, "L1": cfg.spec.L1, "L2": cfg.spec.L2,
            "L3": cfg.spec.L3, "L4": cfg.spec.L4,
            "frame": cfg.spec.frame,
            "n_markers": cfg.spec.n_markers,
            "plateau": list(cfg.spec.warmup_plateau),
            "rho_amplitude": cfg.spec.rho_amplitude,
            "margin": cfg.spec.margin,
        },
        "solver": {
            "dt_init": cfg.ctrl.dt_init, "dt_min": cfg.ctrl.dt_min, "dt_max": cfg.ctrl.dt_max,
            "dt_safety": cfg.ctrl.dt_safety, "rk_tol": cfg.ctrl.rk_tol,
            "omega_cap": cfg.ctrl.omega_cap, "h_max": cfg.ctrl.h_max,
            "refine_tol": cfg.ctrl.refine_tol, "t_end": cfg.ctrl.t_end,
            "frame_stride": cfg.ctrl.frame_stride,
        },
        "classification": report.classification,
        "T_est": report.T_est,
        "cause": result.cause,
        "tau0": aux["tau0"],
        "gamma_tstar": aux["gamma_tstar"],
        "T_G": aux["T_G"],
        "t_stop": result.t_stop,
        "steps": result.steps,
        "final_markers": result.final_state.n,
        "checks": checks.summary() if checks is not None else None,
    }
    (outdir / "summary.json").write_text(
        json.dumps(_json_safe(summary), indent=1) + "\n", encoding="utf-8"
    )

    if cfg.emit_profile:
        st = result.final_state
        rho0 = rho0_profile(st.z, cfg.spec)
        lines = ["z,rho0,phi_final,omega_final,D_final"]
        for i in range(st.n):
            lines.append(
                ",".join(_fmt(v) for v in (st.z[i], rho0[i], st.phi[i], st.omega[i], st.D[i]))
            )
        (outdir / "profile.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    print(
        f"run: cause={result.cause} classification={report.classification} "
        f"t_stop={_fmt(result.t_stop)} steps={result.steps} frames={len(result.frames)}"
    )
    if report.classification == "aborted":
        print(f"numerical abort: {report.reason or result.cause}", file=sys.stderr)
        return 3
    if assert_checks and checks is not None:
        failed = [k for k, v in checks.summary().items() if v is not None and not v["pass"]]
        if failed:
            print(f"check failure: {', '.join(failed)}", file=sys.stderr)
            return 4
    return 0


def _sweep_cell(args):
    """One (beta1, beta2) cell; returns a row dict.  Top-level for pickling."""
    b1, b2, cfg = args
    from .model import make_params, validate_spec

    try:
        params = make_params(b1, b2)
        validate_spec(cfg.spec, params)
        result = run_simulation(params, cfg.spec, cfg.ctrl)
        report = detect_blowup(result.frames, result.cause)
        min_k = min(f.min_K for f in result.frames)
        return {
            "beta1": b1, "beta2": b2,
            "classification": report.classification,
            "T_est": report.T_est,
            "min_K": min_k,
            "t_stop": result.t_stop,
            "steps": result.steps,
        }
    except Exception as exc:  # per-cell failures are recorded in-row
        return {
            "beta1": b1, "beta2": b2,
            "classification": "aborted",
            "T_est": None, "min_K": None, "t_stop": None, "steps": None,
            "error": str(exc),
        }


def execute_sweep(cfg: RunConfig, outdir: Path, workers: int | None = None) -> int:
    """Grid of runs over [sweep].beta1 x [sweep].beta2, one deterministic CSV row each."""
    if not cfg.sweep_beta1 or not cfg.sweep_beta2:
        raise ConfigurationError("sweep requires non-empty [sweep].beta1 and [sweep].beta2 lists")
    outdir.mkdir(parents=True, exist_ok=True)
    n_workers = workers if workers is not None else cfg.workers
    cells = [(b1, b2, cfg) for b1 in cfg.sweep_beta1 for b2 in cfg.sweep_beta2]
    if n_workers <= 1:
        rows = [_sweep_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(_sweep_cell, cells))  # map preserves cell order

    header = "beta1,beta2,classification,T_est,min_K,t_stop,steps"
    lines = [header]
    for r in rows:
        lines.append(
            ",".join(
                (
                    _fmt(r["beta1"]), _fmt(r["beta2"]), r["classification"],
                    _fmt(r["T_est"]), _fmt(r["min_K"]), _fmt(r["t_stop"]), _fmt(r["steps"]),
                )
            )
        )
    (outdir / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    n_aborted = sum(1 for r in rows if r["classification"] == "aborted")
    print(f"sweep: {len(rows)} cells, {n_aborted} aborted -> {outdir / 'sweep.csv'}")
    return 0


def execute_oracles(cfg: RunConfig, outdir: Path) -> int:
    """Emit the comparison curves as CSV alongside a tau0 report."""
    outdir.mkdir(parents=True, exist_ok=True)
    spec = cfg.spec

    lines = ["z,t,Gamma"]
    for z in (spec.L0, spec.L1, spec.L2, spec.L3, spec.L4):
        curve = solve_gamma(z)
        for t, v in zip(curve.grid, curve.values):
            lines.append(f"{_fmt(z)},{_fmt(t)},{_fmt(v)}")
    (outdir / "oracle_gamma.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    g = solve_warmup_g()
    lines = ["t,G,v"]
    for t, gv, vv in zip(g.grid, g.values, g.extra["v"]):
        lines.append(f"{_fmt(t)},{_fmt(gv)},{_fmt(vv)}")
    (outdir / "oracle_g.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    tau_payload = None
    f_payload_lines = ["z,t,f"]
    if cfg.params.blow_up_range:
        tau = solve_tau0(cfg.params, spec.L1, spec.L0)
        tau_payload = {
            "tau0": tau.tau0,
            "tau_root": tau.tau_root,
            "residual_rel": tau.residual_rel,
            "tstar_3L1": tau.tstar_3L1,
            "caps_applied": tau.caps_applied,
        }
    if cfg.params.stretch_constant > 0.0:
        fo = solve_f_picard(cfg.params.stretch_constant, spec.L2, spec.L3, cfg.ctrl.t_end, n_z=33)
        for i, t in enumerate(fo.t):
            for j, z in enumerate(fo.z):
                v = fo.values[i, j]
                f_payload_lines.append(f"{_fmt(z)},{_fmt(t)},{_fmt(v) if math.isfinite(v) else 'inf'}")
    (outdir / "oracle_f.csv").write_text("\n".join(f_payload_lines) + "\n", encoding="utf-8")
    (outdir / "oracle_tau0.json").write_text(
        json.dumps(_json_safe(tau_payload), indent=1) + "\n", encoding="utf-8"
    )
    print(f"oracles -> {outdir}")
    return 0


def _resolve_outdir(cfg: RunConfig) -> Path:
    env = os.environ.get("OUTPUT_DIR")
    return Path(env) if env else cfg.outdir


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bousslab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "oracles", "check"):
        sp = sub.add_parser(name)
        sp.add_argument("config", help="path to a TOML run configuration")
        if name == "sweep":
            sp.add_argument("--workers", type=int, default=None, help="override [sweep].workers")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        outdir = _resolve_outdir(cfg)
        if args.command == "run":
            return execute_run(cfg, outdir, assert_checks=False)
        if args.command == "check":
            return execute_run(cfg, outdir, assert_checks=True)
        if args.command == "sweep":
            return execute_sweep(cfg, outdir, workers=args.workers)
        return execute_oracles(cfg, outdir)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, OracleFailure) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
