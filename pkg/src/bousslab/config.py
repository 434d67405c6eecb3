"""Run configuration: a TOML subset (sections, scalars, lists) parsed strictly.

Unknown keys are rejected so typos fail loudly; every model/data/solver
constraint is validated before a run starts, and violations name the
constraint in the error message.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .model import ConfigurationError, InitialDataSpec, ModelParams, make_params, validate_spec
from .solver import StepControl

_SECTIONS = ("model", "data", "solver", "output", "sweep", "checks")

_DATA_KEYS = {
    "L0", "L1", "L2", "L3", "L4", "frame", "markers", "plateau", "rho_amplitude", "margin",
}
_SOLVER_KEYS = {
    "dt_init", "dt_min", "dt_max", "dt_safety", "rk_tol", "omega_cap", "h_max",
    "refine_tol", "t_end", "frame_stride", "max_markers", "max_steps",
}
_OUTPUT_KEYS = {"dir", "emit_profile"}
_MODEL_KEYS = {"beta1", "beta2", "epsilon"}
_SWEEP_KEYS = {"beta1", "beta2", "workers"}
_CHECKS_KEYS = {"probes", "enable"}


@dataclass
class RunConfig:
    """Validated parameters, data spec, and step control for one run."""

    params: ModelParams
    spec: InitialDataSpec
    ctrl: StepControl
    outdir: Path = Path(".")
    emit_profile: bool = False
    probes: int = 16
    checks_enabled: bool = True
    sweep_beta1: list = field(default_factory=list)
    sweep_beta2: list = field(default_factory=list)
    workers: int = 1


def _check_keys(section: str, table: dict, allowed: set) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{section}]: {sorted(unknown)}")


def _as_float(section: str, table: dict, key: str, default=None):
    if key not in table:
        if default is None:
            raise ConfigurationError(f"[{section}] requires key '{key}'")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"[{section}].{key} must be a number, got {v!r}")
    return float(v)


def parse_config(text: str) -> RunConfig:
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigurationError(f"config is not valid TOML: {exc}") from exc
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown section(s): {sorted(unknown)}")

    model = raw.get("model", {})
    _check_keys("model", model, _MODEL_KEYS)
    beta1 = _as_float("model", model, "beta1")
    beta2 = _as_float("model", model, "beta2")
    epsilon = _as_float("model", model, "epsilon", default=-1.0)
    params = make_params(beta1, beta2, None if epsilon < 0 else epsilon)

    data = raw.get("data", {})
    _check_keys("data", data, _DATA_KEYS)
    plateau = data.get("plateau", [1.0 / 3.0, 2.0 / 3.0])
    if not (isinstance(plateau, list) and len(plateau) == 2):
        raise ConfigurationError(f"[data].plateau must be a two-element list, got {plateau!r}")
    frame = data.get("frame", "z_model")
    if not isinstance(frame, str):
        raise ConfigurationError(f"[data].frame must be a string, got {frame!r}")
    markers = data.get("markers", 4096)
    if isinstance(markers, bool) or not isinstance(markers, int):
        raise ConfigurationError(f"[data].markers must be an integer, got {markers!r}")
    spec = InitialDataSpec(
        L0=_as_float("data", data, "L0", 2.0),
        L1=_as_float("data", data, "L1", 8.0),
        L2=_as_float("data", data, "L2", 9.0),
        L3=_as_float("data", data, "L3", 12.0),
        L4=_as_float("data", data, "L4", 14.0),
        frame=frame,
        n_markers=markers,
        warmup_plateau=(float(plateau[0]), float(plateau[1])),
        rho_amplitude=_as_float("data", data, "rho_amplitude", 1.0),
        margin=_as_float("data", data, "margin", 1.0),
    )
    validate_spec(spec, params)

    solver = raw.get("solver", {})
    _check_keys("solver", solver, _SOLVER_KEYS)
    ctrl = StepControl(
        dt_init=_as_float("solver", solver, "dt_init", 1e-6),
        dt_min=_as_float("solver", solver, "dt_min", 1e-14),
        dt_max=(_as_float("solver", solver, "dt_max") if "dt_max" in solver else None),
        dt_safety=_as_float("solver", solver, "dt_safety", 0.8),
        rk_tol=_as_float("solver", solver, "rk_tol", 1e-9),
        omega_cap=_as_float("solver", solver, "omega_cap", 1e8),
        h_max=(_as_float("solver", solver, "h_max") if "h_max" in solver else None),
        refine_tol=_as_float("solver", solver, "refine_tol", 0.05),
        t_end=_as_float("solver", solver, "t_end", 1e-2),
        frame_stride=int(solver.get("frame_stride", 16)),
        max_markers=int(solver.get("max_markers", 262144)),
        max_steps=int(solver.get("max_steps", 2_000_000)),
    )
    ctrl.validate()

    output = raw.get("output", {})
    _check_keys("output", output, _OUTPUT_KEYS)
    outdir = Path(output.get("dir", "."))
    emit_profile = bool(output.get("emit_profile", False))

    sweep = raw.get("sweep", {})
    _check_keys("sweep", sweep, _SWEEP_KEYS)
    sweep_beta1 = [float(v) for v in sweep.get("beta1", [])]
    sweep_beta2 = [float(v) for v in sweep.get("beta2", [])]
    workers = int(sweep.get("workers", 1))
    if workers < 1:
        raise ConfigurationError(f"[sweep].workers must be >= 1, got {workers}")

    checks = raw.get("checks", {})
    _check_keys("checks", checks, _CHECKS_KEYS)
    probes = int(checks.get("probes", 16))
    checks_enabled = bool(checks.get("enable", True))

    return RunConfig(
        params=params,
        spec=spec,
        ctrl=ctrl,
        outdir=outdir,
        emit_profile=emit_profile,
        probes=probes,
        checks_enabled=checks_enabled,
        sweep_beta1=sweep_beta1,
        sweep_beta2=sweep_beta2,
        workers=workers,
    )


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    return parse_config(p.read_text(encoding="utf-8"))
