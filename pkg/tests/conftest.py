"""Session fixtures shared by the acceptance suite.

Each expensive artifact (the desk run, the warm-up runs, the sweep) is
computed once per session and carries its wall-clock cost so the acceptance
tests can check their runtime budgets.
"""

import time
from dataclasses import dataclass

import numpy as np
import pytest

from bousslab.cli import execute_sweep
from bousslab.config import parse_config
from bousslab.diagnostics import RunChecks
from bousslab.model import InitialDataSpec, X_WARMUP, make_params
from bousslab.oracles import (
    gamma_closed_form,
    gamma_tstar,
    solve_f_picard,
    solve_tau0,
    solve_warmup_g,
)
from bousslab.solver import StepControl, run_simulation

DESK_PARAMS = make_params(1.2, 0.9)
DESK_SPEC = InitialDataSpec()  # the default ladder 2 / 8 / 9 / 12 / 14, 4096 markers


@dataclass
class Timed:
    value: object
    seconds: float


def _timed(fn):
    t0 = time.time()
    out = fn()
    return Timed(out, time.time() - t0)


@pytest.fixture(scope="session")
def tau0_desk():
    return solve_tau0(DESK_PARAMS, DESK_SPEC.L1, DESK_SPEC.L0)


@pytest.fixture(scope="session")
def g_curve():
    return solve_warmup_g()


@pytest.fixture(scope="session")
def desk_run(tau0_desk):
    """The shared desk-scale z run with all comparison checks armed."""

    def build():
        ctrl = StepControl(t_end=2e-2, frame_stride=8)
        f_oracle = solve_f_picard(
            DESK_PARAMS.stretch_constant, DESK_SPEC.L2, DESK_SPEC.L3, ctrl.t_end,
            n_z=65, mol_tol=1e-9,
        )
        checks = RunChecks(
            DESK_PARAMS,
            DESK_SPEC,
            gamma_probes=np.linspace(1.0, DESK_SPEC.L4, 16),
            gamma_eval=gamma_closed_form,
            gamma_tstar=gamma_tstar,
            tau0=tau0_desk.tau0,
            f_eval=f_oracle.eval,
        )
        return run_simulation(DESK_PARAMS, DESK_SPEC, ctrl, checks=checks)

    return _timed(build)


@pytest.fixture(scope="session")
def tau0_fine_run(tau0_desk):
    """Desk configuration integrated only over [0, tau0] with per-step frames."""

    def build():
        t0 = tau0_desk.tau0
        ctrl = StepControl(
            t_end=t0, dt_init=t0 / 200.0, dt_max=t0 / 48.0, dt_min=1e-16, frame_stride=1
        )
        checks = RunChecks(DESK_PARAMS, DESK_SPEC, tau0=t0)
        return run_simulation(DESK_PARAMS, DESK_SPEC, ctrl, checks=checks)

    return _timed(build)


@pytest.fixture(scope="session")
def warmup_run(g_curve):
    def build():
        spec = InitialDataSpec(frame=X_WARMUP, n_markers=1024)
        p = make_params(1.0, 1.0)
        checks = RunChecks(
            p, spec,
            g_eval=g_curve.interpolator(log_space=True),
            g_t_max=float(g_curve.grid[-1]),
        )
        return run_simulation(
            p, spec, StepControl(t_end=6.0, frame_stride=8), probe_labels=[1.0 / 3.0], checks=checks
        )

    return _timed(build)


@pytest.fixture(scope="session")
def warmup_refined():
    def build():
        spec = InitialDataSpec(frame=X_WARMUP, n_markers=2048)
        p = make_params(1.0, 1.0)
        return run_simulation(p, spec, StepControl(t_end=6.0, frame_stride=8, rk_tol=1e-10))

    return _timed(build)


SWEEP_CONFIG = """
[model]
beta1 = 1.2
beta2 = 0.9

[data]
markers = 1024

[solver]
t_end = 5e-3
frame_stride = 16

[sweep]
beta1 = [1.0, 1.2, 1.6]
beta2 = [0.8, 0.9, 1.0]
"""


@pytest.fixture(scope="session")
def sweep_files(tmp_path_factory):
    def build():
        root = tmp_path_factory.mktemp("sweep")
        cfg = parse_config(SWEEP_CONFIG)
        execute_sweep(cfg, root / "w1", workers=1)
        execute_sweep(cfg, root / "w2", workers=2)
        return (root / "w1" / "sweep.csv").read_bytes(), (root / "w2" / "sweep.csv").read_bytes()

    return _timed(build)
