"""Bundle fixtures generated through the simulator's public CLI.

The plots package consumes the primary only through its file formats, so the
fixtures shell out to ``python -m bousslab`` to produce real bundles.
"""

import os
import subprocess
import sys

import pytest

WARMUP_CFG = """
[model]
beta1 = 1.0
beta2 = 1.0

[data]
frame = "x_warmup"
markers = 512

[solver]
t_end = 6.0
omega_cap = 1e6
frame_stride = 8
"""

SWEEP_CFG = """
[model]
beta1 = 1.2
beta2 = 0.9

[data]
markers = 256

[solver]
t_end = 4e-3
frame_stride = 16

[sweep]
beta1 = [1.0, 1.2, 1.6]
beta2 = [0.8, 0.9, 1.0]
workers = 2
"""

DESK_CFG = """
[model]
beta1 = 1.2
beta2 = 0.9

[data]
markers = 512

[solver]
t_end = 5e-3
frame_stride = 1
"""


def _bousslab(command, cfg_path, outdir):
    env = dict(os.environ, OUTPUT_DIR=str(outdir))
    proc = subprocess.run(
        [sys.executable, "-m", "bousslab", command, str(cfg_path)],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0, f"bousslab {command} failed: {proc.stderr}"


@pytest.fixture(scope="session")
def sweep_csv(tmp_path_factory):
    root = tmp_path_factory.mktemp("sweep_out")
    cfg = root / "sweep.toml"
    cfg.write_text(SWEEP_CFG)
    _bousslab("sweep", cfg, root)
    return root / "sweep.csv"


@pytest.fixture(scope="session")
def warmup_bundle(tmp_path_factory, sweep_csv):
    """Warm-up run + oracle curves + the 3x3 sweep, in one directory."""
    import shutil

    root = tmp_path_factory.mktemp("warmup_bundle")
    cfg = root / "warmup.toml"
    cfg.write_text(WARMUP_CFG)
    _bousslab("run", cfg, root)
    _bousslab("oracles", cfg, root)
    shutil.copy(sweep_csv, root / "sweep.csv")
    return root


@pytest.fixture(scope="session")
def desk_bundle(tmp_path_factory, sweep_csv):
    """Log-frame desk run + oracle curves + a sweep, in one directory."""
    import shutil

    root = tmp_path_factory.mktemp("desk_bundle")
    cfg = root / "desk.toml"
    cfg.write_text(DESK_CFG)
    _bousslab("run", cfg, root)
    _bousslab("oracles", cfg, root)
    shutil.copy(sweep_csv, root / "sweep.csv")
    return root
