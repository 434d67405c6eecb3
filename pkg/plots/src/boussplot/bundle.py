"""Bundle discovery and strict parsing of the simulator's output files.

A bundle directory holds the artifacts of one run plus the sweep and oracle
curves: ``frames.csv``, ``summary.json``, ``probes.csv``, ``sweep.csv``,
``oracle_g.csv`` / ``oracle_gamma.csv`` / ``oracle_f.csv``.  Parsing is
read-only and validates the headers against the emitter's schemas; any
missing or ill-formed input raises :class:`BundleError` naming the path.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FRAME_COLUMNS = (
    "t", "delta_x", "psi", "sup_omega", "sup_dzrho", "sup_dxu",
    "min_K", "max_K", "min_D", "I_omega", "I_drho", "I_dxu", "dt", "quality",
)


class BundleError(ValueError):
    """A bundle input is missing or does not parse; the message names the path."""


def _read_csv(path: Path, expected_header=None):
    if not path.is_file():
        raise BundleError(f"missing input: {path}")
    text = path.read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln]
    if not lines:
        raise BundleError(f"empty input: {path}")
    header = lines[0].split(",")
    if expected_header is not None and tuple(header) != tuple(expected_header):
        raise BundleError(f"ill-formed input (unexpected header): {path}")
    rows = [ln.split(",") for ln in lines[1:]]
    if any(len(r) != len(header) for r in rows):
        raise BundleError(f"ill-formed input (ragged rows): {path}")
    return header, rows


def _float_columns(header, rows, skip=()):
    out = {}
    for j, name in enumerate(header):
        if name in skip:
            out[name] = [r[j] for r in rows]
            continue
        try:
            out[name] = np.array([float(r[j]) if r[j] else np.nan for r in rows])
        except ValueError as exc:
            raise BundleError(f"ill-formed numeric column {name!r}") from exc
    return out


@dataclass
class Frames:
    columns: dict

    @property
    def t(self):
        return self.columns["t"]


@dataclass
class Probes:
    t: np.ndarray
    labels: np.ndarray
    phi: np.ndarray  # (n_frames, n_labels)
    D: np.ndarray
    K: np.ndarray


@dataclass
class OracleSeries:
    columns: dict


@dataclass
class Sweep:
    beta1: np.ndarray
    beta2: np.ndarray
    classification: list
    T_est: np.ndarray


@dataclass
class ReportBundle:
    """Parsed inputs of one report; construction validates every file."""

    root: Path
    frames: Frames
    summary: dict
    probes: Probes
    sweep: Sweep | None = None
    oracle_g: OracleSeries | None = None
    oracle_gamma: OracleSeries | None = None
    oracle_f: OracleSeries | None = None

    @property
    def frame_kind(self) -> str:
        return self.summary["spec"]["frame"]


def _load_frames(path: Path) -> Frames:
    header, rows = _read_csv(path, expected_header=FRAME_COLUMNS)
    return Frames(_float_columns(header, rows))


def _load_probes(path: Path) -> Probes:
    header, rows = _read_csv(path)
    if header[0] != "t":
        raise BundleError(f"ill-formed input (probes must start with t): {path}")
    pat = re.compile(r"^(phi|D|K)\[(.+)\]$")
    groups = {"phi": [], "D": [], "K": []}
    labels = []
    for j, name in enumerate(header[1:], start=1):
        m = pat.match(name)
        if not m:
            raise BundleError(f"ill-formed probes header column {name!r}: {path}")
        groups[m.group(1)].append(j)
        if m.group(1) == "phi":
            labels.append(float(m.group(2)))
    n = len(labels)
    if not (len(groups["phi"]) == len(groups["D"]) == len(groups["K"]) == n) or n == 0:
        raise BundleError(f"ill-formed probes header (unbalanced groups): {path}")
    data = np.array([[float(v) for v in r] for r in rows])
    return Probes(
        t=data[:, 0],
        labels=np.asarray(labels),
        phi=data[:, groups["phi"]],
        D=data[:, groups["D"]],
        K=data[:, groups["K"]],
    )


def _load_summary(path: Path) -> dict:
    if not path.is_file():
        raise BundleError(f"missing input: {path}")
    try:
        s = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleError(f"ill-formed input (JSON): {path}") from exc
    for key in ("params", "spec", "classification", "cause"):
        if key not in s:
            raise BundleError(f"ill-formed summary (missing {key!r}): {path}")
    return s


def _load_sweep(path: Path) -> Sweep:
    header, rows = _read_csv(
        path, expected_header=("beta1", "beta2", "classification", "T_est", "min_K", "t_stop", "steps")
    )
    cols = _float_columns(header, rows, skip=("classification",))
    return Sweep(
        beta1=cols["beta1"],
        beta2=cols["beta2"],
        classification=cols["classification"],
        T_est=cols["T_est"],
    )


def _load_oracle(path: Path, expected_header) -> OracleSeries:
    header, rows = _read_csv(path, expected_header=expected_header)
    return OracleSeries(_float_columns(header, rows))


def load_bundle(root) -> ReportBundle:
    root = Path(root)
    if not root.is_dir():
        raise BundleError(f"missing input: {root}")
    frames = _load_frames(root / "frames.csv")
    summary = _load_summary(root / "summary.json")
    probes = _load_probes(root / "probes.csv")

    bundle = ReportBundle(root=root, frames=frames, summary=summary, probes=probes)
    if (root / "sweep.csv").is_file():
        bundle.sweep = _load_sweep(root / "sweep.csv")
    if (root / "oracle_g.csv").is_file():
        bundle.oracle_g = _load_oracle(root / "oracle_g.csv", ("t", "G", "v"))
    if (root / "oracle_gamma.csv").is_file():
        bundle.oracle_gamma = _load_oracle(root / "oracle_gamma.csv", ("z", "t", "Gamma"))
    if (root / "oracle_f.csv").is_file():
        bundle.oracle_f = _load_oracle(root / "oracle_f.csv", ("z", "t", "f"))
    return bundle
