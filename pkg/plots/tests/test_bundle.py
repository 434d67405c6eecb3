import numpy as np
import pytest

from boussplot.bundle import BundleError, load_bundle


def test_missing_directory_names_path(tmp_path):
    with pytest.raises(BundleError, match="nowhere"):
        load_bundle(tmp_path / "nowhere")


def test_missing_frames_names_path(tmp_path):
    with pytest.raises(BundleError, match="frames.csv"):
        load_bundle(tmp_path)


def test_bad_frames_header_names_path(tmp_path):
    (tmp_path / "frames.csv").write_text("a,b,c\n1,2,3\n")
    with pytest.raises(BundleError, match="frames.csv"):
        load_bundle(tmp_path)


def test_warmup_bundle_parses(warmup_bundle):
    b = load_bundle(warmup_bundle)
    assert b.frame_kind == "x_warmup"
    assert b.summary["classification"] == "blowup"
    assert b.probes.labels.size == 2
    assert b.probes.phi.shape == (b.frames.t.size, 2)
    assert b.sweep is not None and b.sweep.beta1.size == 9
    assert b.oracle_g is not None


def test_desk_bundle_parses(desk_bundle):
    b = load_bundle(desk_bundle)
    assert b.frame_kind == "z_model"
    assert b.probes.labels.size == 16
    assert b.oracle_gamma is not None and b.oracle_f is not None
