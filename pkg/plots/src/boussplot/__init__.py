"""Report figures for bousslab run, sweep, and oracle outputs."""

from .bundle import BundleError, ReportBundle, load_bundle
from .render import render_report

__version__ = "0.1.0"
