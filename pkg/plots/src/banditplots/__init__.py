"""Figure rendering for gpbandits run outputs."""

from .io import SchemaError, load_summary, load_trace
from .render import FIGURE_KINDS, build_series, render

__version__ = "0.1.0"

__all__ = [
    "FIGURE_KINDS",
    "SchemaError",
    "build_series",
    "load_summary",
    "load_trace",
    "render",
]
