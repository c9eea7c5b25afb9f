"""Figure rendering for sausagelab CSV sweeps."""

from .render import (FIGURE_KINDS, FigureSpec, load_spec_file,
                     render_figures)
from .schema import CSV_COLUMNS, SchemaError, read_rows

__all__ = ["CSV_COLUMNS", "FIGURE_KINDS", "FigureSpec", "SchemaError",
           "load_spec_file", "read_rows", "render_figures"]

__version__ = "0.1.0"
