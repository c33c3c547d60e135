"""Figure rendering for diracsea CSV outputs.

Reads only the documented CSV schemas (plus meta.json); never touches the
simulator's internal state, so every figure is reproducible from archived
data alone.
"""

__version__ = "0.1.0"

from .errors import EmptyInput, PlotError, SchemaMismatch
from .render import FigureJob, render

__all__ = ["FigureJob", "render", "PlotError", "SchemaMismatch", "EmptyInput", "__version__"]
