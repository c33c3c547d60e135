class PlotError(Exception):
    """Base class for rendering errors."""


class SchemaMismatch(PlotError):
    """Input CSV is missing columns required by the figure kind."""


class EmptyInput(PlotError):
    """Input CSV has a header but no data rows."""
