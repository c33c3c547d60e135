"""CSV readers with hard schema checks."""

import csv
from pathlib import Path

from .errors import EmptyInput, SchemaMismatch


def read_rows(path, required_columns):
    """Rows as dicts; every required column must exist, and data must be nonempty."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required_columns if c not in header]
        if missing:
            raise SchemaMismatch(f"{path}: missing columns {missing}; found {header}")
        rows = list(reader)
    if not rows:
        raise EmptyInput(f"{path}: no data rows")
    return rows, header


def charge_columns(header):
    """Site-charge columns q0..q{n-1}, in site order."""
    cols = [c for c in header if c.startswith("q") and c[1:].isdigit()]
    return sorted(cols, key=lambda c: int(c[1:]))
