"""
Turn a CSV of point locations into per-group empirical measures on a
regular grid.

Cells split the bounding box into cols x rows equal rectangles. A point on
an interior cell boundary goes to the lower-index cell; points on the box
edge belong to the edge cells. Rows with unparsable coordinates, missing
groups or points outside the box are skipped and counted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import IngestError
from .measures import EmpiricalMeasure, FiniteSpace, make_rect_grid, measure_from_counts

log = logging.getLogger(__name__)

# cell units
EDGE_TOL = 1e-9


@dataclass(frozen=True)
class BinnedDataset:
    cols: int
    rows: int
    bbox: Tuple[float, float, float, float]
    groups: Dict[str, EmpiricalMeasure]
    skipped: int = 0
    total_rows: int = 0
    space: FiniteSpace = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'space', make_rect_grid(self.cols, self.rows))
        for label, sample in self.groups.items():
            if sample.size != self.space.size:
                raise IngestError(f"group {label} has {sample.size} cells, grid has {self.space.size}")

    @property
    def labels(self):
        return list(self.groups)

    def select(self, labels):
        missing = [g for g in labels if g not in self.groups]
        if missing:
            raise IngestError(f"unknown groups: {', '.join(missing)}")
        return [self.groups[g] for g in labels]

    def to_dict(self):
        return {
            'grid': {'cols': self.cols, 'rows': self.rows, 'bbox': list(self.bbox)},
            'n_points': self.space.size,
            'skipped': self.skipped,
            'total_rows': self.total_rows,
            'groups': {label: {'counts': s.counts.tolist(), 'sample_size': s.sample_size}
                       for label, s in self.groups.items()},
        }

    @classmethod
    def from_dict(cls, payload):
        grid = payload['grid']
        groups = {label: EmpiricalMeasure(g['counts'], g['sample_size'])
                  for label, g in payload['groups'].items()}
        return cls(int(grid['cols']), int(grid['rows']), tuple(grid['bbox']), groups,
                   int(payload.get('skipped', 0)), int(payload.get('total_rows', 0)))


def _label_order(labels):
    """Numeric labels sort numerically, anything else lexically"""
    try:
        return sorted(labels, key=lambda s: float(s))
    except ValueError:
        return sorted(labels)


def cell_index(x, lo, hi, bins):
    """Cell of each coordinate; interior boundary ties go to the lower cell"""
    pos = (np.asarray(x, dtype=float) - lo) / (hi - lo) * bins
    edge = np.rint(pos)
    # within rounding of an edge counts as on it
    on_edge = np.abs(pos - edge) <= EDGE_TOL
    idx = np.where(on_edge, edge - 1, np.floor(pos)).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def ingest_points(csv_path, bbox, grid_rows, grid_cols, group_column, x_column, y_column,
                  by_month=False, groups: Optional[Sequence[str]] = None):
    """
    Bin point records into one EmpiricalMeasure per group.

    bbox is (x_min, x_max, y_min, y_max). With by_month the group column is
    parsed as timestamps and records are grouped by calendar month (1..12).
    """
    x_min, x_max, y_min, y_max = map(float, bbox)
    if not (x_max > x_min and y_max > y_min):
        raise IngestError(f"degenerate bounding box {bbox}")
    if grid_rows < 1 or grid_cols < 1:
        raise IngestError("grid must have at least one row and column")

    try:
        df = pd.read_csv(csv_path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise IngestError(f"File not found: {csv_path}")
    missing = [c for c in (group_column, x_column, y_column) if c not in df.columns]
    if missing:
        raise IngestError(f"missing columns in {csv_path}: {', '.join(missing)}")

    total = len(df)
    x = pd.to_numeric(df[x_column].str.strip(), errors='coerce')
    y = pd.to_numeric(df[y_column].str.strip(), errors='coerce')
    raw_group = df[group_column].str.strip().replace('', np.nan)
    if by_month:
        stamps = pd.to_datetime(raw_group, errors='coerce')
        label = stamps.dt.month.astype('Int64').astype(str).where(stamps.notna())
    else:
        label = raw_group

    valid = (x.notna() & y.notna() & label.notna()
             & (x >= x_min) & (x <= x_max) & (y >= y_min) & (y <= y_max))
    skipped = int(total - valid.sum())
    if skipped:
        log.warning("skipped %d of %d rows (unparsable, ungrouped or outside the box)", skipped, total)
    if not valid.any():
        raise IngestError(f"no usable rows in {csv_path}")

    ix = cell_index(x[valid].to_numpy(), x_min, x_max, grid_cols)
    iy = cell_index(y[valid].to_numpy(), y_min, y_max, grid_rows)
    cell = ix * grid_rows + iy
    n_cells = grid_rows * grid_cols
    labels = label[valid].to_numpy()

    binned = {}
    for g in _label_order(set(labels)):
        binned[g] = measure_from_counts(np.bincount(cell[labels == g], minlength=n_cells))

    for g in groups or []:
        if g not in binned:
            raise IngestError(f"group {g} has no records")

    log.info("ingested %d rows into %d groups on a %dx%d grid", total - skipped, len(binned),
             grid_cols, grid_rows)
    return BinnedDataset(grid_cols, grid_rows, (x_min, x_max, y_min, y_max), binned, skipped, total)
