"""
CSV dumps of engine internals: 1D value sheets and the calibrated GLV field.
"""

import logging
import os
from typing import Sequence

import numpy as np
import pandas as pd

from core.engine1d import ValueSheet1D
from core.glv import AdjustedVolField

logger = logging.getLogger(__name__)

SHEET_COLUMNS = ["step", "node", "state", "value"]


def sheets_frame(sheets: Sequence[ValueSheet1D]) -> pd.DataFrame:
    if not sheets:
        return pd.DataFrame(columns=SHEET_COLUMNS)
    return pd.DataFrame({
        "step": np.concatenate([np.full(s.states.size, s.step) for s in sheets]),
        "node": np.concatenate([np.arange(s.states.size) for s in sheets]),
        "state": np.concatenate([s.states for s in sheets]),
        "value": np.concatenate([np.atleast_1d(s.values) for s in sheets]),
    }, columns=SHEET_COLUMNS)


def dump_sheets(sheets: Sequence[ValueSheet1D], path: str) -> int:
    """Writes one row per (step, node); returns the row count"""
    frame = sheets_frame(sheets)
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} sheet rows to {path}")
    return len(frame)


def mass_path(path: str) -> str:
    stem, ext = os.path.splitext(path)
    return f"{stem}.mass{ext or '.csv'}"


def dump_field(vol_field: AdjustedVolField, path: str) -> None:
    """Adjusted and Dupire vols per node to `path`, AD mass per step beside it"""
    vol_field.to_frame().to_csv(path, index=False, lineterminator="\n")
    vol_field.mass_frame().to_csv(mass_path(path), index=False, lineterminator="\n")
    logger.info(f"Wrote adjusted vol field to {path} and AD masses to {mass_path(path)}")
