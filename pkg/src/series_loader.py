"""
CSV ingestion of sensor time series

Timestamps are ISO-8601 strings or integer epoch seconds; anything else is
rejected. Rows with missing values are dropped, duplicate timestamps keep
their first occurrence, and the rows are sorted before the nodes are mapped
onto [-1/2, 1/2).
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from spectral_core import SampledSeries

logger = logging.getLogger(__name__)

EPOCH = pd.Timestamp("1970-01-01", tz="UTC")


class IngestError(ValueError):
    """Input file cannot be turned into a series"""


def _epoch_seconds(column: pd.Series) -> np.ndarray:
    if pd.api.types.is_bool_dtype(column):
        raise IngestError("timestamp column holds booleans")

    if pd.api.types.is_numeric_dtype(column):
        values = column.to_numpy(dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise IngestError("timestamp column has missing entries")
        if np.any(values != np.round(values)):
            raise IngestError("numeric timestamps must be integer epoch seconds")
        return values

    text = column.astype(str).str.strip()
    if text.str.fullmatch(r"[+-]?\d+").all():
        return text.astype(np.int64).to_numpy(dtype=np.float64)

    try:
        parsed = pd.to_datetime(text, format='ISO8601', utc=True)
    except (ValueError, TypeError) as e:
        raise IngestError(f"timestamps are neither ISO-8601 nor epoch seconds: {e}") from e
    if parsed.isna().any():
        raise IngestError("timestamp column has missing entries")
    return ((parsed - EPOCH) / pd.Timedelta(seconds=1)).to_numpy(dtype=np.float64)


def ingest_csv(path: Union[str, Path], timestamp_column: str = "timestamp",
               value_column: str = "value") -> SampledSeries:
    """
    Read one value column against its timestamps

    Args:
        path: CSV file with a header row
        timestamp_column: Name of the time column
        value_column: Name of the observation column

    Returns:
        SampledSeries whose nodes keep the mapping back to epoch seconds

    Raises:
        FileNotFoundError: If the file doesn't exist
        IngestError: If the file, columns or timestamps can't be used
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Input file not found: {path}")

    try:
        frame = pd.read_csv(path, encoding='utf-8')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise IngestError(f"Cannot parse {path}: {e}") from e

    missing = [c for c in (timestamp_column, value_column) if c not in frame.columns]
    if missing:
        raise IngestError(f"{path} lacks column(s) {', '.join(missing)}; "
                          f"found {', '.join(map(str, frame.columns))}")

    values = pd.to_numeric(frame[value_column], errors='coerce')
    keep = values.notna() & np.isfinite(values.fillna(0.0))
    dropped_missing = int((~keep).sum())
    if dropped_missing:
        logger.info(f"Dropped {dropped_missing} rows with missing or non-numeric values")

    frame = pd.DataFrame({
        'seconds': _epoch_seconds(frame.loc[keep, timestamp_column]) if keep.any()
        else np.empty(0),
        'value': values[keep].to_numpy(dtype=np.float64),
    })

    duplicated = frame['seconds'].duplicated(keep='first')
    if duplicated.any():
        logger.warning(f"Dropped {int(duplicated.sum())} rows with duplicate timestamps "
                       f"(first occurrence kept)")
        frame = frame.loc[~duplicated]

    if not frame['seconds'].is_monotonic_increasing:
        logger.debug("Timestamps out of order; sorting")
        frame = frame.sort_values('seconds', kind='mergesort')

    if len(frame) < 2:
        raise IngestError(f"{path} has {len(frame)} valid rows; at least 2 are needed")

    series = SampledSeries.from_timestamps(frame['seconds'].to_numpy(),
                                           frame['value'].to_numpy())
    logger.info(f"Loaded {series.m} observations from {path.name} "
                f"(equispaced: {series.is_equispaced()})")
    return series
