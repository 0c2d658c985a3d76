"""
Export of spectra, reconstructions, kernel curves and reports, and their readers

Every file is written to a temporary sibling and renamed into place. Floats
go out with 17 significant digits so the readers recover them exactly.
"""

import csv
import io
import json
import logging
import math
import os
import tempfile
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from evaluate import EvalReport
from kernels import WeightKernel
from solver import InterpSolution
from spectral_core import SampledSeries, Spectrum

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ''
    return format(float(value), '.17g')


def _jsonable(value: Any) -> Any:
    """Plain JSON types with NaN / inf mapped to None"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class ReconstructionTable(NamedTuple):
    dense_nodes: np.ndarray
    dense_values: np.ndarray
    observed_nodes: np.ndarray
    observed_fit: np.ndarray
    observed_values: np.ndarray
    dense_timestamps: Optional[np.ndarray] = None
    observed_timestamps: Optional[np.ndarray] = None


class ReportWriter:
    """Writes the output files of one run into a directory"""

    def __init__(self, output_dir: PathLike = "output"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _atomic_write(self, filename: str, text: str) -> Path:
        target = self.output_dir / filename
        fd, tmp = tempfile.mkstemp(dir=self.output_dir, prefix=f".{filename}.", suffix=".tmp")
        try:
            with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
                f.write(text)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        logger.debug(f"Wrote {target}")
        return target

    def _write_csv(self, filename: str, fieldnames: Sequence[str],
                   rows: Iterable[Dict[str, str]]) -> Path:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)
        return self._atomic_write(filename, buffer.getvalue())

    def write_json(self, filename: str, payload: Dict[str, Any]) -> Path:
        text = json.dumps(_jsonable(payload), indent=2, sort_keys=True, ensure_ascii=False,
                          allow_nan=False)
        return self._atomic_write(filename, text + '\n')

    def write_spectrum(self, solution: InterpSolution, kernel: WeightKernel,
                       filename: str = "spectrum.csv") -> Path:
        """k, re, im, weight per coefficient"""
        spectrum = solution.spectrum
        rows = ({'k': _fmt(k), 're': _fmt(c.real), 'im': _fmt(c.imag), 'weight': _fmt(w)}
                for k, c, w in zip(spectrum.frequencies, spectrum.coeffs, kernel.weights))
        return self._write_csv(filename, ['k', 're', 'im', 'weight'], rows)

    def write_transform(self, spectrum: Spectrum, filename: str = "transform.csv") -> Path:
        rows = ({'k': _fmt(k), 're': _fmt(c.real), 'im': _fmt(c.imag)}
                for k, c in zip(spectrum.frequencies, spectrum.coeffs))
        return self._write_csv(filename, ['k', 're', 'im'], rows)

    def write_reconstruction(self, solution: InterpSolution, series: SampledSeries,
                             dense_nodes: np.ndarray,
                             filename: str = "reconstruction.csv") -> Path:
        """
        Reconstruction on the dense grid followed by the observed nodes

        Columns: grid ('dense' or 'observed'), node, timestamp (epoch seconds,
        blank when the series has no time axis), fit, observed (blank on the
        dense grid).
        """
        dense_nodes = np.asarray(dense_nodes, dtype=np.float64)
        dense_fit = solution.reconstruct(dense_nodes)
        observed_fit = solution.reconstruct(series.nodes)
        dense_time = series.to_timestamps(dense_nodes)
        observed_time = series.to_timestamps(series.nodes)

        def rows():
            for i, (x, v) in enumerate(zip(dense_nodes, dense_fit)):
                yield {'grid': 'dense', 'node': _fmt(x),
                       'timestamp': '' if dense_time is None else _fmt(dense_time[i]),
                       'fit': _fmt(v), 'observed': ''}
            for i, (x, v, y) in enumerate(zip(series.nodes, observed_fit, series.values)):
                yield {'grid': 'observed', 'node': _fmt(x),
                       'timestamp': '' if observed_time is None else _fmt(observed_time[i]),
                       'fit': _fmt(v), 'observed': _fmt(y)}

        return self._write_csv(filename, ['grid', 'node', 'timestamp', 'fit', 'observed'], rows())

    def write_kernel(self, z: np.ndarray, curves: Dict[float, np.ndarray],
                     filename: str = "kernel.csv") -> Path:
        """One z = k/N column plus one weight column per gamma"""
        columns = {f"gamma_{float(g)!r}": w for g, w in curves.items()}
        rows = ({'z': _fmt(zi), **{name: _fmt(w[i]) for name, w in columns.items()}}
                for i, zi in enumerate(z))
        return self._write_csv(filename, ['z', *columns], rows)

    def write_replicates(self, reports: Sequence[EvalReport],
                         filename: str = "replicates.csv") -> Path:
        fieldnames = ['mode', 'fraction', 'replicate', 'method', 'mafe', 'correlation',
                      'relative_error']

        def rows():
            for report in reports:
                for method, metrics in report.per_replicate.items():
                    for m in metrics:
                        yield {'mode': report.mode.value, 'fraction': _fmt(report.fraction),
                               'replicate': str(m.replicate), 'method': method,
                               'mafe': _fmt(m.mafe), 'correlation': _fmt(m.correlation),
                               'relative_error': _fmt(m.relative_error)}

        return self._write_csv(filename, fieldnames, rows())


def _read_rows(path: PathLike, required: Sequence[str]) -> List[Dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.DictReader(f)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path.name} is missing column(s): {', '.join(missing)}")
        return list(reader)


def _optional_float(text: str) -> float:
    return float(text) if text != '' else float('nan')


def read_spectrum_csv(path: PathLike) -> Tuple[Spectrum, np.ndarray]:
    """
    Returns:
        Tuple of (spectrum, weights)
    """
    rows = _read_rows(path, ['k', 're', 'im', 'weight'])
    frequencies = np.array([float(r['k']) for r in rows])
    coeffs = np.array([complex(float(r['re']), float(r['im'])) for r in rows])
    weights = np.array([float(r['weight']) for r in rows])
    return Spectrum(coeffs, frequencies=frequencies), weights


def read_transform_csv(path: PathLike) -> Spectrum:
    rows = _read_rows(path, ['k', 're', 'im'])
    return Spectrum(np.array([complex(float(r['re']), float(r['im'])) for r in rows]),
                    frequencies=np.array([float(r['k']) for r in rows]))


def read_reconstruction_csv(path: PathLike) -> ReconstructionTable:
    rows = _read_rows(path, ['grid', 'node', 'timestamp', 'fit', 'observed'])
    dense = [r for r in rows if r['grid'] == 'dense']
    observed = [r for r in rows if r['grid'] == 'observed']

    def stamps(selected: List[Dict[str, str]]) -> Optional[np.ndarray]:
        if not selected or any(r['timestamp'] == '' for r in selected):
            return None
        return np.array([float(r['timestamp']) for r in selected])

    return ReconstructionTable(
        dense_nodes=np.array([float(r['node']) for r in dense]),
        dense_values=np.array([float(r['fit']) for r in dense]),
        observed_nodes=np.array([float(r['node']) for r in observed]),
        observed_fit=np.array([float(r['fit']) for r in observed]),
        observed_values=np.array([_optional_float(r['observed']) for r in observed]),
        dense_timestamps=stamps(dense),
        observed_timestamps=stamps(observed),
    )


def read_kernel_csv(path: PathLike) -> Tuple[np.ndarray, Dict[float, np.ndarray]]:
    """
    Returns:
        Tuple of (z grid, {gamma: weights})
    """
    rows = _read_rows(path, ['z'])
    names = [name for name in rows[0].keys() if name.startswith('gamma_')] if rows else []
    z = np.array([float(r['z']) for r in rows])
    curves = {float(name[len('gamma_'):]): np.array([float(r[name]) for r in rows])
              for name in names}
    return z, curves


def read_replicates_csv(path: PathLike) -> List[Dict[str, Any]]:
    rows = _read_rows(path, ['mode', 'fraction', 'replicate', 'method', 'mafe',
                             'correlation', 'relative_error'])
    return [{'mode': r['mode'], 'fraction': float(r['fraction']),
             'replicate': int(r['replicate']), 'method': r['method'],
             'mafe': float(r['mafe']), 'correlation': float(r['correlation']),
             'relative_error': float(r['relative_error'])} for r in rows]


def read_json_report(path: PathLike) -> Dict[str, Any]:
    """
    Load a JSON report

    Raises:
        FileNotFoundError: If file doesn't exist
        ValueError: If the file is not a JSON object
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Report file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON in report file: {e}") from e
    if not isinstance(data, dict):
        raise ValueError(f"Report {path.name} must hold a JSON object")
    return data
