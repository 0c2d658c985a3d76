"""
Non-uniform discrete Fourier transform matrices and the reference DFT

Time nodes live on the half-open window [-1/2, 1/2) and the equispaced
frequency grid runs over the integers -N/2 ... N/2-1. Every transform here is an
explicit dense matrix product; the forward direction carries the negative
exponent and the adjoint the positive one.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

PHASE_TOLERANCE = 1e-12
EQUISPACED_TOLERANCE = 1e-9

ArrayLike = Union[Sequence[float], np.ndarray]


class TransformKind(str, Enum):
    """Which axis of the transform is irregular"""

    TYPE_I = "TypeI"      # irregular time nodes, integer frequencies
    TYPE_II = "TypeII"    # equispaced time nodes, irregular frequencies
    TYPE_III = "TypeIII"  # both irregular


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _check_n_coeffs(n_coeffs: int) -> None:
    if isinstance(n_coeffs, bool) or int(n_coeffs) != n_coeffs:
        raise ValueError(f"n_coeffs must be an integer, got {n_coeffs!r}")
    if n_coeffs < 2 or n_coeffs % 2:
        raise ValueError(f"n_coeffs must be even and >= 2, got {n_coeffs}")


def _check_nodes(nodes: ArrayLike) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=np.float64)
    if nodes.ndim != 1:
        raise ValueError(f"nodes must be one-dimensional, got shape {nodes.shape}")
    if nodes.size == 0:
        raise ValueError("nodes must not be empty")
    if not np.all(np.isfinite(nodes)):
        raise ValueError("nodes must be finite")
    if nodes.min() < -0.5 or nodes.max() >= 0.5:
        raise ValueError(
            f"nodes must lie in [-1/2, 1/2), got range [{nodes.min()}, {nodes.max()}]")
    return nodes


def frequency_indices(n_coeffs: int) -> np.ndarray:
    """Integer frequency grid -N/2 ... N/2-1"""
    _check_n_coeffs(n_coeffs)
    return np.arange(-(n_coeffs // 2), n_coeffs // 2)


def equispaced_nodes(m: int) -> np.ndarray:
    """Nominal grid -1/2 + j/m for j = 0 ... m-1 (the set j/M, j = -M/2 ... M/2-1)"""
    if m < 1:
        raise ValueError(f"grid size must be positive, got {m}")
    return np.arange(m, dtype=np.float64) / m - 0.5


def nominal_grid(nodes: ArrayLike) -> np.ndarray:
    """
    Equispaced grid implied by the typical node spacing

    The grid size is the number of median-sized steps that fit in the unit
    window, so a regular series with gaps recovers its original sampling slots.
    """
    nodes = _check_nodes(nodes)
    if nodes.size < 2:
        return equispaced_nodes(1)
    step = float(np.median(np.diff(nodes)))
    return equispaced_nodes(max(int(round(1.0 / step)), nodes.size))


def normalize_timestamps(timestamps: ArrayLike) -> Tuple[np.ndarray, float, float]:
    """
    Map raw timestamps onto the half-open window [-1/2, 1/2)

    x_j = (t_j - t_min) / (t_max - t_min + delta) - 1/2 with delta the median
    sampling interval, so the last node stays one typical step short of 1/2.

    Returns:
        Tuple of (nodes, time_origin, time_span)
    """
    t = np.asarray(timestamps, dtype=np.float64)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("timestamps must be a non-empty vector")
    if not np.all(np.isfinite(t)):
        raise ValueError("timestamps must be finite")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing")

    delta = float(np.median(np.diff(t))) if t.size > 1 else 1.0
    origin = float(t[0])
    span = float(t[-1] - t[0]) + delta
    nodes = (t - origin) / span - 0.5
    return nodes, origin, span


@dataclass(frozen=True)
class SampledSeries:
    """Observed values at non-equispaced nodes in [-1/2, 1/2)"""

    nodes: np.ndarray
    values: np.ndarray
    origin_timestamps: Optional[np.ndarray] = None
    time_origin: Optional[float] = None
    time_span: Optional[float] = None

    def __post_init__(self):
        nodes = _check_nodes(self.nodes)
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != nodes.shape:
            raise ValueError(
                f"nodes and values differ in length: {nodes.size} vs {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        if nodes.size > 1 and np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")

        object.__setattr__(self, 'nodes', _readonly(nodes.copy()))
        object.__setattr__(self, 'values', _readonly(values.copy()))
        if self.origin_timestamps is not None:
            stamps = np.asarray(self.origin_timestamps, dtype=np.float64)
            if stamps.shape != nodes.shape:
                raise ValueError("origin_timestamps must match nodes in length")
            object.__setattr__(self, 'origin_timestamps', _readonly(stamps.copy()))

    @classmethod
    def from_timestamps(cls, timestamps: ArrayLike, values: ArrayLike) -> "SampledSeries":
        """Build a series from raw (sorted, unique) timestamps in seconds"""
        nodes, origin, span = normalize_timestamps(timestamps)
        return cls(nodes=nodes, values=np.asarray(values, dtype=np.float64),
                   origin_timestamps=np.asarray(timestamps, dtype=np.float64),
                   time_origin=origin, time_span=span)

    @property
    def m(self) -> int:
        return int(self.nodes.size)

    def is_equispaced(self, tol: float = EQUISPACED_TOLERANCE) -> bool:
        """True when consecutive nodes are 1/M apart, the spacing for which AA^H = M I_N"""
        if self.m < 2:
            return False
        return bool(np.all(np.abs(np.diff(self.nodes) - 1.0 / self.m) <= tol))

    def subset(self, indices: ArrayLike) -> "SampledSeries":
        """Series restricted to the given positions; the node normalization is kept"""
        idx = np.unique(np.asarray(indices, dtype=np.int64))
        stamps = None if self.origin_timestamps is None else self.origin_timestamps[idx]
        return SampledSeries(nodes=self.nodes[idx], values=self.values[idx],
                             origin_timestamps=stamps, time_origin=self.time_origin,
                             time_span=self.time_span)

    def with_values(self, values: ArrayLike) -> "SampledSeries":
        return SampledSeries(nodes=self.nodes, values=values,
                             origin_timestamps=self.origin_timestamps,
                             time_origin=self.time_origin, time_span=self.time_span)

    def to_timestamps(self, nodes: ArrayLike) -> Optional[np.ndarray]:
        """Raw time of arbitrary nodes, or None when the series was built from nodes"""
        if self.time_origin is None or self.time_span is None:
            return None
        return self.time_origin + (np.asarray(nodes, dtype=np.float64) + 0.5) * self.time_span


@dataclass(frozen=True)
class Spectrum:
    """Fourier coefficients, indexed k = -N/2 ... N/2-1 unless frequencies are given"""

    coeffs: np.ndarray
    frequencies: Optional[np.ndarray] = None

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if coeffs.ndim != 1:
            raise ValueError(f"coeffs must be one-dimensional, got shape {coeffs.shape}")
        if self.frequencies is None:
            frequencies = frequency_indices(coeffs.size).astype(np.float64)
        else:
            frequencies = np.asarray(self.frequencies, dtype=np.float64)
            if frequencies.shape != coeffs.shape:
                raise ValueError("frequencies must match coeffs in length")
        object.__setattr__(self, 'coeffs', _readonly(coeffs.copy()))
        object.__setattr__(self, 'frequencies', _readonly(frequencies.copy()))

    @property
    def n_coeffs(self) -> int:
        return int(self.coeffs.size)


@dataclass(frozen=True)
class TransformMatrix:
    """Dense M x N matrix with entries exp(-2 pi i * frequency_k * node_j)"""

    entries: np.ndarray
    kind: TransformKind
    nodes: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.shape != (np.size(self.nodes), np.size(self.frequencies)):
            raise ValueError(
                f"entries shape {entries.shape} does not match "
                f"{np.size(self.nodes)} nodes x {np.size(self.frequencies)} frequencies")
        deviation = float(np.max(np.abs(np.abs(entries) - 1.0))) if entries.size else 0.0
        if deviation > PHASE_TOLERANCE:
            raise ValueError(f"entries must have unit modulus (deviation {deviation:.3e})")
        object.__setattr__(self, 'entries', _readonly(entries))
        object.__setattr__(self, 'nodes', _readonly(np.array(self.nodes, dtype=np.float64)))
        object.__setattr__(self, 'frequencies',
                           _readonly(np.array(self.frequencies, dtype=np.float64)))

    @property
    def m_rows(self) -> int:
        return int(self.entries.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.entries.shape[1])


def _phase_matrix(nodes: np.ndarray, frequencies: np.ndarray) -> np.ndarray:
    return np.exp(-2j * np.pi * np.outer(nodes, frequencies))


def build_type1(nodes: ArrayLike, n_coeffs: int) -> TransformMatrix:
    """Irregular time nodes against the integer frequency grid"""
    nodes = _check_nodes(nodes)
    frequencies = frequency_indices(n_coeffs).astype(np.float64)
    return TransformMatrix(_phase_matrix(nodes, frequencies), TransformKind.TYPE_I,
                           nodes, frequencies)


def build_type2(m: int, frequencies: ArrayLike) -> TransformMatrix:
    """Equispaced time nodes against irregular frequency nodes (cycles per window)"""
    frequencies = np.asarray(frequencies, dtype=np.float64)
    _check_n_coeffs(frequencies.size)
    if not np.all(np.isfinite(frequencies)):
        raise ValueError("frequencies must be finite")
    nodes = equispaced_nodes(m)
    return TransformMatrix(_phase_matrix(nodes, frequencies), TransformKind.TYPE_II,
                           nodes, frequencies)


def build_type3(nodes: ArrayLike, frequencies: ArrayLike) -> TransformMatrix:
    """Irregular time nodes against irregular frequency nodes"""
    nodes = _check_nodes(nodes)
    frequencies = np.asarray(frequencies, dtype=np.float64)
    if frequencies.ndim != 1 or frequencies.size == 0:
        raise ValueError("frequencies must be a non-empty vector")
    if not np.all(np.isfinite(frequencies)):
        raise ValueError("frequencies must be finite")
    return TransformMatrix(_phase_matrix(nodes, frequencies), TransformKind.TYPE_III,
                           nodes, frequencies)


def forward(A: TransformMatrix, values: ArrayLike) -> Spectrum:
    """coeffs_k = sum_j values_j exp(-2 pi i k x_j), no normalization"""
    values = np.asarray(values)
    if values.shape != (A.m_rows,):
        raise ValueError(f"expected {A.m_rows} values, got shape {values.shape}")
    coeffs = A.entries.T @ values
    if A.kind is TransformKind.TYPE_I:
        return Spectrum(coeffs)
    return Spectrum(coeffs, frequencies=A.frequencies)


def adjoint(A: TransformMatrix, spectrum: Spectrum) -> np.ndarray:
    """out_j = sum_k coeffs_k exp(+2 pi i k x_j), no 1/M normalization"""
    if spectrum.n_coeffs != A.n_cols:
        raise ValueError(f"expected {A.n_cols} coefficients, got {spectrum.n_coeffs}")
    return A.entries.conj() @ spectrum.coeffs


def gram(A: TransformMatrix) -> np.ndarray:
    """N x N product of the forward operator with its Hermitian (AA^H on spectra)"""
    return A.entries.T @ A.entries.conj()


def gram_identity_deviation(A: TransformMatrix, G: Optional[np.ndarray] = None) -> float:
    """max |gram(A) - M I_N|; zero up to rounding for equispaced nodes with N <= M"""
    if G is None:
        G = gram(A)
    return float(np.max(np.abs(G - A.m_rows * np.eye(A.n_cols))))


def max_off_diagonal(G: np.ndarray) -> float:
    G = np.asarray(G)
    if G.shape[0] < 2:
        return 0.0
    return float(np.max(np.abs(G[~np.eye(G.shape[0], dtype=bool)])))


def _reference_matrix(m: int) -> np.ndarray:
    j = np.arange(-(m // 2), m // 2)
    return np.exp(-2j * np.pi * np.outer(j, j) / m)


def dft_reference(values: ArrayLike) -> Spectrum:
    """Direct O(N^2) DFT with M = N, j and k both running over -M/2 ... M/2-1"""
    values = np.asarray(values)
    if values.ndim != 1:
        raise ValueError("values must be one-dimensional")
    _check_n_coeffs(values.size)
    return Spectrum(_reference_matrix(values.size).T @ values)


def idft_reference(spectrum: Spectrum) -> np.ndarray:
    """Direct inverse DFT including the 1/M factor"""
    m = spectrum.n_coeffs
    _check_n_coeffs(m)
    return _reference_matrix(m).conj() @ spectrum.coeffs / m
