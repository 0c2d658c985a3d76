"""
Cross-validation of the inverse NFFT against the truncated iFFT baseline

Each (mask mode, fraction) cell removes observations, refits both methods on
the remaining data, scores them on the held-out values and against their own
full-data fits, and tests the paired differences with a sign-flip permutation
t-test.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats

from kernels import WeightKernel
from solver import InterpSolution, SolverError, ifft_baseline, inverse_adjoint
from spectral_core import SampledSeries, nominal_grid as default_nominal_grid

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.10, 0.20, 0.30)
DEFAULT_REPLICATES = 7
DEFAULT_PERMUTATIONS = 10_000

INVERSE_NFFT = "inverse_nfft"
IFFT_BASELINE = "ifft_baseline"
METHODS = (INVERSE_NFFT, IFFT_BASELINE)
METRICS = ("mafe", "correlation", "relative_error")


class MaskMode(str, Enum):
    RANDOM = "random"
    CONTIGUOUS_BLOCK = "block"


@dataclass(frozen=True)
class MaskSpec:
    mode: MaskMode
    fraction: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'mode', MaskMode(self.mode))
        if not 0.0 < self.fraction < 1.0:
            raise ValueError(f"mask fraction must lie in (0, 1), got {self.fraction}")

    @property
    def is_standard_protocol(self) -> bool:
        return any(abs(self.fraction - f) < 1e-12 for f in DEFAULT_FRACTIONS)


class MaskSplit(NamedTuple):
    train: SampledSeries
    test: SampledSeries
    test_indices: np.ndarray


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def apply_mask(series: SampledSeries, spec: MaskSpec) -> MaskSplit:
    """
    Split a series into train and test sets

    Random mode draws the test positions uniformly without replacement;
    block mode removes round(fraction * M) consecutive positions starting at a
    seeded uniform index.
    """
    n_test = _round_half_up(spec.fraction * series.m)
    if n_test < 1:
        raise ValueError(f"fraction {spec.fraction} of {series.m} observations removes nothing")
    if series.m - n_test < 1:
        raise ValueError(f"series of {series.m} observations is too short to mask")

    rng = np.random.default_rng(spec.seed)
    if spec.mode is MaskMode.RANDOM:
        test_idx = np.sort(rng.choice(series.m, size=n_test, replace=False))
    else:
        start = int(rng.integers(0, series.m - n_test + 1))
        test_idx = np.arange(start, start + n_test)

    train_idx = np.setdiff1d(np.arange(series.m), test_idx, assume_unique=True)
    return MaskSplit(series.subset(train_idx), series.subset(test_idx), test_idx)


def fractional_errors(predicted: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """|pred - obs| / |obs| over the nonzero observations"""
    predicted = np.asarray(predicted, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    if predicted.shape != observed.shape:
        raise ValueError(f"length mismatch: {predicted.size} vs {observed.size}")
    keep = observed != 0
    return np.abs((predicted[keep] - observed[keep]) / observed[keep])


def mafe(predicted: np.ndarray, observed: np.ndarray) -> float:
    """Mean absolute fractional error; zero observations are excluded"""
    terms = fractional_errors(predicted, observed)
    excluded = int(np.size(observed) - terms.size)
    if excluded:
        logger.warning(f"{excluded} zero-valued observations excluded from MAFE")
    if terms.size == 0:
        raise ValueError("MAFE is undefined when every observation is zero")
    return math.fsum(terms) / terms.size


def correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation coefficient"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("correlation needs at least two points")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ValueError("correlation is undefined for a constant vector")
    r = float(stats.pearsonr(a, b)[0])
    return min(1.0, max(-1.0, r))


def relative_error(predicted: np.ndarray, observed: np.ndarray) -> float:
    """||pred - obs|| / ||obs - mean(obs)||; the prediction skill is 1 minus this"""
    predicted = np.asarray(predicted, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    if predicted.shape != observed.shape:
        raise ValueError(f"length mismatch: {predicted.size} vs {observed.size}")
    spread = float(np.linalg.norm(observed - observed.mean()))
    if spread == 0.0:
        raise ValueError("relative error is undefined for constant observations")
    return float(np.linalg.norm(predicted - observed)) / spread


def _t_statistics(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[-1]
    mean = samples.mean(axis=-1)
    sd = samples.std(axis=-1, ddof=1)
    with np.errstate(divide='ignore', invalid='ignore'):
        t = mean / (sd / math.sqrt(n))
    # a constant row has t = +/-inf by the sign of its mean, or 0 when it is all zeros
    constant = np.where(mean > 0, np.inf, np.where(mean < 0, -np.inf, 0.0))
    return np.where(sd > 0, t, constant)


def permutation_test(deltas: Sequence[float], permutations: int = DEFAULT_PERMUTATIONS,
                     seed: int = 0) -> float:
    """
    One-sided sign-flip permutation t-test that the paired differences are positive

    Returns:
        (1 + #{flipped t >= observed t}) / (permutations + 1); 1.0 when the
        differences have zero variance
    """
    d = np.asarray(deltas, dtype=np.float64)
    if d.ndim != 1 or d.size < 2:
        raise ValueError("permutation test needs at least two paired differences")
    if permutations < 100:
        raise ValueError(f"permutations must be >= 100, got {permutations}")
    if np.ptp(d) == 0:
        logger.warning("Paired differences have zero variance; p-value set to 1")
        return 1.0

    observed = float(_t_statistics(d))
    rng = np.random.default_rng(seed)
    exceed = 0
    chunk = max(1, 200_000 // d.size)
    for start in range(0, permutations, chunk):
        size = min(chunk, permutations - start)
        signs = rng.choice(np.array([-1.0, 1.0]), size=(size, d.size))
        flipped = _t_statistics(signs * d)
        exceed += int(np.count_nonzero(flipped >= observed - 1e-12 * abs(observed)))
    return (1 + exceed) / (permutations + 1)


@dataclass(frozen=True)
class ReplicateMetrics:
    mafe: float
    correlation: float
    relative_error: float
    replicate: int = 0

    def as_dict(self) -> Dict[str, float]:
        return {'mafe': self.mafe, 'correlation': self.correlation,
                'relative_error': self.relative_error}


def _mean_std(values: Sequence[float]) -> Dict[str, float]:
    n = len(values)
    if n == 0:
        return {'mean': float('nan'), 'std': float('nan')}
    mean = math.fsum(values) / n
    if n == 1:
        return {'mean': mean, 'std': 0.0}
    variance = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return {'mean': mean, 'std': math.sqrt(variance)}


@dataclass
class EvalReport:
    """Metrics of one (mode, fraction) cell"""

    mode: MaskMode
    fraction: float
    replicates: int
    permutations: int
    per_replicate: Dict[str, List[ReplicateMetrics]] = field(
        default_factory=lambda: {method: [] for method in METHODS})
    p_values: Dict[str, float] = field(default_factory=dict)
    zero_variance: List[str] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def p_value(self) -> float:
        return self.p_values.get('correlation', 1.0)

    def summary(self) -> Dict[str, Dict[str, Dict[str, float]]]:
        """{method: {metric: {'mean', 'std'}}} plus the 1 - Err prediction skill"""
        out: Dict[str, Dict[str, Dict[str, float]]] = {}
        for method, rows in self.per_replicate.items():
            out[method] = {metric: _mean_std([getattr(r, metric) for r in rows])
                           for metric in METRICS}
            out[method]['prediction_skill'] = _mean_std([1.0 - r.relative_error for r in rows])
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mode': self.mode.value,
            'fraction': self.fraction,
            'replicates': self.replicates,
            'completed_replicates': len(self.per_replicate[INVERSE_NFFT]),
            'permutations': self.permutations,
            'summary': self.summary(),
            'p_values': dict(self.p_values),
            'zero_variance': list(self.zero_variance),
            'failures': list(self.failures),
        }


def _replicate_seed(seed: int, mode_index: int, fraction_index: int, replicate: int) -> int:
    sequence = np.random.SeedSequence([seed, mode_index, fraction_index, replicate])
    return int(sequence.generate_state(1)[0])


def _score(solution: InterpSolution, split: MaskSplit, nodes: np.ndarray,
           reference: np.ndarray, replicate: int) -> ReplicateMetrics:
    predicted = solution.reconstruct(split.test.nodes)
    return ReplicateMetrics(
        mafe=mafe(predicted, split.test.values),
        correlation=correlation(solution.reconstruct(nodes), reference),
        relative_error=relative_error(predicted, split.test.values),
        replicate=replicate,
    )


def _paired_deltas(report: EvalReport) -> Dict[str, List[float]]:
    """Differences oriented so a positive value favours the inverse NFFT"""
    inverse = report.per_replicate[INVERSE_NFFT]
    baseline = report.per_replicate[IFFT_BASELINE]
    return {
        'correlation': [a.correlation - b.correlation for a, b in zip(inverse, baseline)],
        'mafe': [b.mafe - a.mafe for a, b in zip(inverse, baseline)],
        'relative_error': [b.relative_error - a.relative_error
                           for a, b in zip(inverse, baseline)],
    }


def run_protocol(series: SampledSeries, n_coeffs: int, kernel: WeightKernel,
                 fractions: Sequence[float], modes: Sequence[MaskMode],
                 replicates: int = DEFAULT_REPLICATES,
                 permutations: int = DEFAULT_PERMUTATIONS, seed: int = 0,
                 grid: Optional[np.ndarray] = None) -> List[EvalReport]:
    """
    Run every (mode, fraction) cell of the cross-validation protocol

    Returns:
        One EvalReport per cell, modes outermost; empty when either list is empty
    """
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}")
    if not fractions or not modes:
        return []

    grid = default_nominal_grid(series.nodes) if grid is None else np.asarray(grid)
    nodes = series.nodes
    full_fits = {
        INVERSE_NFFT: inverse_adjoint(series, kernel, n_coeffs),
        IFFT_BASELINE: ifft_baseline(series, kernel, n_coeffs, grid),
    }
    references = {method: fit.reconstruct(nodes) for method, fit in full_fits.items()}
    if replicates == 1:
        logger.warning("A single replicate gives a standard deviation of 0 and no p-value")

    reports: List[EvalReport] = []
    for mode_index, mode in enumerate(modes):
        mode = MaskMode(mode)
        for fraction_index, fraction in enumerate(fractions):
            report = EvalReport(mode=mode, fraction=float(fraction), replicates=replicates,
                                permutations=permutations)
            for replicate in range(replicates):
                spec = MaskSpec(mode, float(fraction),
                                _replicate_seed(seed, mode_index, fraction_index, replicate))
                try:
                    split = apply_mask(series, spec)
                    inverse = inverse_adjoint(split.train, kernel, n_coeffs)
                    baseline = ifft_baseline(split.train, kernel, n_coeffs, grid)
                    scores = {
                        INVERSE_NFFT: _score(inverse, split, nodes, references[INVERSE_NFFT],
                                              replicate),
                        IFFT_BASELINE: _score(baseline, split, nodes, references[IFFT_BASELINE],
                                               replicate),
                    }
                except (ValueError, SolverError, np.linalg.LinAlgError) as e:
                    logger.warning(f"Replicate {replicate} of {mode.value} {fraction:.2f} "
                                   f"failed: {e}")
                    report.failures.append({'replicate': replicate, 'seed': spec.seed,
                                            'error': str(e)})
                    continue
                for method, metrics in scores.items():
                    report.per_replicate[method].append(metrics)

            for metric, deltas in _paired_deltas(report).items():
                if len(deltas) < 2:
                    report.p_values[metric] = 1.0
                    continue
                if np.ptp(deltas) == 0:
                    report.zero_variance.append(metric)
                report.p_values[metric] = permutation_test(
                    deltas, permutations,
                    seed=_replicate_seed(seed, mode_index, fraction_index, replicates))

            inverse_corr = report.summary()[INVERSE_NFFT]['correlation']['mean']
            baseline_corr = report.summary()[IFFT_BASELINE]['correlation']['mean']
            logger.info(f"{mode.value} {fraction:.0%}: r(iNFFT)={inverse_corr:.4f} "
                        f"r(iFFT)={baseline_corr:.4f} p={report.p_value:.4g}")
            reports.append(report)
    return reports
