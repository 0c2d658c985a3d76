"""
Direct solution of the optimal interpolation problem

Finds the spectrum f minimizing

    f^H W^{-1} f + ||A^H f - y||^2

whose stationarity condition is (W^{-1} + AA^H) f = A y. Equispaced nodes use
the elementwise closed form; irregular nodes use the LU factors of AA^H in the
Kailath expansion so that W^{-1} is never formed.
"""

import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.linalg.lapack import get_lapack_funcs

from kernels import WeightKernel
from spectral_core import (
    SampledSeries,
    Spectrum,
    TransformMatrix,
    adjoint,
    build_type1,
    forward,
    gram,
)

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-8
CONDITION_LIMIT = 1e12
RECONSTRUCT_CHUNK = 4096
REALNESS_TOLERANCE = 1e-9


class SolverError(RuntimeError):
    """Numerical failure of a solve"""


class SolveMethod(str, Enum):
    EQUISPACED_CLOSED_FORM = "EquispacedClosedForm"
    KAILATH_LU = "KailathLU"
    DENSE_ORACLE = "DenseOracle"
    TRUNCATED_IFFT = "TruncatedIFFT"


@dataclass(frozen=True)
class GramFactors:
    """Partial-pivot LU of the Gram matrix, G = permutation @ lower @ upper"""

    lower: np.ndarray
    upper: np.ndarray
    permutation: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return self.permutation @ self.lower @ self.upper


@dataclass(frozen=True)
class InterpSolution:
    """Spectrum of a solve plus the diagnostics recorded alongside it"""

    spectrum: Spectrum
    cost: float
    stationarity_residual: float
    method: SolveMethod
    offset: float = 0.0
    condition_estimate: float = float('nan')
    residual_relative: bool = True

    @property
    def n_coeffs(self) -> int:
        return self.spectrum.n_coeffs

    def reconstruct(self, nodes: np.ndarray) -> np.ndarray:
        """
        Real part of the adjoint transform at the given nodes, mean restored

        Logs a warning when the discarded imaginary part exceeds
        REALNESS_TOLERANCE of the largest modulus.
        """
        nodes = np.asarray(nodes, dtype=np.float64)
        out = np.empty(nodes.size, dtype=np.float64)
        max_imag = 0.0
        max_modulus = 0.0
        for start in range(0, nodes.size, RECONSTRUCT_CHUNK):
            chunk = nodes[start:start + RECONSTRUCT_CHUNK]
            A = build_type1(chunk, self.n_coeffs)
            values = adjoint(A, self.spectrum)
            out[start:start + chunk.size] = values.real
            max_imag = max(max_imag, float(np.max(np.abs(values.imag))))
            max_modulus = max(max_modulus, float(np.max(np.abs(values))))
        if max_imag > REALNESS_TOLERANCE * max_modulus:
            logger.warning(f"Reconstruction drops an imaginary part of {max_imag:.3e} "
                           f"(largest modulus {max_modulus:.3e}); the spectrum is not "
                           f"Hermitian-symmetric")
        return out + self.offset


def _check_dimensions(series: SampledSeries, kernel: WeightKernel, n_coeffs: int) -> None:
    if kernel.n_coeffs != n_coeffs:
        raise ValueError(f"kernel has {kernel.n_coeffs} weights but n_coeffs is {n_coeffs}")
    if n_coeffs > series.m:
        logger.warning(f"n_coeffs={n_coeffs} exceeds the {series.m} observations; "
                       f"the spectrum is underdetermined and relies on the weights")


def _centred(series: SampledSeries) -> Tuple[np.ndarray, float]:
    offset = float(np.mean(series.values))
    return series.values - offset, offset


def _check_matrix(A: TransformMatrix, series: SampledSeries, n_coeffs: int) -> None:
    if A.m_rows != series.m or A.n_cols != n_coeffs:
        raise ValueError(f"transform is {A.m_rows}x{A.n_cols}, expected {series.m}x{n_coeffs}")


def cost(spectrum: Spectrum, series: SampledSeries, A: TransformMatrix, kernel: WeightKernel,
         offset: float = 0.0) -> float:
    """f^H W^{-1} f + ||A^H f - y|| ^2 with y = values - offset"""
    _check_matrix(A, series, spectrum.n_coeffs)
    if kernel.n_coeffs != spectrum.n_coeffs:
        raise ValueError("kernel and spectrum differ in length")
    f = spectrum.coeffs
    residual = adjoint(A, spectrum) - (series.values - offset)
    with np.errstate(over='ignore'):
        penalty = float(np.sum(np.abs(f) ** 2 / kernel.weights))
    return penalty + float(np.real(np.vdot(residual, residual)))


def cost_gradient(spectrum: Spectrum, series: SampledSeries, A: TransformMatrix,
                  kernel: WeightKernel, offset: float = 0.0) -> np.ndarray:
    """
    Analytic gradient 2 W^{-1} f + 2 G f - 2 A y

    Real and imaginary parts are the partial derivatives of cost() with
    respect to the real and imaginary parts of each coefficient.
    """
    _check_matrix(A, series, spectrum.n_coeffs)
    f = spectrum.coeffs
    ay = forward(A, series.values - offset).coeffs
    gf = forward(A, adjoint(A, spectrum)).coeffs
    return 2.0 * f / kernel.weights + 2.0 * gf - 2.0 * ay


def _premultiplied_residual(f: np.ndarray, gf: np.ndarray, ay: np.ndarray,
                            weights: np.ndarray) -> Tuple[float, bool]:
    target = weights * ay
    numerator = float(np.linalg.norm(f + weights * gf - target))
    denominator = float(np.linalg.norm(target))
    if denominator == 0.0:
        return numerator, False
    return numerator / denominator, True


def _residual_for(f: np.ndarray, A: TransformMatrix, ay: np.ndarray,
                  weights: np.ndarray) -> Tuple[float, bool]:
    gf = A.entries.T @ (A.entries.conj() @ f)
    return _premultiplied_residual(f, gf, ay, weights)


def stationarity_residual(solution: InterpSolution, series: SampledSeries, A: TransformMatrix,
                          kernel: WeightKernel) -> Tuple[float, bool]:
    """
    ||f + W G f - W A y|| / ||W A y||, the W-premultiplied stationarity condition

    Returns:
        Tuple of (residual, relative); relative is False when W A y vanishes
        and the absolute residual is reported instead
    """
    _check_matrix(A, series, solution.n_coeffs)
    ay = forward(A, series.values - solution.offset).coeffs
    value, relative = _residual_for(solution.spectrum.coeffs, A, ay, kernel.weights)
    if not relative:
        logger.warning("W A y is zero; reporting the absolute stationarity residual")
    return value, relative


def searle_filter(ay: np.ndarray, weights: np.ndarray, m: int) -> np.ndarray:
    """Equispaced closed form A y * w / (M w + 1), elementwise"""
    weights = np.asarray(weights, dtype=np.float64)
    return np.asarray(ay) * weights / (m * weights + 1.0)


def factor_gram(G: np.ndarray) -> GramFactors:
    permutation, lower, upper = scipy.linalg.lu(G)
    return GramFactors(lower=lower, upper=upper, permutation=permutation)


def _finish(f: np.ndarray, series: SampledSeries, A: TransformMatrix, kernel: WeightKernel,
            ay: np.ndarray, offset: float, method: SolveMethod,
            condition: float = float('nan')) -> InterpSolution:
    spectrum = Spectrum(f)
    residual, relative = _residual_for(f, A, ay, kernel.weights)
    return InterpSolution(spectrum=spectrum, cost=cost(spectrum, series, A, kernel, offset),
                          stationarity_residual=residual, method=method, offset=offset,
                          condition_estimate=condition, residual_relative=relative)


def solve_equispaced(series: SampledSeries, kernel: WeightKernel, n_coeffs: int
                     ) -> InterpSolution:
    """Closed form for nodes 1/M apart, where AA^H = M I_N"""
    _check_dimensions(series, kernel, n_coeffs)
    if not series.is_equispaced():
        raise ValueError("nodes are not equispaced; use solve_general")
    if n_coeffs > series.m:
        raise ValueError(f"the closed form needs n_coeffs <= M, got {n_coeffs} > {series.m}")

    y, offset = _centred(series)
    A = build_type1(series.nodes, n_coeffs)
    ay = forward(A, y).coeffs
    f = searle_filter(ay, kernel.weights, series.m)
    return _finish(f, series, A, kernel, ay, offset, SolveMethod.EQUISPACED_CLOSED_FORM)


def _dense_spectrum(G: np.ndarray, ay: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # (W^{-1} + G) f = A y rewritten as (I + W^1/2 G W^1/2) u = W^1/2 A y, f = W^1/2 u
    root = np.sqrt(weights)
    H = np.eye(weights.size) + root[:, None] * G * root[None, :]
    try:
        factor = scipy.linalg.cho_factor(H, lower=True)
    except np.linalg.LinAlgError as e:
        raise SolverError(f"dense system is not positive definite: {e}") from e
    return root * scipy.linalg.cho_solve(factor, root * ay)


def _kailath_spectrum(factors: GramFactors, ay: np.ndarray, weights: np.ndarray
                      ) -> Tuple[np.ndarray, float]:
    """
    f = (W - W Y (I + Z W Y)^{-1} Z W) A y with Y = P L, Z = U

    Returns:
        Tuple of (spectrum coefficients, condition estimate of I + Z W Y)
    """
    Y = factors.permutation @ factors.lower
    Z = factors.upper
    inner = np.eye(weights.size) + Z @ (weights[:, None] * Y)

    lu, piv = scipy.linalg.lu_factor(inner, check_finite=False)
    gecon, = get_lapack_funcs(('gecon',), (lu,))
    rcond, info = gecon(lu, np.linalg.norm(inner, 1), norm='1')
    condition = float('inf') if info != 0 or rcond == 0 else 1.0 / float(rcond)
    if not np.isfinite(condition):
        return np.full(weights.size, np.nan, dtype=np.complex128), condition

    wy = weights * ay
    f = wy - weights * (Y @ scipy.linalg.lu_solve((lu, piv), Z @ wy, check_finite=False))
    return f, condition


def solve_general(series: SampledSeries, kernel: WeightKernel, n_coeffs: int,
                  tolerance: float = DEFAULT_TOLERANCE,
                  condition_limit: float = CONDITION_LIMIT) -> InterpSolution:
    """
    Solve for any node set through the LU factors of AA^H and the Kailath identity

    Falls back to the dense symmetric solve when the inner system is
    ill-conditioned or the result misses the stationarity tolerance.
    """
    _check_dimensions(series, kernel, n_coeffs)
    started = time.perf_counter()

    y, offset = _centred(series)
    A = build_type1(series.nodes, n_coeffs)
    ay = forward(A, y).coeffs
    G = gram(A)
    weights = kernel.weights

    f, condition = _kailath_spectrum(factor_gram(G), ay, weights)
    logger.debug(f"Kailath solve M={series.m} N={n_coeffs}: condition estimate {condition:.3e}")

    def dense_fallback() -> InterpSolution:
        try:
            dense = _dense_spectrum(G, ay, weights)
        except SolverError as e:
            raise SolverError(f"{e} (inner condition estimate {condition:.3e})") from e
        return _finish(dense, series, A, kernel, ay, offset, SolveMethod.DENSE_ORACLE, condition)

    if condition > condition_limit:
        logger.warning(f"Inner system condition estimate {condition:.3e} exceeds "
                       f"{condition_limit:.0e}; using the dense solve")
        solution = dense_fallback()
    else:
        solution = _finish(f, series, A, kernel, ay, offset, SolveMethod.KAILATH_LU, condition)
        if solution.stationarity_residual > tolerance:
            logger.warning(f"Kailath residual {solution.stationarity_residual:.3e} exceeds "
                           f"{tolerance:.0e}; using the dense solve")
            solution = dense_fallback()

    if solution.stationarity_residual > tolerance:
        logger.warning(f"Stationarity residual {solution.stationarity_residual:.3e} "
                       f"above tolerance {tolerance:.0e}")
    logger.debug(f"solve_general finished in {time.perf_counter() - started:.3f}s "
                 f"via {solution.method.value}")
    return solution


def solve_dense(series: SampledSeries, kernel: WeightKernel, n_coeffs: int) -> InterpSolution:
    """Symmetric dense solve of (W^{-1} + G) f = A y via Cholesky"""
    _check_dimensions(series, kernel, n_coeffs)
    y, offset = _centred(series)
    A = build_type1(series.nodes, n_coeffs)
    ay = forward(A, y).coeffs
    f = _dense_spectrum(gram(A), ay, kernel.weights)
    return _finish(f, series, A, kernel, ay, offset, SolveMethod.DENSE_ORACLE)


def inverse_adjoint(series: SampledSeries, kernel: WeightKernel, n_coeffs: int,
                    tolerance: float = DEFAULT_TOLERANCE) -> InterpSolution:
    """Coefficients whose adjoint transform reproduces the series, closed form when possible"""
    if series.is_equispaced() and n_coeffs <= series.m:
        return solve_equispaced(series, kernel, n_coeffs)
    return solve_general(series, kernel, n_coeffs, tolerance=tolerance)


def curvature_spectrum(series: SampledSeries, kernel: WeightKernel, n_coeffs: int) -> np.ndarray:
    """Ascending eigenvalues of I + W^1/2 G W^1/2, the Hessian in the W^1/2 metric"""
    if kernel.n_coeffs != n_coeffs:
        raise ValueError(f"kernel has {kernel.n_coeffs} weights but n_coeffs is {n_coeffs}")
    G = gram(build_type1(series.nodes, n_coeffs))
    root = np.sqrt(kernel.weights)
    H = np.eye(n_coeffs) + root[:, None] * G * root[None, :]
    return scipy.linalg.eigvalsh(H)


def curvature_check(series: SampledSeries, kernel: WeightKernel, n_coeffs: int) -> float:
    """
    Minimum eigenvalue of the transformed Hessian I + W^1/2 G W^1/2

    Positive exactly when W^{-1} + G is positive definite; for equispaced
    nodes the eigenvalues are M w_k + 1.
    """
    minimum = float(curvature_spectrum(series, kernel, n_coeffs)[0])
    if minimum <= 0:
        logger.warning(f"Hessian is not positive definite (minimum eigenvalue {minimum:.3e})")
    return minimum


def ifft_baseline(series: SampledSeries, kernel: WeightKernel, n_coeffs: int,
                  nominal_grid: np.ndarray) -> InterpSolution:
    """
    Weighted truncated inverse FFT on the nominal equispaced grid

    Observations snap to their nearest grid slot (collisions are averaged),
    empty slots hold zero after mean-centring, and the truncated spectrum gets
    the same elementwise weighting as the equispaced closed form.
    """
    if kernel.n_coeffs != n_coeffs:
        raise ValueError(f"kernel has {kernel.n_coeffs} weights but n_coeffs is {n_coeffs}")
    grid = np.asarray(nominal_grid, dtype=np.float64)
    mg = grid.size
    if mg < 2:
        raise ValueError("nominal grid needs at least two nodes")
    step = 1.0 / mg
    if np.any(np.abs(np.diff(grid) - step) > 1e-9):
        raise ValueError("nominal grid must be equispaced with spacing 1/len(grid)")
    if n_coeffs > mg:
        raise ValueError(f"n_coeffs={n_coeffs} exceeds the {mg}-point nominal grid")
    if series.nodes[0] < grid[0] - step or series.nodes[-1] > grid[-1] + step:
        raise ValueError("nominal grid does not cover the observation window")

    y, offset = _centred(series)
    slots = np.clip(np.rint((series.nodes - grid[0]) / step).astype(np.int64), 0, mg - 1)
    counts = np.bincount(slots, minlength=mg)
    sums = np.bincount(slots, weights=y, minlength=mg)
    collisions = int(np.sum(counts > 1))
    if collisions:
        logger.warning(f"{collisions} grid slots hold several observations; values averaged "
                       f"(grid coarser than data)")
    filled = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)

    k = np.arange(-(n_coeffs // 2), n_coeffs // 2)
    shift = np.exp(-2j * np.pi * k * grid[0])
    h = shift * np.fft.fft(filled)[k % mg]
    f = searle_filter(h, kernel.weights, mg)

    grid_series = SampledSeries(nodes=grid, values=filled + offset)
    A = build_type1(grid, n_coeffs)
    ay = forward(A, filled).coeffs
    return _finish(f, grid_series, A, kernel, ay, offset, SolveMethod.TRUNCATED_IFFT)
