"""
Admissible weight functions on the frequency grid

Weights form the diagonal of the regularizer W-hat. They are evaluated at
z = k/N, reduced to a positive magnitude, and normalized to unit L1 norm.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from spectral_core import frequency_indices

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-300
NORMALIZATION_TOLERANCE = 1e-12
SYMMETRY_TOLERANCE = 1e-12

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 2
DEFAULT_GAMMA = 1e-2


class KernelFamily(str, Enum):
    FEJER = "fejer"
    SOBOLEV = "sobolev"
    FLAT = "flat"


@dataclass(frozen=True)
class WeightKernel:
    """Diagonal of W-hat indexed k = -N/2 ... N/2-1, plus the parameters that built it"""

    weights: np.ndarray
    family: KernelFamily
    gamma: float = DEFAULT_GAMMA
    alpha: float = DEFAULT_ALPHA
    beta: int = DEFAULT_BETA
    norm_constant: float = 1.0

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size < 2 or weights.size % 2:
            raise ValueError(f"weights must be a vector of even length >= 2, got {weights.shape}")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("weights must be finite and strictly positive")
        total = math.fsum(weights)
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise ValueError(f"weights must sum to 1, got {total!r}")

        centre = weights.size // 2
        ks = np.arange(1, centre)
        asymmetry = np.abs(weights[centre + ks] - weights[centre - ks])
        if asymmetry.size and asymmetry.max() > SYMMETRY_TOLERANCE:
            raise ValueError(
                f"weights must be symmetric in k (max deviation {asymmetry.max():.3e})")

        weights = weights.copy()
        weights.setflags(write=False)
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'family', KernelFamily(self.family))

    @property
    def n_coeffs(self) -> int:
        return int(self.weights.size)

    def weight(self, k: int) -> float:
        """Weight at integer frequency k"""
        return float(self.weights[k + self.n_coeffs // 2])


def _normalize(raw: np.ndarray, floor: float) -> Tuple[np.ndarray, float]:
    total = math.fsum(raw)
    if not total > 0:
        raise ValueError("kernel has no positive mass on the frequency grid")
    constant = 1.0 / total
    weights = np.maximum(raw * constant, floor)
    # floored entries add mass; rescale so the L1 norm stays 1
    weights = weights / math.fsum(weights)
    return weights, constant


def _check_floor(floor: float) -> None:
    if not 0 < floor < 1e-3:
        raise ValueError(f"weight floor must lie in (0, 1e-3), got {floor}")


def fejer_kernel(n_coeffs: int, floor: float = WEIGHT_FLOOR) -> WeightKernel:
    """
    Fejer kernel of order 2, |B_{2,N}(k/N)|, L1-normalized

    B_{2,N}(x) = 2 (1 + e^{-2 pi i x}) / N^2 * (sin(N pi x / 2) / sin(pi x))^2;
    the modulus of the phase factor is 2 |cos(pi x)| and the ratio tends to
    (N/2)^2 at x = 0.
    """
    _check_floor(floor)
    k = frequency_indices(n_coeffs)
    x = k / n_coeffs

    ratio = np.empty(n_coeffs, dtype=np.float64)
    nonzero = k != 0
    ratio[nonzero] = (np.sin(0.5 * n_coeffs * np.pi * x[nonzero]) /
                      np.sin(np.pi * x[nonzero])) ** 2
    ratio[~nonzero] = (0.5 * n_coeffs) ** 2

    raw = 4.0 * np.abs(np.cos(np.pi * x)) / n_coeffs ** 2 * ratio
    weights, constant = _normalize(raw, floor)
    return WeightKernel(weights=weights, family=KernelFamily.FEJER, norm_constant=constant)


def _check_sobolev_parameters(alpha: float, beta: int, gamma: float) -> None:
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if int(beta) != beta or beta < 1:
        raise ValueError(f"beta must be a positive integer, got {beta}")


def sobolev_weight_fn(z: Union[float, np.ndarray], alpha: float = DEFAULT_ALPHA,
                      beta: int = DEFAULT_BETA, gamma: float = DEFAULT_GAMMA
                      ) -> Union[float, np.ndarray]:
    """Unnormalized g(z) = (1/4 - z^2)^beta / (gamma + |z|^(2 alpha)) for |z| <= 1/2"""
    _check_sobolev_parameters(alpha, beta, gamma)
    z_arr = np.asarray(z, dtype=np.float64)
    if np.any(np.abs(z_arr) > 0.5):
        raise ValueError("z must lie in [-1/2, 1/2]")
    value = (0.25 - z_arr ** 2) ** int(beta) / (gamma + np.abs(z_arr) ** (2 * alpha))
    if np.ndim(z) == 0:
        return float(value)
    return value


def sobolev_kernel(n_coeffs: int, alpha: float = DEFAULT_ALPHA, beta: int = DEFAULT_BETA,
                   gamma: float = DEFAULT_GAMMA, floor: float = WEIGHT_FLOOR) -> WeightKernel:
    """g(k/N) scaled by c = 1 / sum_k g(k/N)"""
    _check_floor(floor)
    k = frequency_indices(n_coeffs)
    raw = sobolev_weight_fn(k / n_coeffs, alpha=alpha, beta=beta, gamma=gamma)
    weights, constant = _normalize(raw, floor)
    return WeightKernel(weights=weights, family=KernelFamily.SOBOLEV, gamma=float(gamma),
                        alpha=float(alpha), beta=int(beta), norm_constant=constant)


def flat_kernel(n_coeffs: int, floor: float = WEIGHT_FLOOR) -> WeightKernel:
    """
    Uniform weights 1/(N-1) on the paired band |k| < N/2

    The unpaired k = -N/2 term has no conjugate partner, so it gets the floor,
    as it does in the Fejer and Sobolev families whose weights vanish at
    |z| = 1/2. Real data then reconstructs to a real series.
    """
    _check_floor(floor)
    k = frequency_indices(n_coeffs)
    raw = np.where(k == -(n_coeffs // 2), 0.0, 1.0)
    weights, constant = _normalize(raw, floor)
    return WeightKernel(weights=weights, family=KernelFamily.FLAT, norm_constant=constant)


def build_kernel(family: Union[str, KernelFamily], n_coeffs: int, alpha: float = DEFAULT_ALPHA,
                 beta: int = DEFAULT_BETA, gamma: float = DEFAULT_GAMMA,
                 floor: float = WEIGHT_FLOOR) -> WeightKernel:
    family = KernelFamily(family)
    if family is KernelFamily.SOBOLEV:
        return sobolev_kernel(n_coeffs, alpha=alpha, beta=beta, gamma=gamma, floor=floor)
    if family is KernelFamily.FEJER:
        return fejer_kernel(n_coeffs, floor=floor)
    return flat_kernel(n_coeffs, floor=floor)


def high_freq_attenuation(kernel: WeightKernel) -> float:
    """weight(N/2 - 1) / weight(0): relative weight of the highest resolved frequency"""
    return kernel.weight(kernel.n_coeffs // 2 - 1) / kernel.weight(0)


def kernel_curves(n_coeffs: int, gammas: Sequence[float], alpha: float = DEFAULT_ALPHA,
                  beta: int = DEFAULT_BETA) -> Tuple[np.ndarray, Dict[float, np.ndarray]]:
    """
    Sobolev weights on z = k/N for several gamma values

    Returns:
        Tuple of (z grid, {gamma: weights})
    """
    z = frequency_indices(n_coeffs) / n_coeffs
    curves: Dict[float, np.ndarray] = {}
    for gamma in gammas:
        curves[float(gamma)] = sobolev_kernel(n_coeffs, alpha=alpha, beta=beta,
                                              gamma=gamma).weights
    return z, curves


def time_profile(kernel: WeightKernel, x: Union[float, Sequence[float], np.ndarray]) -> np.ndarray:
    """Time-domain impulse response sum_k w_k exp(2 pi i k x) of the weight filter"""
    x_arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    k = frequency_indices(kernel.n_coeffs)
    profile = np.exp(2j * np.pi * np.outer(x_arr, k)) @ kernel.weights
    # the unpaired -N/2 term leaves an imaginary part of size w(-N/2)
    return profile.real


def gamma_sweep(n_coeffs: int, gammas: Sequence[float], alpha: float = DEFAULT_ALPHA,
                beta: int = DEFAULT_BETA) -> List[Tuple[float, float]]:
    """(gamma, high-frequency attenuation) pairs, sorted by gamma"""
    return [(float(g), high_freq_attenuation(sobolev_kernel(n_coeffs, alpha, beta, g)))
            for g in sorted(gammas)]
