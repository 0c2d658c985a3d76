"""
Pipeline manager running the solve, eval, kernel and transform commands
"""

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

import numpy as np
from dotenv import dotenv_values

from evaluate import DEFAULT_FRACTIONS, MaskMode, run_protocol
from kernels import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_GAMMA,
    KernelFamily,
    build_kernel,
    high_freq_attenuation,
    kernel_curves,
)
from report_writer import ReportWriter
from series_loader import IngestError, ingest_csv
from solver import DEFAULT_TOLERANCE, SolverError, inverse_adjoint
from spectral_core import (
    SampledSeries,
    build_type1,
    forward,
    gram,
    gram_identity_deviation,
    max_off_diagonal,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2

COMMANDS = ("solve", "eval", "kernel", "transform")
NEEDS_INPUT = ("solve", "eval", "transform")

_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


class ConfigError(ValueError):
    """Invalid or incomplete run configuration"""


def _parse(key: str, raw: str, kind: Callable[[str], Any]) -> Any:
    try:
        return kind(raw.strip())
    except ValueError as e:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({e})") from e


def _parse_int(raw: str) -> int:
    value = float(raw)
    if value != int(value):
        raise ValueError("not an integer")
    return int(value)


def _parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError("expected true or false")


def _parse_list(raw: str) -> Tuple[str, ...]:
    return tuple(item.strip() for item in raw.split(',') if item.strip())


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings of one command"""

    input_path: Optional[Path] = None
    timestamp_column: str = "timestamp"
    value_column: str = "value"
    n_coeffs: int = 1024
    kernel_family: KernelFamily = KernelFamily.SOBOLEV
    kernel_alpha: float = DEFAULT_ALPHA
    kernel_beta: int = DEFAULT_BETA
    kernel_gamma: float = DEFAULT_GAMMA
    kernel_gammas: Tuple[float, ...] = ()
    mask_modes: Tuple[MaskMode, ...] = (MaskMode.RANDOM, MaskMode.CONTIGUOUS_BLOCK)
    mask_fractions: Tuple[float, ...] = DEFAULT_FRACTIONS
    replicates: int = 7
    permutations: int = 10_000
    output_dir: Path = field(default_factory=lambda: Path("output"))
    seed: int = 0
    tolerance: float = DEFAULT_TOLERANCE
    record_timings: bool = False

    def __post_init__(self):
        if not self.kernel_gammas:
            object.__setattr__(self, 'kernel_gammas', (self.kernel_gamma,))
        self.validate()

    def validate(self) -> None:
        if self.n_coeffs < 2 or self.n_coeffs % 2:
            raise ConfigError(f"n_coeffs must be even and >= 2, got {self.n_coeffs}")
        for gamma in (self.kernel_gamma, *self.kernel_gammas):
            if not gamma > 0:
                raise ConfigError(f"kernel gamma must be positive, got {gamma}")
        if not self.kernel_alpha > 0:
            raise ConfigError(f"kernel_alpha must be positive, got {self.kernel_alpha}")
        if self.kernel_beta < 1:
            raise ConfigError(f"kernel_beta must be an integer >= 1, got {self.kernel_beta}")
        for fraction in self.mask_fractions:
            if not 0.0 < fraction < 1.0:
                raise ConfigError(f"mask fractions must lie in (0, 1), got {fraction}")
        if self.replicates < 1:
            raise ConfigError(f"replicates must be >= 1, got {self.replicates}")
        if self.permutations < 100:
            raise ConfigError(f"permutations must be >= 100, got {self.permutations}")
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Optional[str]],
                     base_dir: Optional[Path] = None) -> "RunConfig":
        """
        Build a config from flat string values

        Relative paths resolve against base_dir (the config file's directory)
        or the working directory.
        """
        known = set(cls.__dataclass_fields__)
        unknown = sorted(k for k in mapping if k not in known)
        if unknown:
            raise ConfigError(f"Unknown config key(s): {', '.join(unknown)}")

        base = Path(base_dir) if base_dir is not None else Path.cwd()
        values: Dict[str, Any] = {}
        for key, raw in mapping.items():
            if raw is None or raw.strip() == '':
                continue
            if key in ('input_path', 'output_dir'):
                path = Path(raw.strip()).expanduser()
                values[key] = (path if path.is_absolute() else base / path).resolve()
            elif key in ('timestamp_column', 'value_column'):
                values[key] = raw.strip()
            elif key in ('n_coeffs', 'kernel_beta', 'replicates', 'permutations', 'seed'):
                values[key] = _parse(key, raw, _parse_int)
            elif key in ('kernel_alpha', 'kernel_gamma', 'tolerance'):
                values[key] = _parse(key, raw, float)
            elif key == 'kernel_family':
                values[key] = _parse(key, raw.lower(), KernelFamily)
            elif key == 'kernel_gammas':
                values[key] = tuple(_parse(key, g, float) for g in _parse_list(raw))
            elif key == 'mask_modes':
                values[key] = tuple(_parse(key, m.lower(), MaskMode) for m in _parse_list(raw))
            elif key == 'mask_fractions':
                values[key] = tuple(_parse(key, f, float) for f in _parse_list(raw))
            elif key == 'record_timings':
                values[key] = _parse(key, raw, _parse_bool)

        if 'output_dir' not in values:
            values['output_dir'] = (base / "output").resolve()
        return cls(**values)

    @classmethod
    def from_file(cls, path: Optional[Path], overrides: Optional[Mapping[str, Any]] = None
                  ) -> "RunConfig":
        """Read a key=value config file (or defaults when path is None) and apply overrides"""
        mapping: Dict[str, Optional[str]] = {}
        base_dir = None
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"Config file not found: {path}")
            mapping = dict(dotenv_values(path))
            base_dir = path.parent
        config = cls.from_mapping(mapping, base_dir=base_dir)
        return config.with_overrides(overrides or {})

    def with_overrides(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Apply CLI flag values; None entries are ignored"""
        changes = {k: v for k, v in overrides.items() if v is not None}
        if 'kernel_gamma' in changes:
            changes['kernel_gammas'] = (changes['kernel_gamma'],)
        if 'output_dir' in changes:
            changes['output_dir'] = Path(changes['output_dir']).expanduser().resolve()
        return replace(self, **changes) if changes else self

    def to_dict(self) -> Dict[str, Any]:
        return {
            'input_path': None if self.input_path is None else str(self.input_path),
            'timestamp_column': self.timestamp_column,
            'value_column': self.value_column,
            'n_coeffs': self.n_coeffs,
            'kernel_family': self.kernel_family.value,
            'kernel_alpha': self.kernel_alpha,
            'kernel_beta': self.kernel_beta,
            'kernel_gamma': self.kernel_gamma,
            'kernel_gammas': list(self.kernel_gammas),
            'mask_modes': [m.value for m in self.mask_modes],
            'mask_fractions': list(self.mask_fractions),
            'replicates': self.replicates,
            'permutations': self.permutations,
            'output_dir': str(self.output_dir),
            'seed': self.seed,
            'tolerance': self.tolerance,
            'record_timings': self.record_timings,
        }


class PipelineManager:
    """Runs one command of the toolkit against a RunConfig"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.writer: Optional[ReportWriter] = None
        self.timings: Dict[str, float] = {}

    def _writer(self) -> ReportWriter:
        if self.writer is None:
            self.writer = ReportWriter(self.config.output_dir)
        return self.writer

    def _timed(self, label: str, func: Callable[[], Any]) -> Any:
        started = time.perf_counter()
        result = func()
        self.timings[label] = time.perf_counter() - started
        logger.debug(f"{label} took {self.timings[label]:.3f}s")
        return result

    def _load_series(self) -> SampledSeries:
        if self.config.input_path is None:
            raise ConfigError("input_path is required for this command")
        series = self._timed('ingest', lambda: ingest_csv(
            self.config.input_path, self.config.timestamp_column, self.config.value_column))
        if self.config.n_coeffs > series.m:
            logger.warning(f"⚠️ n_coeffs={self.config.n_coeffs} exceeds the {series.m} "
                           f"valid observations")
        return series

    def _kernel(self):
        c = self.config
        return build_kernel(c.kernel_family, c.n_coeffs, alpha=c.kernel_alpha,
                            beta=c.kernel_beta, gamma=c.kernel_gamma)

    def dense_grid(self, series: SampledSeries) -> np.ndarray:
        """max(4N, 2M) equispaced points spanning the observation window"""
        size = max(4 * self.config.n_coeffs, 2 * series.m)
        return np.linspace(series.nodes[0], series.nodes[-1], size)

    def cmd_solve(self) -> Dict[str, Path]:
        series = self._load_series()
        kernel = self._kernel()
        solution = self._timed('solve', lambda: inverse_adjoint(
            series, kernel, self.config.n_coeffs, tolerance=self.config.tolerance))
        logger.info(f"📊 {solution.method.value}: cost={solution.cost:.6g} "
                    f"residual={solution.stationarity_residual:.3e}")

        writer = self._writer()
        exported = {
            'spectrum': writer.write_spectrum(solution, kernel),
            'reconstruction': self._timed('reconstruct', lambda: writer.write_reconstruction(
                solution, series, self.dense_grid(series))),
        }
        report: Dict[str, Any] = {
            'config': self.config.to_dict(),
            'method': solution.method.value,
            'cost': solution.cost,
            'stationarity_residual': solution.stationarity_residual,
            'residual_relative': solution.residual_relative,
            'condition_estimate': solution.condition_estimate,
            'offset': solution.offset,
            'observations': series.m,
            'equispaced': series.is_equispaced(),
            'time_origin': series.time_origin,
            'time_span': series.time_span,
            'kernel': {
                'family': kernel.family.value,
                'alpha': kernel.alpha,
                'beta': kernel.beta,
                'gamma': kernel.gamma,
                'norm_constant': kernel.norm_constant,
                'high_freq_attenuation': high_freq_attenuation(kernel),
            },
        }
        if self.config.record_timings:
            report['timings'] = dict(self.timings)
        exported['solve_report'] = writer.write_json("solve_report.json", report)
        return exported

    def cmd_eval(self) -> Dict[str, Path]:
        series = self._load_series()
        kernel = self._kernel()
        c = self.config
        reports = self._timed('protocol', lambda: run_protocol(
            series, c.n_coeffs, kernel, c.mask_fractions, c.mask_modes,
            replicates=c.replicates, permutations=c.permutations, seed=c.seed))

        writer = self._writer()
        payload: Dict[str, Any] = {
            'config': c.to_dict(),
            'observations': series.m,
            'grid': {'modes': [m.value for m in c.mask_modes],
                     'fractions': list(c.mask_fractions)},
            'cells': [r.to_dict() for r in reports],
        }
        if c.record_timings:
            payload['timings'] = dict(self.timings)
        failures = sum(len(r.failures) for r in reports)
        if failures:
            logger.warning(f"⚠️ {failures} replicates failed; see eval_report.json")
        return {
            'eval_report': writer.write_json("eval_report.json", payload),
            'replicates': writer.write_replicates(reports),
        }

    def cmd_kernel(self) -> Dict[str, Path]:
        c = self.config
        z, curves = kernel_curves(c.n_coeffs, c.kernel_gammas, alpha=c.kernel_alpha,
                                  beta=c.kernel_beta)
        logger.info(f"📊 Kernel curves for gamma in {', '.join(f'{g:g}' for g in curves)}")
        return {'kernel': self._writer().write_kernel(z, curves)}

    def cmd_transform(self) -> Dict[str, Path]:
        series = self._load_series()
        A = build_type1(series.nodes, self.config.n_coeffs)
        spectrum = self._timed('transform', lambda: forward(A, series.values))
        G = gram(A)
        deviation = gram_identity_deviation(A, G)
        off_diagonal = max_off_diagonal(G)
        logger.info(f"📊 |AA^H - M I|_max = {deviation:.3e}, "
                    f"max off-diagonal = {off_diagonal:.3e}")

        writer = self._writer()
        report: Dict[str, Any] = {
            'config': self.config.to_dict(),
            'observations': series.m,
            'n_coeffs': self.config.n_coeffs,
            'equispaced': series.is_equispaced(),
            'gram_identity_deviation': deviation,
            'max_off_diagonal': off_diagonal,
        }
        if self.config.record_timings:
            report['timings'] = dict(self.timings)
        return {
            'transform': writer.write_transform(spectrum),
            'transform_report': writer.write_json("transform_report.json", report),
        }

    def run(self, command: str) -> int:
        """Execute a command and map the outcome onto an exit code"""
        handlers = {
            'solve': self.cmd_solve,
            'eval': self.cmd_eval,
            'kernel': self.cmd_kernel,
            'transform': self.cmd_transform,
        }
        if command not in handlers:
            logger.error(f"❌ Unknown command: {command}")
            return EXIT_USAGE

        try:
            logger.info(f"🚀 Running {command}")
            exported = handlers[command]()
            for name, path in exported.items():
                logger.info(f"  - {name}: {path}")
            logger.info(f"✅ {command} completed in {sum(self.timings.values()):.2f}s")
            return EXIT_OK
        except (SolverError, np.linalg.LinAlgError) as e:
            logger.error(f"❌ Numerical failure in {command}: {e}")
            return EXIT_NUMERICAL
        except (ConfigError, IngestError, FileNotFoundError) as e:
            logger.error(f"❌ {e}")
            return EXIT_USAGE
        except OSError as e:
            logger.error(f"❌ I/O error in {command}: {e}")
            return EXIT_USAGE
        except ValueError as e:
            logger.error(f"❌ Invalid input for {command}: {e}")
            return EXIT_USAGE
        except KeyboardInterrupt:
            logger.info("⏹️ Process interrupted by user")
            return EXIT_NUMERICAL
        except Exception as e:
            logger.error(f"❌ {command} failed: {e}", exc_info=True)
            return EXIT_NUMERICAL
