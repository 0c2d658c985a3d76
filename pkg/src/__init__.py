"""
ingap: direct inverse NFFT for irregularly sampled time series
"""

__version__ = "0.1.0"

from .spectral_core import (SampledSeries, Spectrum, TransformMatrix, build_type1, forward,
                            adjoint, gram)
from .kernels import WeightKernel, KernelFamily, fejer_kernel, sobolev_kernel, build_kernel
from .solver import (InterpSolution, SolveMethod, SolverError, solve_general, solve_equispaced,
                     ifft_baseline)
from .evaluate import MaskMode, MaskSpec, EvalReport, run_protocol
from .series_loader import IngestError, ingest_csv
from .pipeline_manager import ConfigError, PipelineManager, RunConfig

__all__ = [
    'SampledSeries',
    'Spectrum',
    'TransformMatrix',
    'build_type1',
    'forward',
    'adjoint',
    'gram',
    'WeightKernel',
    'KernelFamily',
    'fejer_kernel',
    'sobolev_kernel',
    'build_kernel',
    'InterpSolution',
    'SolveMethod',
    'SolverError',
    'solve_general',
    'solve_equispaced',
    'ifft_baseline',
    'MaskMode',
    'MaskSpec',
    'EvalReport',
    'run_protocol',
    'IngestError',
    'ingest_csv',
    'ConfigError',
    'PipelineManager',
    'RunConfig',
]
