#!/usr/bin/env python3
"""
Command-line entry point for ingap: direct inverse NFFT spectra of gapped series
"""

import os
import sys
import logging
import argparse
from pathlib import Path
from typing import List, Optional

# Version
__version__ = "0.1.0"

# Add src to Python path
sys.path.insert(0, str(Path(__file__).parent / "src"))

from dotenv import load_dotenv
from pipeline_manager import (COMMANDS, EXIT_USAGE, NEEDS_INPUT, ConfigError, PipelineManager,
                              RunConfig)

PACKAGE_MODULES = ['spectral_core', 'kernels', 'solver', 'evaluate', 'series_loader',
                   'report_writer', 'pipeline_manager', '__main__']


def setup_logging(debug: bool = False) -> None:
    """Log to logs/ingap.log (or $INGAP_LOG_DIR) and stderr"""
    log_dir = Path(os.getenv('INGAP_LOG_DIR', 'logs'))
    log_dir.mkdir(parents=True, exist_ok=True)

    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_dir / 'ingap.log', encoding='utf-8'),
            logging.StreamHandler()
        ]
    )

    # Third-party numerics stay quiet even in debug mode
    for noisy in ('matplotlib', 'numexpr'):
        logging.getLogger(noisy).setLevel(logging.WARNING)

    if debug:
        for module in PACKAGE_MODULES:
            logging.getLogger(module).setLevel(logging.DEBUG)


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(
        prog='ingap',
        description='Spectra and reconstructions of irregularly sampled series via the '
                    'direct inverse NFFT'
    )
    parser.add_argument('command', choices=COMMANDS,
                        help='solve: spectrum + reconstruction; eval: cross-validation '
                             'protocol; kernel: weight curves; transform: forward NDFT')
    parser.add_argument('--config', type=Path, metavar='PATH',
                        default=os.getenv('INGAP_CONFIG'),
                        help='key=value config file (default: $INGAP_CONFIG)')
    parser.add_argument('--n-coeffs', type=int, metavar='K',
                        help='Number of Fourier coefficients (even)')
    parser.add_argument('--gamma', type=float, metavar='G',
                        help='Sobolev kernel gamma; replaces kernel_gamma and kernel_gammas')
    parser.add_argument('--seed', type=int, metavar='S', help='Random seed for masking')
    parser.add_argument('--out', type=Path, metavar='DIR', help='Output directory')
    parser.add_argument('--debug', action='store_true', help='Enable debug logging')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')

    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    load_dotenv()
    try:
        args = parse_arguments(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors and 0 for --help / --version
        return int(e.code or 0)

    setup_logging(args.debug)
    logger = logging.getLogger(__name__)

    try:
        config = RunConfig.from_file(args.config, overrides={
            'n_coeffs': args.n_coeffs,
            'kernel_gamma': args.gamma,
            'seed': args.seed,
            'output_dir': args.out,
        })
    except ConfigError as e:
        logger.error(f"❌ Configuration error: {e}")
        return EXIT_USAGE

    if args.command in NEEDS_INPUT and config.input_path is None:
        logger.error(f"❌ '{args.command}' needs input_path in the config file")
        return EXIT_USAGE

    logger.info(f"Configuration: n_coeffs={config.n_coeffs}, kernel={config.kernel_family.value}, "
                f"gamma={config.kernel_gamma}, seed={config.seed}, out={config.output_dir}")

    return PipelineManager(config).run(args.command)


if __name__ == '__main__':
    sys.exit(main())
