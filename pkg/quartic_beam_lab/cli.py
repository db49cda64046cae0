#!/usr/bin/env python3
"""
Command line entry point of the quartic beam lab.

Each subcommand reads one run config (JSON, "schema": 1), applies flag
overrides, runs one experiment and writes <subcommand>.json and/or
<subcommand>.csv into the output directory.

Exit status: 0 on success (accuracy warnings included), 2 for invalid
configs or arguments, 3 when M(λ) is singular at a positive λ, 1 for
anything unexpected.
"""
import argparse
import os
import sys
from typing import List, Optional

import pandas as pd
from loguru import logger
from pydantic import BaseModel, ValidationError

from .birman import assemble_spectral, born_identity_residual, expansion_residuals, gamma_derivative_orders
from .config import RunConfig, load_config
from .decay import (
    curve_from_samples,
    curve_to_frame,
    decay_report,
    default_sample_cloud,
    free_check,
    mode_label,
    samples_to_frame,
    slope_fit,
    time_grid,
)
from .errors import (
    DegenerateOperatorError,
    DegeneratePotentialError,
    InvalidArgumentError,
    SpectralSingularityError,
)
from .model import ExpansionSummary, PropagatorMode
from .potential import WEAK_GAUSSIAN_WELL
from .quadrature import build_box_grid
from .resonance import classify, coupling_scan, scan_to_frame
from .settings import get_settings
from .stone import PropagatorRequest, free_propagator_kernel, perturbed_propagator_kernel
from .utils import geometric_sequence

SUBCOMMANDS = ['classify', 'scan-coupling', 'free-check', 'propagate', 'expand-m', 'decay-report', 'born-check']

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_INVALID = 2
EXIT_SINGULAR = 3

# Potential used when the run config has none
DEFAULT_POTENTIALS = {
    'decay-report': WEAK_GAUSSIAN_WELL,
}


def parse_arguments(argv: Optional[List[str]] = None):
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog='qbl',
        description="Zero-energy resonances and propagator decay for H = Δ² + V in three dimensions",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Classify zero energy for the default Gaussian well
  qbl classify --config run.json

  # Locate resonant couplings and write scan-coupling.csv
  qbl scan-coupling --config run.json --out results

  # Check the free engine against closed-form kernels
  qbl free-check
        """
    )

    parser.add_argument(
        'subcommand',
        choices=SUBCOMMANDS,
        help='Experiment to run'
    )

    parser.add_argument(
        '--config',
        help='Run config JSON file (default: built-in defaults)'
    )

    parser.add_argument('--radius', type=float, help='Override grid.radius')
    parser.add_argument('--order', type=int, help='Override grid.order')
    parser.add_argument('--coupling', type=float, help='Override potential.coupling')
    parser.add_argument('--rank-tol', type=float, help='Override spectral.rank_tol')
    parser.add_argument('--lambda0', type=float, help='Override spectral.lambda0')
    parser.add_argument('--mode', choices=[m.value for m in PropagatorMode], help='Override propagator.mode')
    parser.add_argument('--t-min', type=float, help='Override propagator.t_min')
    parser.add_argument('--t-max', type=float, help='Override propagator.t_max')
    parser.add_argument('--out', help='Override output.dir')

    parser.add_argument(
        '--free',
        action='store_true',
        help='propagate: use the free operator instead of Δ² + V'
    )

    parser.add_argument(
        '--log-level',
        help='Override the log_level setting'
    )

    return parser.parse_args(argv)


class Artifacts:
    """Writes <name>.json / <name>.csv according to the output section"""

    def __init__(self, config: RunConfig, name: str):
        self.dir = config.output.dir or get_settings().output_dir
        self.formats = config.output.formats
        self.name = name
        os.makedirs(self.dir, exist_ok=True)

    def json(self, model: BaseModel, suffix: str = ''):
        if 'json' not in self.formats:
            return
        path = os.path.join(self.dir, f"{self.name}{suffix}.json")
        with open(path, 'w') as f:
            f.write(model.model_dump_json(indent=2, by_alias=True))
        logger.info(f"Wrote {path}")

    def csv(self, frame: pd.DataFrame, suffix: str = ''):
        if 'csv' not in self.formats:
            return
        path = os.path.join(self.dir, f"{self.name}{suffix}.csv")
        frame.to_csv(path, index=False)
        logger.info(f"Wrote {path}")


def _grid(config: RunConfig):
    return build_box_grid(config.grid.radius, config.grid.order)


def _cloud(config: RunConfig):
    return default_sample_cloud(config.grid.radius, config.propagator.cloud_size, config.propagator.seed)


def _request(config: RunConfig, free: bool) -> PropagatorRequest:
    p = config.propagator
    xs, ys = _cloud(config)
    return PropagatorRequest(mode=p.mode, alpha=p.alpha, t=time_grid(p.t_min, p.t_max, p.t_points).tolist(),
                             x=[tuple(x) for x in xs], y=[tuple(y) for y in ys], free=free,
                             lambda0=config.spectral.lambda0, budget=p.budget)


def run_classify(config: RunConfig, out: Artifacts) -> int:
    sa = assemble_spectral(config.potential, _grid(config))
    report = classify(sa, config.spectral.rank_tol)
    out.json(report)
    return len(report.warnings)


def run_scan_coupling(config: RunConfig, out: Artifacts) -> int:
    s = config.scan
    result = coupling_scan(config.potential, _grid(config), (s.c_min, s.c_max), s.steps, config.spectral.rank_tol)
    out.csv(scan_to_frame(result))
    out.json(result)
    return 0


def run_free_check(config: RunConfig, out: Artifacts) -> int:
    report = free_check(config.propagator.budget, seed=config.propagator.seed)
    out.json(report)
    return 0 if report.passed else 1


def run_propagate(config: RunConfig, out: Artifacts, free: bool) -> int:
    request = _request(config, free)
    if free:
        samples = free_propagator_kernel(request)
    else:
        sa = assemble_spectral(config.potential, _grid(config))
        report = classify(sa, config.spectral.rank_tol)
        samples = perturbed_propagator_kernel(request, sa, report.classification)
    curve = curve_from_samples(samples, mode_label(request.mode, request.alpha), "free" if free else "perturbed")
    curve.fit = slope_fit(curve)
    out.csv(samples_to_frame(samples))
    out.csv(curve_to_frame(curve), suffix='-curve')
    out.json(curve)
    return sum(s.warn_flag for s in samples)


def run_expand_m(config: RunConfig, out: Artifacts) -> int:
    sa = assemble_spectral(config.potential, _grid(config))
    sign = config.spectral.sign
    lams = geometric_sequence(1e-2, 0.5, 5)
    summary = ExpansionSummary(
        expansions=[expansion_residuals(sa, sign, lams, order) for order in (0, 1)],
        gamma_derivative=gamma_derivative_orders(sa, sign, lams),
    )
    out.json(summary)
    warnings = 0
    for report, floor in zip(summary.expansions, (0.9, 2.7)):
        if report.fitted_order < floor:
            logger.warning(f"Expansion of order {report.order} has residual order "
                           f"{report.fitted_order:.3f} < {floor}")
            warnings += 1
    return warnings


def run_decay_report(config: RunConfig, out: Artifacts) -> int:
    p = config.propagator
    modes = (PropagatorMode.cosine, PropagatorMode.sine_over_sqrt)
    report = decay_report(config.potential, _grid(config), modes, (p.t_min, p.t_max), p.t_points,
                          config.spectral.rank_tol, config.spectral.lambda0, p.budget, _cloud(config))
    out.json(report)
    for curve in report.curves:
        out.csv(curve_to_frame(curve), suffix=f"-{curve.mode}-{curve.provenance}")
    return sum(not r.passed for r in report.results)


def run_born_check(config: RunConfig, out: Artifacts) -> int:
    sa = assemble_spectral(config.potential, _grid(config))
    xs, ys = _cloud(config)
    report = born_identity_residual(sa, 4.0, xs, ys, config.spectral.sign)
    out.json(report)
    return 0


def run(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return the exit status"""
    args = parse_arguments(argv)
    settings = get_settings()
    log_level = args.log_level or settings.log_level

    logger.remove()
    logger.add(sys.stderr, level=log_level)

    logger.info(f"Settings:")
    logger.info(f"  log_level: {log_level}")
    logger.info(f"  threads: {settings.threads}")
    logger.info(f"  factorization_cache_size: {settings.factorization_cache_size}")

    try:
        config = load_config(args.config, DEFAULT_POTENTIALS.get(args.subcommand),
                             radius=args.radius, order=args.order, coupling=args.coupling,
                             rank_tol=args.rank_tol, lambda0=args.lambda0, mode=args.mode,
                             t_min=args.t_min, t_max=args.t_max, out=args.out)
        out = Artifacts(config, args.subcommand)
        logger.info(f"Running {args.subcommand} on {config.potential.family.value} "
                    f"(c={config.potential.coupling:g}), grid R={config.grid.radius:g} order={config.grid.order}")
        if args.subcommand == 'classify':
            warnings = run_classify(config, out)
        elif args.subcommand == 'scan-coupling':
            warnings = run_scan_coupling(config, out)
        elif args.subcommand == 'free-check':
            warnings = run_free_check(config, out)
        elif args.subcommand == 'propagate':
            warnings = run_propagate(config, out, args.free)
        elif args.subcommand == 'expand-m':
            warnings = run_expand_m(config, out)
        elif args.subcommand == 'decay-report':
            warnings = run_decay_report(config, out)
        else:
            warnings = run_born_check(config, out)
    except ValidationError as e:
        logger.error(f"Invalid config:")
        for error in e.errors():
            location = '.'.join(str(part) for part in error['loc'])
            logger.error(f"  {location}: {error['msg']}")
        return EXIT_INVALID
    except FileNotFoundError as e:
        logger.error(f"Config file not found: {e.filename}")
        return EXIT_INVALID
    except (InvalidArgumentError, DegeneratePotentialError, DegenerateOperatorError) as e:
        logger.error(str(e))
        return EXIT_INVALID
    except SpectralSingularityError as e:
        logger.error(f"Aborted at λ={e.lam:.17g}: {e}")
        print(f"lambda={e.lam:.17g}")
        return EXIT_SINGULAR
    except Exception:
        logger.exception(f"Unexpected failure in {args.subcommand}")
        return EXIT_UNEXPECTED

    logger.info(f"{args.subcommand} finished with {warnings} warnings")
    return EXIT_OK


def main():
    """Main entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
