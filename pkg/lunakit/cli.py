#!/usr/bin/env python3
"""
LunaKit Command Line Interface

Simulate Doppler passes, solve for the receiver position, run Monte Carlo
campaigns and build GDOP maps from a scenario file.
"""

import argparse
import logging
import math
import os
import sys
from typing import List, Optional

import numpy as np

from lunakit import __version__
from lunakit.config import ScenarioConfig, load_config
from lunakit.core import LunaKitError, ValidationError, spherical_coordinates
from lunakit.dop import GdopGrid, gdop_map
from lunakit.formats import (
    read_ephemeris_json, read_manifest, read_observations_csv, read_truth_csv,
    write_ephemeris_json, write_gdop_csv, write_json, write_manifest, write_observations_csv,
    write_solution_json, write_trials_csv, write_truth_csv,
)
from lunakit.montecarlo import (
    SPAN_MARGIN, error_budget_attribution, pass_sweep, run_trials, simulate_receiver,
    summarize, time_to_accuracy,
)
from lunakit.orbit import SampledTrajectory
from lunakit.performance import perf_monitor
from lunakit.solver import locate

logger = logging.getLogger('lunakit.cli')

EPHEMERIS_FILE = 'ephemeris.json'
OBSERVATIONS_FILE = 'observations.csv'
MANIFEST_FILE = 'manifest.json'
TRUTH_FILE = 'truth.csv'
SOLUTION_FILE = 'solution.json'
TRIALS_FILE = 'trials.csv'
SUMMARY_FILE = 'summary.json'
GDOP_FILE = 'gdop.csv'


def setup_logging(verbose: bool):
    """Setup logging configuration"""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def load_scenario_config(args) -> ScenarioConfig:
    """Scenario file with command-line overrides applied"""
    config = load_config(args.config)
    return config.with_overrides(seed=args.seed, trials=args.trials, passes=args.passes,
                                 ephemeris=args.ephemeris, out=args.out)


def _out(config: ScenarioConfig, name: str) -> str:
    return os.path.join(config.output.dir, name)


def cmd_simulate(args):
    """Simulate observations and the broadcast ephemeris for the configured receiver"""
    config = load_scenario_config(args)
    scenario = config.to_scenario()
    receiver = config.receiver_position()
    orbit = scenario.orbit()

    if args.truth_csv:
        truth = read_truth_csv(args.truth_csv)
        provider = SampledTrajectory(truth)
        logger.info(f"Using imported trajectory {args.truth_csv} ({len(truth)} states)")
    else:
        span = (scenario.n_passes + 1) * orbit.period + SPAN_MARGIN
        truth = orbit.sample(0.0, span, scenario.sample_step)
        provider = orbit

    noise_seed, ephemeris_seed = np.random.SeedSequence(config.seed).spawn(2)
    simulation = simulate_receiver(scenario, receiver, provider, truth,
                                   np.random.default_rng(noise_seed), np.random.default_rng(ephemeris_seed))

    write_ephemeris_json(_out(config, EPHEMERIS_FILE), simulation.ephemeris)
    write_observations_csv(_out(config, OBSERVATIONS_FILE), simulation.observations)
    files = [EPHEMERIS_FILE, OBSERVATIONS_FILE]
    if args.export_truth:
        write_truth_csv(_out(config, TRUTH_FILE), truth)
        files.append(TRUTH_FILE)

    lat, lon, alt = spherical_coordinates(receiver, config.constants)
    write_manifest(_out(config, MANIFEST_FILE), {
        'seed': config.seed,
        'scenario_hash': config.scenario_hash(),
        'config': config.to_dict(),
        'receiver_position_km': receiver.tolist(),
        'receiver_lat_lon_alt': [lat, lon, alt],
        'ephemeris_method': scenario.ephemeris_method.name,
        'passes': [window.to_dict() for window in simulation.passes],
        'n_observations': len(simulation.observations),
        'files': files,
    })
    logger.info(f"Simulated {len(simulation.observations)} observations over "
                f"{len(simulation.passes)} pass(es)")
    return 0


def cmd_solve(args):
    """Solve for the receiver position from simulate's output files"""
    config = load_scenario_config(args)
    ephemeris = read_ephemeris_json(args.eph_file or _out(config, EPHEMERIS_FILE))
    observations = read_observations_csv(args.obs_file or _out(config, OBSERVATIONS_FILE), config.constants)

    estimate = locate(observations, ephemeris, config.solver, config.constants)
    extra = {'n_observations': len(observations), 'pass_ids': observations.pass_ids()}
    if estimate.mirror_position is not None:
        logger.info(f"Mirror candidate at {np.round(estimate.mirror_position, 3).tolist()} km "
                    f"(cost {estimate.mirror_cost:.3e})")
    if args.manifest:
        truth = np.asarray(read_manifest(args.manifest)['receiver_position_km'], dtype=float)
        extra['error_m'] = estimate.error_m(truth)
        logger.info(f"Position error {extra['error_m']:.3f} m")

    write_solution_json(_out(config, SOLUTION_FILE), estimate, extra)
    if not estimate.converged:
        logger.warning(f"Solver did not converge: {', '.join(estimate.flags)}")
    return 0


def _gdop_grid(config: ScenarioConfig) -> GdopGrid:
    settings = config.gdop
    grid = GdopGrid.polar(settings.lat_min, settings.lat_max, settings.lat_step, settings.lon_step)
    return gdop_map(config.to_scenario(), settings.n_passes, grid, settings.sample_step)


def cmd_montecarlo(args):
    """Run Monte Carlo trials and write per-trial results and their summary"""
    config = load_scenario_config(args)
    scenario = config.to_scenario()

    if args.grid_only:
        write_gdop_csv(_out(config, GDOP_FILE), _gdop_grid(config))
        return 0

    header = {'scenario_hash': config.scenario_hash(), 'seed': config.seed}
    if args.attribution:
        attribution = error_budget_attribution(scenario, args.workers)
        write_json(_out(config, 'attribution.json'), dict(attribution, **header))
        return 0

    if args.sweep:
        passes = sorted(set(args.sweep))
        sweep = pass_sweep(scenario, passes, args.workers)
        write_json(_out(config, 'sweep.json'), dict(header, **{
            'schema': 'lunakit.summary/1',
            'sweep': sweep,
            'hours_to_10m': time_to_accuracy(sweep, scenario.orbit().period),
        }))
        return 0

    results = run_trials(scenario, args.workers)
    summary = summarize(results)
    write_trials_csv(_out(config, TRIALS_FILE), results)
    write_json(_out(config, SUMMARY_FILE), dict(summary, **header))
    mean = summary.get('mean_error_m', math.nan)
    logger.info(f"Mean error {mean:.3f} m, 99% {summary.get('p99_error_m', math.nan):.3f} m, "
                f"{summary['failures']} failure(s)")
    return 0


def cmd_gdop(args):
    """Write the polar GDOP map"""
    config = load_scenario_config(args)
    write_gdop_csv(_out(config, GDOP_FILE), _gdop_grid(config))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="LunaKit CLI - lunar single-satellite Doppler positioning"
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument(
        '-v', '--verbose',
        action='store_true',
        help='Enable verbose logging'
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Scenario config file (JSON)')
    common.add_argument('--seed', type=int, help='Random seed')
    common.add_argument('--trials', type=int, help='Number of Monte Carlo trials')
    common.add_argument('--passes', type=int, help='Number of passes per solve')
    common.add_argument('--ephemeris', choices=['1', '2', 'perfect'], help='Broadcast ephemeris model')
    common.add_argument('--out', help='Output directory (default: out)')
    common.add_argument('--workers', type=int, default=1, help='Parallel worker processes')
    common.add_argument('--perf-stats', metavar='FILE', help='Write timing statistics to FILE')

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    simulate = subparsers.add_parser('simulate', parents=[common], help='Simulate observations and ephemeris')
    simulate.add_argument('--truth-csv', help='Imported truth trajectory (lunakit.truth/1 CSV)')
    simulate.add_argument('--export-truth', action='store_true', help='Also write the truth trajectory')

    solve = subparsers.add_parser('solve', parents=[common], help='Solve for the receiver position')
    solve.add_argument('--eph-file', help='Ephemeris JSON (default: <out>/ephemeris.json)')
    solve.add_argument('--obs-file', help='Observations CSV (default: <out>/observations.csv)')
    solve.add_argument('--manifest', help='Manifest with the true receiver, to report the error')

    montecarlo = subparsers.add_parser('montecarlo', parents=[common], help='Run Monte Carlo trials')
    mode = montecarlo.add_mutually_exclusive_group()
    mode.add_argument('--grid-only', action='store_true', help='Only compute the GDOP grid')
    mode.add_argument('--attribution', action='store_true', help='Per-source error attribution')
    mode.add_argument('--sweep', type=int, nargs='+', metavar='N', help='Sweep over pass counts')

    subparsers.add_parser('gdop', parents=[common], help='Compute the polar GDOP map')
    return parser


def main(argv: Optional[List[str]] = None):
    """Main CLI entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1

    setup_logging(args.verbose)

    # Route to appropriate command handler
    commands = {
        'simulate': cmd_simulate,
        'solve': cmd_solve,
        'montecarlo': cmd_montecarlo,
        'gdop': cmd_gdop,
    }

    try:
        if args.workers < 1:
            raise ValidationError("--workers must be at least 1")
        status = commands[args.command](args)
        if args.perf_stats:
            perf_monitor.export_stats(args.perf_stats)
    except ValidationError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except (LunaKitError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2

    return status


if __name__ == '__main__':
    sys.exit(main())
