import logging
from argparse import ArgumentParser
from dataclasses import replace
from pathlib import Path

import numpy as np

from .artifacts import write_csv, write_json
from .config import ExperimentConfig
from .equilibrium import (
    find_threshold,
    is_barrier_equilibrium,
    iterate_to_fixed_point,
    optimal_barrier_map,
    optimal_verdict,
    smooth_preconditions,
    theta,
)
from .errors import (
    ConfigError,
    ConventionError,
    DomainError,
    NumericError,
    PreconditionError,
    UnsupportedError,
)
from .mc_oracle import check_submartingale, estimate_J
from .reproduction import (
    EXAMPLES,
    FIGURES,
    MAP_COLUMNS,
    Z_LIMIT,
    emit_figure_data,
    map_rows,
    oracle_check,
    reproduce,
)
from .valuation import J, Policy

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

DRIFT_PATHS = 20_000
DRIFT_TIMES = (0.0, 0.05, 0.1)
MAP_STATES = 201


def _echo(config, payload):
    payload = dict(payload)
    payload['config'] = config.document
    return payload


def _conditions(config, ctx):
    checks = smooth_preconditions(ctx)
    report = checks['model']
    drift_cfg = replace(config.mc, n_paths=min(config.mc.n_paths, DRIFT_PATHS))
    drifts = {}
    for direction in ('sub', 'super'):
        passes, rows = check_submartingale(
            ctx.model, ctx.strike, drift_cfg, DRIFT_TIMES, direction=direction
        )
        drifts[direction] = {'passes': passes, 'drifts': rows}
    return {
        'ciii': checks['ciii'],
        'ciii_witnesses': checks['ciii_witnesses'],
        'cii_a_holds': report.cii_a_holds,
        'cii_b_holds': report.cii_b_holds,
        'violations': report.violations,
        'drift': drifts,
    }


def _iteration(config, ctx, a_star):
    grid = config.x_grid
    starts = {
        'empty': Policy.empty(),
        'half_threshold': Policy.barrier(a_star / 2),
        'strike': Policy.barrier(ctx.strike),
    }
    runs = {}
    for name, start in starts.items():
        trace = iterate_to_fixed_point(ctx, start, grid)
        limit = trace.limit
        fixed = np.array_equal(theta(ctx, limit, grid).mask(grid), limit.mask(grid))
        runs[name] = {
            'converged': trace.converged,
            'fixed': bool(fixed),
            'n_steps': trace.n_steps,
            'limit': [list(interval) for interval in limit.intervals],
        }
    passed = all(run['converged'] and run['fixed'] for run in runs.values())
    return passed, runs


def _mc(config, ctx, a_star):
    if ctx.law.f_space or ctx.law.has_zero_rate:
        logger.warning('Skipping the Monte Carlo check: the law needs positive rates')
        return True, {'skipped': True}
    policy = Policy.barrier(a_star)
    rows = []
    for x in ((a_star + ctx.strike) / 2, 1.5 * ctx.strike):
        x = min(x, ctx.model.state_cap)
        expected = float(J(ctx, x, policy))
        estimate = estimate_J(ctx, x, policy, config.mc)
        z = estimate.z_score(expected)
        rows.append(
            {
                'x': x,
                'expected': expected,
                'mean': estimate.mean,
                'std_error': estimate.std_error,
                'z_score': z,
                'passed': abs(z) <= Z_LIMIT,
            }
        )
    return all(row['passed'] for row in rows), {'skipped': False, 'lines': rows}


def run(config):
    """Execute the pipeline of an :class:`ExperimentConfig` and write the
    requested artifacts to its output directory:

    * ``conditions``: attitude, model and drift checks.
    * ``threshold``: the smallest equilibrium barrier, verified as an
      equilibrium.
    * ``verdict``: the optimal-equilibrium verdict.
    * ``barrier_map``: the maximizing barriers per state, as CSV.
    * ``iteration``: fixed-point iteration from three starting policies.
    * ``mc``: Monte Carlo estimates of ``J`` under the threshold policy.

    A configured ``problem.example`` is reproduced as well.

    Return value: ``True`` when every check passed.

    .. code-block:: python

        from aggregation_stopping.cli import run
        from aggregation_stopping.config import ExperimentConfig

        passed = run(ExperimentConfig.load('experiments/gbm.toml'))
    """
    ctx = config.context()
    out = config.output_directory
    wanted = set(config.artifacts)
    passed = True

    if 'conditions' in wanted:
        write_json(out / 'conditions.json', _echo(config, _conditions(config, ctx)))

    threshold = find_threshold(
        ctx, force=config.force, a_grid=config.a_grid, x_grid=config.x_grid
    )
    a_star = threshold.a_star
    holds, worst_x = is_barrier_equilibrium(ctx, a_star, config.x_grid)
    if not holds:
        logger.error('[0, %g] fails the equilibrium check at x=%g', a_star, worst_x)
        passed = False
    if 'threshold' in wanted:
        payload = dict(threshold._asdict(), is_equilibrium=holds, worst_x=worst_x)
        write_json(out / 'threshold.json', _echo(config, payload))

    if 'verdict' in wanted:
        report = optimal_verdict(ctx, a_grid=config.a_grid, force=config.force)
        write_json(out / 'verdict.json', _echo(config, report.to_dict()))

    if 'barrier_map' in wanted:
        xs = np.linspace(0.0, 2 * ctx.strike, MAP_STATES)
        rows = optimal_barrier_map(ctx, xs, config.a_grid, a_star=a_star)
        path = out / 'barrier_map.csv'
        write_csv(path, list(MAP_COLUMNS), map_rows(rows), MAP_COLUMNS)

    if 'iteration' in wanted:
        converged, runs = _iteration(config, ctx, a_star)
        passed = passed and converged
        write_json(out / 'iteration.json', _echo(config, runs))

    if 'mc' in wanted:
        agreed, payload = _mc(config, ctx, a_star)
        passed = passed and agreed
        write_json(out / 'mc.json', _echo(config, payload))

    if config.example:
        record = reproduce(config.example)
        passed = passed and record.passed
        write_json(out / f'{config.example}.json', record.to_dict())

    logger.info('Run %s', 'passed' if passed else 'failed')
    return passed


def _run(args):
    config = ExperimentConfig.load(
        args.config, seed=args.seed, grid_n=args.grid_n, force=args.force or None
    )
    return EXIT_OK if run(config) else EXIT_FAILED


def _check_example(example_id):
    if example_id not in EXAMPLES:
        valid = ', '.join(sorted(EXAMPLES))
        raise ConfigError(f'Unknown example {example_id!r}; valid ids: {valid}')


def _reproduce(args):
    example_ids = args.example_ids or sorted(EXAMPLES)
    for example_id in example_ids:
        _check_example(example_id)
    passed = True
    for example_id in example_ids:
        record = reproduce(example_id)
        if args.out:
            write_json(Path(args.out) / f'{example_id}.json', record.to_dict())
        for line in record.lines:
            status = 'ok' if line.passed else 'FAILED'
            print(f'{example_id}\t{line.label}\t{line.computed}\t{status}')
        passed = passed and record.passed
    return EXIT_OK if passed else EXIT_FAILED


def _emit_figure(args):
    _check_example(args.example_id)
    emit_figure_data(args.example_id, args.out_path, figure=args.figure)
    return EXIT_OK


def _oracle_check(args):
    record = oracle_check(n_paths=args.n_paths, seed=args.seed or 0)
    if args.out:
        write_json(args.out, record.to_dict())
    for line in record.lines:
        status = 'ok' if line.passed else 'miss'
        print(f'{line.label}\t{line.expected}\t{line.computed}\t{status}')
    return EXIT_OK if record.passed else EXIT_FAILED


def _list_examples(args):
    for example_id in sorted(EXAMPLES):
        print(f'{example_id}\t{EXAMPLES[example_id].description}')
    return EXIT_OK


def get_parser():
    parser = ArgumentParser(
        prog='aggregation-stopping',
        description='Equilibrium stopping under aggregated discount rates',
    )
    parser.add_argument(
        '-v', '--verbose', action='count', default=0, help='-v for INFO, -vv for DEBUG'
    )
    subparsers = parser.add_subparsers(dest='command', required=True)

    run_parser = subparsers.add_parser('run', help='Run a configured experiment')
    run_parser.add_argument('config', type=Path)
    run_parser.add_argument('--seed', type=int)
    run_parser.add_argument('--grid-n', type=int)
    run_parser.add_argument('--force', action='store_true')
    run_parser.set_defaults(handler=_run)

    reproduce_parser = subparsers.add_parser(
        'reproduce', help='Recompute catalogued examples'
    )
    reproduce_parser.add_argument('example_ids', nargs='*')
    reproduce_parser.add_argument('--out', type=Path)
    reproduce_parser.set_defaults(handler=_reproduce)

    figure_parser = subparsers.add_parser('emit-figure', help='Write plot data as CSV')
    figure_parser.add_argument('example_id')
    figure_parser.add_argument('out_path', type=Path)
    figure_parser.add_argument('--figure', choices=FIGURES)
    figure_parser.set_defaults(handler=_emit_figure)

    oracle_parser = subparsers.add_parser(
        'oracle-check', help='Compare closed forms with Monte Carlo'
    )
    oracle_parser.add_argument('--n-paths', type=int, default=100_000)
    oracle_parser.add_argument('--seed', type=int)
    oracle_parser.add_argument('--out', type=Path)
    oracle_parser.set_defaults(handler=_oracle_check)

    list_parser = subparsers.add_parser('list-examples', help='List example ids')
    list_parser.set_defaults(handler=_list_examples)
    return parser


def main(argv=None):
    """Command line entry point. Return value: the exit status, 0 when every
    check passed, 1 for failed checks or conditions, 2 for configuration
    errors and 3 for numerical or domain errors.
    """
    args = get_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')

    try:
        return args.handler(args)
    except ConfigError as error:
        logger.error('Configuration error: %s', error)
        return EXIT_CONFIG
    except PreconditionError as error:
        logger.error('%s: %s', error, error.report)
        return EXIT_FAILED
    except (NumericError, DomainError, UnsupportedError, ConventionError) as error:
        logger.error('%s: %s', type(error).__name__, error)
        return EXIT_NUMERIC
