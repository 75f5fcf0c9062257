import argparse
import logging
import sys

from config import Config, Tolerances
from handlers.check_handler import CheckHandler
from handlers.example_handler import ExampleHandler
from handlers.suite_handler import SuiteHandler
from services.errors import ConfigError, GibbsSpectraError, PreconditionError, SubsetError, TargetError
from utils.helpers import parse_tolerance_overrides
from utils.pdf_export_helper import write_pdf_report
from utils.report_writer import table_paths, write_csv, write_json
from utils.run_config import DEFAULT_FIXTURES, RunConfig, TargetLoader

EXIT_PASS, EXIT_FAILURE, EXIT_INPUT = 0, 1, 2
INPUT_ERRORS = (TargetError, SubsetError, PreconditionError, ConfigError)
EXAMPLE_ACTIONS = {'run': 'example', 'verify-drift': 'verify-drift', 'verify-minorization': 'verify-minorization'}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=Config.DEFAULT_SEED)
    common.add_argument('--format', dest='out_format', choices=['json', 'csv'], default='json')
    common.add_argument('--report', help='JSON report path (stdout when omitted in json format)')
    common.add_argument('--table', help='CSV path for the command\'s table(s)')
    common.add_argument('--pdf', help='PDF run summary path')
    common.add_argument('--tol', action='append', default=[], metavar='NAME=VALUE',
                        help='tolerance override, e.g. spectral=1e-9')
    common.add_argument('--fixtures', default=DEFAULT_FIXTURES)
    common.add_argument('--log-level', default=Config.LOG_LEVEL)

    parser = argparse.ArgumentParser(prog='gibbs-spectra',
                                     description='Spectral checks for blocked and collapsed Gibbs samplers')
    commands = parser.add_subparsers(dest='command', required=True)

    spectra = commands.add_parser('spectra', parents=[common], help='spectral report for one operator')
    spectra.add_argument('target')
    spectra.add_argument('--family', help='subsets such as "1;2;3" or "1,2;2,3"')
    spectra.add_argument('--mode', choices=['cycle', 'mixture'], default='cycle')
    spectra.add_argument('--order', help='cycle ordering, e.g. 213')
    spectra.add_argument('--weights', help='mixture weights, e.g. 0.25,0.75')
    spectra.add_argument('--export-matrix', help='CSV path for the operator matrix')

    solidarity = commands.add_parser('solidarity', parents=[common], help='gap agreement across scans')
    solidarity.add_argument('target')
    solidarity.add_argument('--family')
    solidarity.add_argument('--weight-samples', type=int, default=Config.DEFAULT_WEIGHT_SAMPLES)

    collapse = commands.add_parser('collapse-check', parents=[common], help='collapsed vs joint samplers')
    collapse.add_argument('target')
    collapse.add_argument('--subset', help='retained coordinates I, e.g. 1,2')
    collapse.add_argument('--family', help='collapsed steps over I, e.g. "1;2"')
    collapse.add_argument('--partition', help='U|V|W for the blocked vs collapsed comparison')
    collapse.add_argument('--inheritance', action='store_true', help='also check collapsed gap inheritance')

    two = commands.add_parser('two-component', parents=[common], help='two-block spectral equalities')
    two.add_argument('target')
    two.add_argument('--split', help='coordinates of the Y block, e.g. 1')

    def hierarchical_flags(sub):
        sub.add_argument('--y', type=float, default=Config.DEFAULT_Y)
        sub.add_argument('--d', type=float, help='small-set radius (default 1.05 x threshold)')
        sub.add_argument('--grid-points', type=int, default=1000)

    example = commands.add_parser('example', parents=[common], help='hierarchical model samplers')
    example.add_argument('action', nargs='?', choices=sorted(EXAMPLE_ACTIONS), default='run')
    hierarchical_flags(example)
    example.add_argument('--sampler', choices=['blockA', 'blockB', 'full', 'both'], default='both')
    example.add_argument('--steps', type=int, default=10_000)
    example.add_argument('--out', help='CSV trace path (step,u,v,w)')
    example.add_argument('--contrast', action='store_true', help='run the ergodicity contrast as well')
    example.add_argument('--contrast-steps', type=int, default=Config.CONTRAST_STEPS)

    for name in ('verify-drift', 'verify-minorization'):
        hierarchical_flags(commands.add_parser(name, parents=[common], help=f'{name} for the hierarchical model'))

    suite = commands.add_parser('all-checks', parents=[common], help='acceptance suite on the regression targets')
    suite.add_argument('--y', type=float, default=Config.DEFAULT_Y)
    suite.add_argument('--with-simulation', action='store_true')
    return parser


def to_run_config(args):
    command = EXAMPLE_ACTIONS[args.action] if args.command == 'example' else args.command
    reserved = {'command', 'action', 'target', 'seed', 'out_format', 'report', 'table', 'pdf', 'tol',
                'fixtures', 'log_level'}
    options = {k: v for k, v in vars(args).items() if k not in reserved}
    try:
        tolerances = Tolerances.from_overrides(parse_tolerance_overrides(args.tol))
    except KeyError as e:
        raise ConfigError(e.args[0])
    return RunConfig(
        command=command,
        target_path=getattr(args, 'target', None),
        seed=args.seed,
        out_format=args.out_format,
        tolerances=tolerances,
        report_path=args.report,
        table_path=args.table or getattr(args, 'out', None),
        pdf_path=args.pdf,
        options=options,
    )


def dispatch(run_config, services):
    handlers = {
        'spectra': CheckHandler(services).handle_spectra,
        'solidarity': CheckHandler(services).handle_solidarity,
        'collapse-check': CheckHandler(services).handle_collapse_check,
        'two-component': CheckHandler(services).handle_two_component,
        'example': ExampleHandler(services).handle_example,
        'verify-drift': ExampleHandler(services).handle_verify_drift,
        'verify-minorization': ExampleHandler(services).handle_verify_minorization,
        'all-checks': SuiteHandler(services).handle_all_checks,
    }
    return handlers[run_config.command](run_config)


def emit(run_config, result):
    report = result.to_report(run_config)
    if run_config.out_format == 'json' or run_config.report_path or not result.tables:
        write_json(report, run_config.report_path)
    if result.tables:
        names = sorted(result.tables)
        if run_config.table_path:
            for name, path in table_paths(run_config.table_path, names).items():
                write_csv(result.tables[name], path)
        elif run_config.out_format == 'csv':
            for name in names:
                write_csv(result.tables[name])
    if run_config.pdf_path:
        write_pdf_report({**report, 'schema': Config.SCHEMA_VERSION}, run_config.pdf_path,
                         title=f"gibbs-spectra {run_config.command}")


def run(argv=None):
    """Parse, dispatch and emit; returns the process exit code"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        run_config = to_run_config(args)
        services = {'targets': TargetLoader(args.fixtures)}
        result = dispatch(run_config, services)
    except INPUT_ERRORS as e:
        logging.error(f"Input error: {str(e)}")
        print(f"error: {str(e)}", file=sys.stderr)
        return EXIT_INPUT
    except GibbsSpectraError as e:
        logging.error(f"Check aborted: {str(e)}")
        print(f"failure: {str(e)}", file=sys.stderr)
        return EXIT_FAILURE
    emit(run_config, result)
    if not result.passed:
        logging.error(f"{len(result.failures)} checks failed")
        return EXIT_FAILURE
    return EXIT_PASS


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
