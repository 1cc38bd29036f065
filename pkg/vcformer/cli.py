"""Command-line application for vcformer."""

import argparse
import sys
from typing import Dict, List, Optional

from sqlalchemy.exc import SQLAlchemyError
from threadpoolctl import threadpool_limits

from .config import RunConfig, config, field_names
from .database import RunRepository
from .errors import ConfigurationError, VCformerError
from .handlers import DataHandler, DiagnosticsHandler, TrainHandler
from .handlers.diagnostics_handler import DEFAULT_BENCH_SIZES, tiny_config
from .services.analytics_service import AnalyticsService
from .services.export_service import ExportService
from .utils.logger import setup_logger

logger = setup_logger('cli', config.LOG_FILE, config.LOG_LEVEL, config.LOG_MAX_BYTES, config.LOG_BACKUP_COUNT)

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    """Raised by the parser instead of exiting, so main() owns the exit code."""


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class VCformerApp:
    """Services and handlers shared by every command."""

    def __init__(self, use_registry: bool = True, out=None):
        self.out = out or sys.stdout
        self.export_service = ExportService()
        self.analytics = AnalyticsService()
        self._use_registry = use_registry and bool(config.RUNS_DATABASE_URL)
        self._repository: Optional[RunRepository] = None

        self.train_handler = TrainHandler(self)
        self.diagnostics_handler = DiagnosticsHandler(self)
        self.data_handler = DataHandler(self)

    @property
    def repository(self) -> Optional[RunRepository]:
        """Run registry, opened on first use; None when disabled or unreachable."""
        if self._use_registry and self._repository is None:
            try:
                self._repository = RunRepository(config.RUNS_DATABASE_URL)
            except SQLAlchemyError as e:
                logger.warning(f"run registry unavailable: {e}")
                self._use_registry = False
        return self._repository

    def emit(self, text: str, end: str = '\n') -> None:
        self.out.write(text + end)
        self.out.flush()


def _add_overrides(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('config')
    group.add_argument('--config', dest='config_file', help='JSON run config')
    group.add_argument('--set', dest='set_values', action='append', default=[], metavar='KEY=VALUE',
                       help='dotted override, e.g. model.d=64 (repeatable)')
    for key in field_names():
        group.add_argument(f'--{key}', dest=f'override:{key}', default=argparse.SUPPRESS, metavar='VALUE')


def _add_threads(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--threads', type=int, default=None,
                        help='BLAS/OpenMP threads; 1 is the deterministic mode')
    parser.add_argument('--deterministic', action='store_true',
                        help='single thread, no prefetch thread, fixed reduction order')


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog='vcformer', description='Variable correlation transformer forecasting toolkit')
    sub = parser.add_subparsers(dest='command', parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser('train', help='train a model and write checkpoint + report')
    p.add_argument('--csv', help='input CSV (overrides data.csv_path)')
    p.add_argument('--checkpoint', default='vcformer.ckpt')
    p.add_argument('--report', default='train_report.json')
    p.add_argument('--no-registry', action='store_true', help='do not record the run')
    _add_overrides(p)
    _add_threads(p)

    p = sub.add_parser('eval', help='test (or val) MSE/MAE of a checkpoint')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--csv')
    p.add_argument('--split', choices=('train', 'val', 'test'), default='test')
    _add_threads(p)

    p = sub.add_parser('forecast', help='forecast the H rows after the end of a CSV')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--csv', required=True)
    p.add_argument('--denormalize', action='store_true', help='map back to the raw scale')
    p.add_argument('--out')
    _add_threads(p)

    p = sub.add_parser('bench', help='naive vs spectral lag-correlation timings')
    p.add_argument('--sizes', default=DEFAULT_BENCH_SIZES, help='comma list of NxL')
    p.add_argument('--repeats', type=int, default=3)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--out')
    _add_threads(p)

    p = sub.add_parser('gradcheck', help='finite-difference check of the full model')
    p.add_argument('--tiny-config', action='store_true',
                   help='T=8 N=3 D=8 S=4 M=6 H=4 L=1 (also the default without --config)')
    p.add_argument('--h', type=float, default=1e-6)
    p.add_argument('--tol', type=float, default=1e-4)
    p.add_argument('--workers', type=int, default=1)
    p.add_argument('--out')
    _add_overrides(p)
    _add_threads(p)

    p = sub.add_parser('corrmap', help='layer score map and Pearson maps for one window')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--csv')
    p.add_argument('--layer', type=int, default=0)
    p.add_argument('--window', type=int, default=0)
    p.add_argument('--split', choices=('train', 'val', 'test'), default='test')
    p.add_argument('--out-prefix', default='corrmap')
    _add_threads(p)

    p = sub.add_parser('synth', help='write a lag-coupled synthetic dataset')
    p.add_argument('--n', type=int, default=4)
    p.add_argument('--len', dest='length', type=int, default=4000)
    p.add_argument('--lag', type=int, default=7)
    p.add_argument('--coupling', type=float, default=0.9)
    p.add_argument('--noise', type=float, default=0.05)
    p.add_argument('--independent', type=float, default=0.3)
    p.add_argument('--seed', type=int, default=17)
    p.add_argument('--out', required=True)

    p = sub.add_parser('config', help='print the default or effective run config')
    p.add_argument('--print-defaults', action='store_true')
    _add_overrides(p)

    p = sub.add_parser('runs', help='list recorded runs')
    p.add_argument('--config-hash')
    p.add_argument('--summary', action='store_true', help='mean/std per config')
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, str]:
    overrides = {}
    for item in getattr(args, 'set_values', []):
        key, sep, value = item.partition('=')
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    for name, value in vars(args).items():
        if name.startswith('override:'):
            overrides[name[len('override:'):]] = value
    return overrides


def resolve_config(args: argparse.Namespace, base: Optional[RunConfig] = None) -> RunConfig:
    """Config file (or ``base``) with --set and --section.key overrides applied."""
    if getattr(args, 'config_file', None):
        with open(args.config_file, encoding='utf-8') as f:
            cfg = RunConfig.from_json(f.read())
    else:
        cfg = base or RunConfig()
    overrides = collect_overrides(args)
    if getattr(args, 'deterministic', False):
        overrides.update({'train.threads': '1', 'train.prefetch': 'false'})
    elif getattr(args, 'threads', None) is not None:
        overrides['train.threads'] = str(args.threads)
    return cfg.with_overrides(overrides) if overrides else cfg


def dispatch(app: VCformerApp, args: argparse.Namespace) -> int:
    cmd = args.command
    if cmd == 'train':
        cfg = resolve_config(args)
        return app.train_handler.train(cfg, args.checkpoint, args.report, args.csv)
    if cmd == 'eval':
        return app.train_handler.evaluate(args.checkpoint, args.csv, args.split)
    if cmd == 'forecast':
        return app.train_handler.forecast(args.checkpoint, args.csv, args.denormalize, args.out)
    if cmd == 'bench':
        return app.diagnostics_handler.bench(args.sizes, args.repeats, args.seed, args.out)
    if cmd == 'gradcheck':
        if args.tiny_config or not args.config_file:
            args.config_file = None
            cfg = resolve_config(args, RunConfig(model=tiny_config()))
        else:
            cfg = resolve_config(args)
        return app.diagnostics_handler.gradcheck(cfg, args.h, args.tol, args.workers, args.out)
    if cmd == 'corrmap':
        return app.diagnostics_handler.corrmap(args.checkpoint, args.csv, args.layer, args.window,
                                               args.split, args.out_prefix)
    if cmd == 'synth':
        return app.data_handler.synth(args.n, args.length, args.lag, args.coupling, args.noise,
                                      args.seed, args.out, args.independent)
    if cmd == 'config':
        return app.data_handler.config(resolve_config(args), args.print_defaults)
    if cmd == 'runs':
        return app.data_handler.runs(args.config_hash, args.summary)
    raise UsageError(f"unknown command {cmd!r}")


def main(argv: Optional[List[str]] = None, out=None) -> int:
    """
    Run one command.

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])
        out: Stream for results (defaults to stdout); logs go to stderr

    Returns:
        Exit code: 0 success, 1 usage/config error, 2 runtime or numeric error,
        3 failed gradient check
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"{e}\n")
        return EXIT_USAGE

    threads = getattr(args, 'threads', None) or config.DEFAULT_THREADS
    if getattr(args, 'deterministic', False):
        threads = 1
    try:
        with threadpool_limits(limits=threads):
            app = VCformerApp(use_registry=not getattr(args, 'no_registry', False), out=out)
            return dispatch(app, args)
    except (UsageError, ConfigurationError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except VCformerError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_RUNTIME
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        return EXIT_RUNTIME


def main_entry() -> None:
    sys.exit(main())
