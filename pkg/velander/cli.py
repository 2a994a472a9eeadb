"""Command line interface: ``velander ingest|fit|cv|lrt|synth|curves``.

Settings are resolved as command-line flags over a JSON ``--config``
file over the defaults of :class:`RunConfig`. Results are written to
``--out``; logs and errors go to stderr as JSON lines.
"""
import argparse
import dataclasses
import json
import logging
import pathlib
import sys
import typing

import numpy as np
import pandas as pd

from velander import api, experiments, inference, mle, mqr, opt, profiles
from velander.evd import GAMMA_TH, Formulation
from velander.version import __version__

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class CommandError(RuntimeError):
    """Raised when a command cannot run with the given settings"""

    def __init__(self, code: str, message: str, exit_code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code
        self.message = message
        self.exit_code = exit_code


def _accepts(hint, value) -> bool:
    """True if a JSON value fits a RunConfig field annotation"""
    origin = getattr(hint, '__origin__', None)
    if origin is typing.Union:
        return any(_accepts(arg, value) for arg in hint.__args__)
    if origin is tuple:
        return isinstance(value, list) and all(
            isinstance(item, str) for item in value)
    if hint is type(None):
        return value is None
    if isinstance(value, bool):
        return hint is bool
    if hint is float:
        return isinstance(value, (int, float))
    return isinstance(value, hint)


@dataclasses.dataclass
class RunConfig:
    """Every setting of every command"""

    input: typing.Optional[str] = None
    kind: str = 'records'
    formulations: typing.Tuple[str, ...] = tuple(f.value for f in Formulation)
    method: str = 'both'
    grid: str = mqr.DEFAULT_GRID
    k: int = 5
    seed: int = 0
    gamma_th: float = GAMMA_TH
    eps_th: float = mle.EPS_TH
    out: str = '.'
    jobs: int = 1
    n_starts: int = 8
    max_evals: int = 50000
    db: typing.Optional[str] = None
    dataset: typing.Optional[int] = None
    segment: typing.Optional[str] = None
    year: typing.Optional[int] = None
    expected_t: typing.Optional[int] = None
    leading_window: int = profiles.LEADING_WINDOW
    base: str = 'exponential'
    K: int = 50
    theta0: float = 0.05
    theta1: float = 1.0
    n: int = 2000
    energy_min: float = 1e2
    energy_max: float = 1e6
    mode: str = 'records'
    T: typing.Optional[int] = None
    taus: str = '0.1,0.5,0.9'
    energies: str = '1e2:1e6:41'

    @classmethod
    def resolve(cls, flags: dict, path: str = None) -> 'RunConfig':
        """Defaults, overridden by the config file, overridden by flags

        :raises CommandError: unreadable config, unknown keys or values
            of the wrong type
        """
        settings = {}
        if path is not None:
            try:
                settings = json.loads(pathlib.Path(path).read_text('utf-8'))
            except (OSError, ValueError) as error:
                raise CommandError(
                    'CONFIG', 'cannot read config {}: {}'.format(path, error))
            if not isinstance(settings, dict):
                raise CommandError(
                    'CONFIG', 'config {} must hold a JSON object'.format(path))
            hints = {f.name: f.type for f in dataclasses.fields(cls)}
            unknown = sorted(set(settings) - set(hints))
            if unknown:
                raise CommandError(
                    'CONFIG', 'unknown config keys: {}'.format(
                        ', '.join(unknown)))
            for name, value in sorted(settings.items()):
                if not _accepts(hints[name], value):
                    raise CommandError(
                        'CONFIG', 'config key {} has the wrong type: '
                        '{!r}'.format(name, value))
        settings.update(flags)
        if 'formulations' in settings:
            settings['formulations'] = tuple(settings['formulations'])
        return cls(**settings)

    def formulation_list(self) -> typing.List[Formulation]:
        try:
            return [Formulation.parse(f) for f in self.formulations]
        except ValueError as error:
            raise CommandError('FORMULATION', str(error))

    def method_list(self) -> typing.List[str]:
        try:
            return experiments.parse_method(self.method)
        except ValueError as error:
            raise CommandError('METHOD', str(error))

    def quantile_grid(self) -> mqr.QuantileGrid:
        try:
            return mqr.QuantileGrid.parse(self.grid)
        except ValueError as error:
            raise CommandError('GRID', str(error))

    def optim_config(self) -> opt.OptimConfig:
        return opt.OptimConfig(
            max_evals=self.max_evals, n_starts=self.n_starts)

    def out_dir(self) -> pathlib.Path:
        path = pathlib.Path(self.out)
        path.mkdir(parents=True, exist_ok=True)
        return path


class JsonFormatter(logging.Formatter):
    """One JSON object per log record"""

    def format(self, record):
        payload = {
            'event': 'log',
            'level': record.levelname,
            'logger': record.name,
            'message': record.getMessage(),
        }
        if record.exc_info:
            payload['exc_info'] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=False)


def _configure_logging(level: str):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())
    root = logging.getLogger('velander')
    root.handlers[:] = [handler]
    root.setLevel(level.upper())
    root.propagate = False


def _emit(event: str, **payload):
    record = {'event': event}
    record.update(payload)
    return json.dumps(record, ensure_ascii=False, sort_keys=True,
                      default=_jsonable)


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError('{!r} is not JSON serialisable'.format(value))


def _write_json(path: pathlib.Path, data):
    path.write_text(
        json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False,
                   default=_jsonable) + '\n',
        encoding='utf-8')
    return str(path)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(
        add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument('--config', help='JSON file of settings')
    common.add_argument('--log-level', help='default WARNING')
    common.add_argument('--out', help='output directory')
    common.add_argument('--seed', type=int, help='master seed')
    common.add_argument('--jobs', type=int, help='worker threads')
    return common


def _input_arguments(parser):
    parser.add_argument('--input', help='profiles or records CSV')
    parser.add_argument(
        '--kind', choices=['profiles', 'records'], help='input schema')
    parser.add_argument('--db', help='store URL')
    parser.add_argument('--dataset', type=int, help='stored dataset id')
    parser.add_argument('--expected-t', type=int, dest='expected_t',
                        help='required profile length')
    parser.add_argument('--leading-window', type=int, dest='leading_window',
                        help='leading all-zero window, default 672')


def _fit_arguments(parser):
    parser.add_argument(
        '--formulation', action='append', dest='formulations',
        help='C4, Gumbel, f-Gumbel, Frechet or r-Weibull (repeatable)')
    parser.add_argument('--method', help='mqr, mle or both')
    parser.add_argument('--grid', help='quantile grid lo:step:hi')
    parser.add_argument('--gamma-th', type=float, dest='gamma_th')
    parser.add_argument('--eps-th', type=float, dest='eps_th')
    parser.add_argument('--n-starts', type=int, dest='n_starts')
    parser.add_argument('--max-evals', type=int, dest='max_evals')


def build_parser() -> argparse.ArgumentParser:
    """Construct the argument parser for the CLI."""

    parser = argparse.ArgumentParser(
        prog='velander',
        description='Extreme value models of customer peak load')
    parser.add_argument(
        '--version', action='version', version='%(prog)s ' + __version__)
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    common = _common_parser()

    _register_ingest(subparsers, common)
    _register_fit(subparsers, common)
    _register_cv(subparsers, common)
    _register_lrt(subparsers, common)
    _register_synth(subparsers, common)
    _register_curves(subparsers, common)
    return parser


def _add(subparsers, name, common, help_text):
    return subparsers.add_parser(
        name, parents=[common], help=help_text,
        argument_default=argparse.SUPPRESS)


def _register_ingest(subparsers, common):
    parser = _add(subparsers, 'ingest', common,
                  'filter load profiles and reduce them to records')
    _input_arguments(parser)
    parser.add_argument('--segment', help='segment of the stored dataset')
    parser.add_argument('--year', type=int, help='year of the stored dataset')
    parser.set_defaults(handler=_handle_ingest)


def _register_fit(subparsers, common):
    parser = _add(subparsers, 'fit', common, 'fit formulations')
    _input_arguments(parser)
    _fit_arguments(parser)
    parser.set_defaults(handler=_handle_fit)


def _register_cv(subparsers, common):
    parser = _add(subparsers, 'cv', common, 'k-fold cross-validation')
    _input_arguments(parser)
    _fit_arguments(parser)
    parser.add_argument('--k', type=int, help='number of folds')
    parser.set_defaults(handler=_handle_cv)


def _register_lrt(subparsers, common):
    parser = _add(subparsers, 'lrt', common,
                  'likelihood ratio test Gumbel vs Frechet and Std(gamma)')
    _input_arguments(parser)
    _fit_arguments(parser)
    parser.set_defaults(handler=_handle_lrt)


def _register_synth(subparsers, common):
    parser = _add(subparsers, 'synth', common, 'synthetic customers')
    parser.add_argument('--base', help='gumbel, exponential, pareto(shape) '
                        'or uniform')
    parser.add_argument('--K', type=int, dest='K', help='peak slots')
    parser.add_argument('--theta0', type=float)
    parser.add_argument('--theta1', type=float)
    parser.add_argument('--n', type=int, help='number of customers')
    parser.add_argument('--energy-min', type=float, dest='energy_min')
    parser.add_argument('--energy-max', type=float, dest='energy_max')
    parser.add_argument('--mode', choices=list(experiments.MODES))
    parser.add_argument('--T', type=int, dest='T', help='profile length')
    parser.set_defaults(handler=_handle_synth)


def _register_curves(subparsers, common):
    parser = _add(subparsers, 'curves', common,
                  'quantile and beta curves of fitted formulations')
    _input_arguments(parser)
    _fit_arguments(parser)
    parser.add_argument('--taus', help='comma separated quantile levels')
    parser.add_argument('--energies',
                        help='lo:hi:count (log-spaced) or a comma list')
    parser.set_defaults(handler=_handle_curves)


def _profiles_to_records(config, source):
    found = profiles.ingest_csv(source)
    if not found:
        return found, profiles.FilterReport()
    expected_t = config.expected_t or max(len(p) for p in found)
    if not 0 < config.leading_window <= expected_t:
        raise CommandError(
            'USAGE', '--leading-window {} must lie in [1, {}]'.format(
                config.leading_window, expected_t))
    return profiles.filter_profiles(found, expected_t, config.leading_window)


def _load_records(config: RunConfig) -> profiles.Records:
    if config.db is not None:
        if config.dataset is None:
            raise CommandError('USAGE', '--db needs --dataset')
        with api.Connection(config.db) as conn:
            return api.DatasetHandle.read(conn, config.dataset).records()
    if config.input is None:
        raise CommandError('USAGE', '--input or --db with --dataset is '
                           'required')
    if config.kind == 'profiles':
        kept, _ = _profiles_to_records(config, config.input)
        return profiles.reduce_profiles(kept)
    return profiles.read_records_csv(config.input)


def _handle_ingest(config: RunConfig) -> dict:
    if config.input is None:
        raise CommandError('USAGE', '--input is required')
    out = config.out_dir()
    kept, report = _profiles_to_records(config, config.input)
    records = profiles.reduce_profiles(kept)
    outputs = [str(out / 'records.csv')]
    profiles.write_records_csv(records, outputs[0])
    outputs.append(_write_json(out / 'filter_report.json', report.to_dict()))
    result = {'outputs': outputs, 'kept': report.kept}
    if config.db is not None:
        with api.Connection(config.db) as conn:
            handle = api.DatasetHandle.create(
                conn, config.segment, config.year)
            handle.add_records(records)
            result['dataset'] = handle.dataset_id
    return result


def _fits(config, records):
    return experiments.fit_full(
        records, config.formulation_list(), config.method_list(),
        config.seed, config.quantile_grid(), config.optim_config(),
        config.gamma_th, config.eps_th, config.jobs)


def _handle_fit(config: RunConfig) -> dict:
    config.formulation_list()
    config.quantile_grid()
    records = _load_records(config)
    fits = _fits(config, records)
    out = config.out_dir()
    path = _write_json(out / 'fits.json', [fit.to_dict() for fit in fits])
    result = {'outputs': [path], 'fits': len(fits)}
    if config.db is not None:
        with api.Connection(config.db) as conn:
            handle = api.DatasetHandle.read(conn, config.dataset)
            result['fit_ids'] = [handle.add_fit(fit) for fit in fits]
    return result


def _handle_cv(config: RunConfig) -> dict:
    formulations = config.formulation_list()
    grid = config.quantile_grid()
    records = _load_records(config)
    report = experiments.run_cv(
        records, formulations, config.method_list(), config.k, config.seed,
        grid, config.optim_config(), config.gamma_th, config.eps_th,
        config.jobs)
    out = config.out_dir()
    outputs = [_write_json(out / 'cv_report.json', report.to_dict())]
    table = out / 'cv_table.txt'
    table.write_text(report.to_table(), encoding='utf-8')
    outputs.append(str(table))
    return {'outputs': outputs}


def _handle_lrt(config: RunConfig) -> dict:
    records = _load_records(config)
    result, gumbel, frechet = inference.likelihood_ratio_test(
        records, config.seed, config.optim_config(), config.gamma_th,
        config.eps_th, config.jobs)
    payload = {
        'lrt': result.to_dict(),
        'gumbel': gumbel.to_dict(),
        'frechet': frechet.to_dict(),
        'gamma': frechet.gamma,
        'fisher': None,
        'diagnostics': [],
    }
    try:
        payload['fisher'] = inference.fisher_std_gamma(
            records, frechet).to_dict()
    except inference.FisherInformationError as error:
        payload['diagnostics'].append(str(error))
        log.warning('Std(gamma) unavailable: %s', error)
    path = _write_json(config.out_dir() / 'lrt.json', payload)
    return {'outputs': [path], 'p_value': result.p_value}


def _handle_synth(config: RunConfig) -> dict:
    try:
        synth = experiments.SynthConfig(
            theta0=config.theta0, theta1=config.theta1, K=config.K,
            base=config.base, n=config.n, energy_min=config.energy_min,
            energy_max=config.energy_max, seed=config.seed,
            mode=config.mode, T=config.T)
    except ValueError as error:
        raise CommandError('SYNTH', str(error))
    out = config.out_dir()
    if synth.mode == 'profiles':
        path = out / 'profiles.csv'
        profiles.write_profiles_csv(experiments.synth_profiles(synth), path)
    else:
        path = out / 'records.csv'
        profiles.write_records_csv(experiments.synth_records(synth), path)
    return {'outputs': [str(path)],
            'limit_params': synth.limit_params().to_dict()}


def _parse_floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in str(text).split(',') if v.strip()])
    except ValueError:
        raise CommandError('USAGE', 'cannot parse {!r}'.format(text))


def _parse_energies(text: str) -> np.ndarray:
    if ':' not in str(text):
        return _parse_floats(text)
    try:
        lo, hi, count = str(text).split(':')
        return np.logspace(np.log10(float(lo)), np.log10(float(hi)),
                           int(count))
    except ValueError:
        raise CommandError(
            'USAGE', 'energies must be lo:hi:count, got {!r}'.format(text))


def _handle_curves(config: RunConfig) -> dict:
    taus = _parse_floats(config.taus)
    energies = _parse_energies(config.energies)
    grid = config.quantile_grid()
    if Formulation.C4 in config.formulation_list() and \
            not all(grid.contains(t) for t in taus):
        raise CommandError(
            'OFF_GRID', 'C4 quantiles exist on the grid {} only'.format(
                config.grid))
    records = _load_records(config)
    fits = _fits(config, records)
    frames = []
    for fit in fits:
        frame = experiments.quantile_curves(fit, energies, taus)
        frame.insert(0, 'source', experiments.source_label(fit))
        frames.append(frame)
    out = config.out_dir()
    quantiles = out / 'quantile_curves.csv'
    pd.concat(frames, ignore_index=True).to_csv(
        quantiles, index=False, float_format='%.10g')
    betas = out / 'beta_curves.csv'
    experiments.export_beta_curves(fits, None, betas)
    return {'outputs': [str(quantiles), str(betas)]}


def _fail(command, code, message, exit_code):
    print(_emit('error', command=command, code=code, message=message),
          file=sys.stderr)
    return exit_code


def main(argv: typing.Sequence[str] = None) -> int:
    """CLI entry point."""

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if getattr(args, 'handler', None) is None:
        parser.print_help()
        return EXIT_OK

    flags = vars(args).copy()
    command = flags.pop('command')
    handler = flags.pop('handler')
    config_path = flags.pop('config', None)
    _configure_logging(flags.pop('log_level', 'WARNING'))

    try:
        config = RunConfig.resolve(flags, config_path)
        result = handler(config)
    except CommandError as exc:
        return _fail(command, exc.code, exc.message, exc.exit_code)
    except profiles.ProfileSchemaError as exc:
        return _fail(command, 'SCHEMA', str(exc), EXIT_USAGE)
    except Exception as exc:
        log.debug('%s failed', command, exc_info=True)
        return _fail(command, type(exc).__name__, str(exc), EXIT_FAILURE)
    print(_emit('complete', command=command, **result))
    return EXIT_OK
