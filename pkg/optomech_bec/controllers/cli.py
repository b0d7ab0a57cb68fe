import argparse
import csv
import json
import logging
import math
import sys
import time

from dotenv import load_dotenv

from ..exceptions import ConfigError, NumericalError
from ..models.cavity_model import derive_params, lattice_depth_per_photon, validity_check
from ..models.run_manifest import RunManifest
from ..services import config_service
from ..services.branch_cache import BranchCache
from ..services.fluctuation_service import sweep_observables
from ..services.meanfield_service import MeanFieldModel, QDotConvention, TrajectoryConfig, integrate
from ..services.steadystate_service import kappa_grid, sweep_detuning
from ..version import get_version

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

TRAJECTORY_HEADER = ['t', 'gamma_m_t', 'alpha_re', 'alpha_im', 'photon', 'q', 'p', 'Q', 'P']
BRANCH_HEADER = ['delta_c_over_kappa', 'branch_id', 'photon', 'stable', 'q', 'Q', 'margin_over_kappa']
OBSERVABLE_HEADER = [
    'delta_c_over_kappa', 'xi2_over_xi1', 'squeezing_injected', 'photon',
    'sigma_q', 'sigma_Q', 's_q_db', 's_Q_db', 'e_n',
]

# Reference coupling and frequencies behind the default U0
REFERENCE_G0 = 2.0 * math.pi * 14.1e6
REFERENCE_OMEGA_CAVITY = 2.41494e15
REFERENCE_OMEGA_ATOM = 2.41419e15


class _WarningCollector(logging.Handler):
    """Keeps package warnings so they can go into the run manifest."""

    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.messages = []

    def emit(self, record):
        message = record.getMessage()
        if message not in self.messages:
            self.messages.append(message)


def format_value(value):
    """CSV cell: 17 significant digits for floats, empty for missing values."""
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    return format(float(value), '.17g')


def write_csv(path, header, rows):
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    _logger.info(f"Wrote {path}")
    return path


def _overrides(args):
    layer = {}
    if getattr(args, 'delta_c', None) is not None:
        layer['delta_c_over_kappa'] = args.delta_c
    if getattr(args, 'eta', None) is not None:
        layer['eta_over_kappa'] = args.eta
    if getattr(args, 'xi2_ratio', None) is not None:
        layer['xi2_over_xi1'] = args.xi2_ratio
    return layer


def _parse_ratios(text):
    try:
        return [float(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise ConfigError(f"expected comma separated numbers, got {text!r}", key='--xi2-ratios')


GRID_FLAGS = {'n_points': '--n', 'delta_min': '--delta-min'}


def _detuning_grid(args, scaled):
    try:
        return kappa_grid(scaled, args.delta_min, args.delta_max, args.n)
    except ConfigError as e:
        flag = GRID_FLAGS.get(e.key, e.key)
        raise ConfigError(str(e).replace(f"{e.key}: ", f"{flag}: ", 1), key=flag)


def _start_run(args, command):
    output_dir = config_service.get_output_dir(args.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command=command,
        arguments={k: v for k, v in vars(args).items() if k != 'handler'},
        config={},
        code_version=get_version(),
    )
    return output_dir, manifest


def _load_params(args, manifest):
    params = config_service.load_config(args.config, _overrides(args))
    manifest.config = config_service.dump_config(params)
    return params


def cmd_trajectory(args, params, output_dir, manifest):
    """Mean-field trajectory CSV."""
    scaled = params.scaled()
    derived = derive_params(scaled)
    model = MeanFieldModel(args.model)
    dt_kappa_t = args.dt_kappa_t
    if dt_kappa_t is None:
        dt_kappa_t = 1.0 if model is MeanFieldModel.ADIABATIC else 0.05 / (1.0 + abs(scaled.delta_c))
    cfg = TrajectoryConfig(
        model=model,
        t_end=args.t_end_gamma_m_t / params.gamma_m,
        dt=dt_kappa_t / params.kappa,
        sample_stride=args.sample_stride,
        q_dot=QDotConvention(args.q_dot),
    )
    trajectory = integrate(scaled, derived, cfg)
    rows = [
        (t, t * params.gamma_m, s.alpha_re, s.alpha_im, s.photon_number, s.q_bar, s.p_bar, s.Q_bar, s.P_bar)
        for t, s in zip(trajectory.times, trajectory.states)
    ]
    path = write_csv(output_dir / 'trajectory.csv', TRAJECTORY_HEADER, rows)
    manifest.outputs.append(path.name)
    validity_check(scaled, derived, float(max(trajectory.photon_numbers)))
    manifest.extra['dt_kappa_t'] = dt_kappa_t


def cmd_branches(args, params, output_dir, manifest):
    """Branch CSV and fold summary JSON."""
    scaled = params.scaled()
    derived = derive_params(scaled)
    grid = _detuning_grid(args, scaled)
    table = sweep_detuning(scaled, derived, grid, threads=args.threads)
    rows = [
        (pt.delta_c / scaled.kappa, pt.branch_id, pt.photon_number, pt.stable,
         pt.state.q_bar, pt.state.Q_bar, pt.margin / scaled.kappa)
        for pt in table.points
    ]
    manifest.outputs.append(write_csv(output_dir / 'branches.csv', BRANCH_HEADER, rows).name)

    summary = {
        'max_count': table.max_count,
        'first_fold_over_kappa': table.folds[0].location / scaled.kappa if table.folds else None,
        'folds': [
            {
                'delta_before_over_kappa': f.delta_before / scaled.kappa,
                'delta_after_over_kappa': f.delta_after / scaled.kappa,
                'location_over_kappa': f.location / scaled.kappa,
                'count_before': f.count_before,
                'count_after': f.count_after,
            }
            for f in table.folds
        ],
    }
    folds_path = output_dir / 'folds.json'
    with open(folds_path, 'w', encoding='utf-8', newline='\n') as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write('\n')
    manifest.outputs.append(folds_path.name)
    validity_check(scaled, derived, max(pt.photon_number for pt in table.points))


def cmd_sweep(args, params, output_dir, manifest):
    """Observables CSV over xi2 values x injection settings x detuning grid."""
    scaled = params.scaled()
    ratios = _parse_ratios(args.xi2_ratios)
    injections = {'off': [False], 'on': [True], 'both': [False, True]}[args.injection]
    grid = _detuning_grid(args, scaled)
    cache = BranchCache()
    rows = sweep_observables(scaled, ratios, injections, grid, cache, threads=args.threads)
    out_rows = []
    for row in rows:
        obs = row.observables
        out_rows.append((
            row.delta_c_over_kappa, row.xi2_over_xi1, row.squeezing_injected, row.photon,
            obs.sigma_q if obs else None, obs.sigma_Q if obs else None,
            obs.s_q_db if obs else None, obs.s_Q_db if obs else None, obs.e_n if obs else None,
        ))
    manifest.outputs.append(write_csv(output_dir / 'observables.csv', OBSERVABLE_HEADER, out_rows).name)
    manifest.extra['d_convention'] = params.d_convention.value
    manifest.extra['branch_cache'] = cache.get_cache_stats()
    photons = [row.photon for row in rows if row.photon is not None]
    if photons:
        validity_check(scaled, derive_params(scaled), max(photons))


def cmd_check(args, params, output_dir, manifest):
    """Print derived parameters and validity ratios."""
    derived = derive_params(params)
    photon = args.photon if args.photon is not None else params.eta ** 2 / params.kappa ** 2
    report = validity_check(params, derived, photon)
    summary = {
        'chi': derived.chi,
        'omega_c': derived.omega_c,
        'zeta': derived.zeta,
        'n_m': derived.n_m,
        'n_c': derived.n_c,
        'r_sq': derived.r_sq,
        'm_s_re': derived.m_s_re,
        'm_s_im': derived.m_s_im,
        'u0_from_g0': lattice_depth_per_photon(REFERENCE_G0, REFERENCE_OMEGA_CAVITY, REFERENCE_OMEGA_ATOM),
        'photon_number': photon,
        'lattice_ratio': report.lattice_ratio,
        'kappa_over_omega_m': report.sideband_ratio,
        'status': report.status,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    manifest.extra['check'] = summary


def build_parser():
    parser = argparse.ArgumentParser(
        prog='optomech_bec',
        description='Membrane-in-the-middle cavity with a Bose-Einstein condensate: '
                    'mean-field dynamics, multistability and stationary fluctuations.',
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON config file layered over the bundled defaults')
    common.add_argument('--output-dir', help='Directory for CSV/JSON outputs (env OPTOMECH_OUTPUT_DIR)')
    common.add_argument('--threads', type=int, help='Worker threads (env OPTOMECH_THREADS)')
    common.add_argument('--delta-c', type=float, help='delta_c in units of kappa')
    common.add_argument('--eta', type=float, help='eta in units of kappa')
    common.add_argument('--xi2-ratio', type=float, help='xi2 in units of xi1')

    subparsers = parser.add_subparsers(dest='command', required=True)

    trajectory = subparsers.add_parser('trajectory', parents=[common], help='Mean-field time evolution')
    trajectory.add_argument('--model', choices=[m.value for m in MeanFieldModel], default='adiabatic')
    trajectory.add_argument('--t-end-gamma-m-t', type=float, default=1.0, help='Duration in units of 1/gamma_m')
    trajectory.add_argument('--dt-kappa-t', type=float, help='Step in units of 1/kappa')
    trajectory.add_argument('--sample-stride', type=int, default=10)
    trajectory.add_argument('--q-dot', choices=[c.value for c in QDotConvention], default='langevin')
    trajectory.set_defaults(handler=cmd_trajectory)

    branches = subparsers.add_parser('branches', parents=[common], help='Steady-state branches versus detuning')
    branches.add_argument('--delta-min', type=float, default=0.0)
    branches.add_argument('--delta-max', type=float, default=120.0)
    branches.add_argument('--n', type=int, default=241)
    branches.set_defaults(handler=cmd_branches)

    sweep = subparsers.add_parser('sweep', parents=[common], help='Squeezing and entanglement along branch 1')
    sweep.add_argument('--xi2-ratios', default='0', help='Comma separated xi2/xi1 values')
    sweep.add_argument('--injection', choices=['on', 'off', 'both'], default='both')
    sweep.add_argument('--delta-min', type=float, default=0.0)
    sweep.add_argument('--delta-max', type=float, default=400.0)
    sweep.add_argument('--n', type=int, default=400)
    sweep.set_defaults(handler=cmd_sweep)

    check = subparsers.add_parser('check', parents=[common], help='Derived parameters and validity ratios')
    check.add_argument('--photon', type=float, help='Photon number for the validity check')
    check.set_defaults(handler=cmd_check)
    return parser


def main(argv=None):
    """
    Command-line entry point.

    Returns:
        int: 0 on success, 2 for configuration errors, 3 for numerical failures.
    """
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=config_service.get_log_level(),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    collector = _WarningCollector()
    package_logger = logging.getLogger('optomech_bec')
    package_logger.addHandler(collector)
    started = time.perf_counter()
    output_dir, manifest = _start_run(args, args.command)
    status = EXIT_OK
    try:
        args.threads = config_service.get_threads(args.threads)
        manifest.arguments['threads'] = args.threads
        params = _load_params(args, manifest)
        args.handler(args, params, output_dir, manifest)
    except ConfigError as e:
        _logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        status = EXIT_CONFIG
        manifest.error = str(e)
    except NumericalError as e:
        _logger.error(f"Numerical error: {e}")
        print(f"error: {e}", file=sys.stderr)
        status = EXIT_NUMERICAL
        manifest.error = str(e)
    finally:
        package_logger.removeHandler(collector)

    for message in collector.messages:
        manifest.add_warning(message)
    manifest.exit_code = status
    manifest.wall_time_s = time.perf_counter() - started
    if manifest.config:
        config_path = output_dir / 'resolved_config.json'
        with open(config_path, 'w', encoding='utf-8', newline='\n') as handle:
            json.dump(manifest.config, handle, indent=2, sort_keys=True)
            handle.write('\n')
        manifest.outputs.append(config_path.name)
    manifest.write(output_dir / 'manifest.json')
    return status
