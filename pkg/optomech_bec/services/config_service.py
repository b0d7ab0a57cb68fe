import json
import logging
import math
import os
from pathlib import Path

from ..exceptions import ConfigError
from ..models.system_params import RATE_FIELDS, SystemParams

_logger = logging.getLogger(__name__)

DEFAULTS_PATH = Path(__file__).resolve().parent.parent / 'data' / 'reference_params.json'

FIELD_KEYS = (
    'kappa', 'omega_m', 'gamma_m', 'gamma_c', 'xi1', 'xi2', 'eta', 'delta_c',
    'omega_r', 'omega_sw', 'n_atoms', 'u0', 'temperature', 'n_s', 'phi',
    'squeezing_enabled', 'd_convention',
)

# ratio key -> (absolute key, reference key)
RATIO_KEYS = {
    'eta_over_kappa': ('eta', 'kappa'),
    'xi1_over_kappa': ('xi1', 'kappa'),
    'gamma_c_over_kappa': ('gamma_c', 'kappa'),
    'delta_c_over_kappa': ('delta_c', 'kappa'),
    'xi2_over_xi1': ('xi2', 'xi1'),
    'omega_sw_over_omega_r': ('omega_sw', 'omega_r'),
}
_COUNTERPART = {ratio: absolute for ratio, (absolute, _) in RATIO_KEYS.items()}
_COUNTERPART.update({absolute: ratio for ratio, absolute in _COUNTERPART.items()})


def _number(key, value):
    if isinstance(value, dict):
        if key not in RATE_FIELDS:
            raise ConfigError(f"only rates accept the two_pi_hz form, got {value!r}", key=key)
        if set(value) != {'two_pi_hz'}:
            raise ConfigError(f"expected {{\"two_pi_hz\": <number>}}, got {value!r}", key=key)
        return 2.0 * math.pi * _number(key, value['two_pi_hz'])
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", key=key)
    if not math.isfinite(value):
        raise ConfigError(f"must be finite, got {value!r}", key=key)
    return float(value)


def check_layer(layer, source='config'):
    """
    Validate one configuration layer.

    Args:
        layer (dict): Raw key/value pairs.
        source (str): Where the layer came from, for messages.

    Raises:
        ConfigError: Unknown key, or an absolute key together with its ratio form.
    """
    if not isinstance(layer, dict):
        raise ConfigError(f"{source} must be a JSON object, got {type(layer).__name__}")
    for key in layer:
        if key not in FIELD_KEYS and key not in RATIO_KEYS:
            raise ConfigError(f"unknown key in {source}", key=key)
    for ratio, (absolute, _) in RATIO_KEYS.items():
        if ratio in layer and absolute in layer:
            raise ConfigError(f"{absolute} and {ratio} are mutually exclusive in {source}", key=ratio)


def merge_layers(*layers):
    """
    Stack configuration layers; a later key replaces both itself and its ratio/absolute counterpart.

    Returns:
        dict: Merged raw configuration.
    """
    merged = {}
    for layer in layers:
        for key, value in layer.items():
            merged.pop(_COUNTERPART.get(key), None)
            merged[key] = value
    return merged


def resolve_config(raw):
    """
    Turn a merged raw configuration into SystemParams (rad/s).

    Args:
        raw (dict): Merged layers, see merge_layers.

    Returns:
        SystemParams: Validated parameters.
    """
    check_layer(raw, 'merged configuration')
    values = {}
    for key in FIELD_KEYS:
        if key not in raw:
            continue
        value = raw[key]
        if key == 'squeezing_enabled':
            if not isinstance(value, bool):
                raise ConfigError(f"expected true or false, got {value!r}", key=key)
            values[key] = value
        elif key == 'd_convention':
            if not isinstance(value, str):
                raise ConfigError(f"expected a string, got {value!r}", key=key)
            values[key] = value
        else:
            values[key] = _number(key, value)

    # references first: xi2_over_xi1 needs xi1, which may itself be a ratio
    for ratio in ('eta_over_kappa', 'xi1_over_kappa', 'gamma_c_over_kappa', 'delta_c_over_kappa',
                  'omega_sw_over_omega_r', 'xi2_over_xi1'):
        if ratio not in raw:
            continue
        absolute, reference = RATIO_KEYS[ratio]
        if reference not in values:
            raise ConfigError(f"needs {reference} to be set", key=ratio)
        values[absolute] = _number(ratio, raw[ratio]) * values[reference]

    missing = [key for key in FIELD_KEYS if key not in values
               and key not in ('n_s', 'phi', 'squeezing_enabled', 'd_convention')]
    if missing:
        raise ConfigError(f"missing required key {missing[0]}", key=missing[0])
    return SystemParams(**values)


def read_config_file(path):
    """
    Read one JSON layer from disk.

    Args:
        path (str | Path): Config file.

    Returns:
        dict: Raw layer.
    """
    path = Path(path)
    try:
        with path.open(encoding='utf-8') as handle:
            layer = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    check_layer(layer, str(path))
    return layer


def load_default_layer():
    """Bundled defaults (the reference parameter set)."""
    return read_config_file(DEFAULTS_PATH)


def load_config(path=None, overrides=None):
    """
    Resolve defaults, an optional config file and command-line overrides.

    Args:
        path (str, optional): JSON config file.
        overrides (dict, optional): Extra layer applied last.

    Returns:
        SystemParams: Resolved parameters in rad/s.
    """
    layers = [load_default_layer()]
    if path:
        layers.append(read_config_file(path))
        _logger.info(f"Loaded configuration from {path}")
    if overrides:
        check_layer(overrides, 'command-line overrides')
        layers.append(overrides)
    return resolve_config(merge_layers(*layers))


def dump_config(p):
    """
    Snapshot of resolved parameters that load_config reads back unchanged.

    Args:
        p (SystemParams): Parameters in any rate unit.

    Returns:
        dict: Absolute values in rad/s keyed by field name.
    """
    return p.in_rad_per_s().to_dict()


def get_threads(requested=None):
    """Worker count: explicit value, then OPTOMECH_THREADS, then the CPU count."""
    if requested is None:
        env_value = os.getenv('OPTOMECH_THREADS')
        if env_value:
            try:
                requested = int(env_value)
            except ValueError:
                raise ConfigError(f"expected an integer, got {env_value!r}", key='OPTOMECH_THREADS')
        else:
            requested = os.cpu_count() or 1
    if requested < 1:
        raise ConfigError(f"must be >= 1, got {requested}", key='threads')
    return requested


def get_log_level():
    return os.getenv('OPTOMECH_LOG_LEVEL', 'INFO').upper()


def get_output_dir(requested=None):
    return Path(requested or os.getenv('OPTOMECH_OUTPUT_DIR', 'optomech_output'))
