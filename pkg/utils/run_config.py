"""
Experiment configuration: INI files with [run], [model], [rates] and [lotka]
sections, overridden by command-line flags
"""
import configparser
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

from config import Config
from utils.errors import ConfigError

logger = logging.getLogger(__name__)


def parse_floats(text) -> List[float]:
    """'0.1, 0.01,0.001' -> [0.1, 0.01, 0.001]"""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(',') if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got '{text}'")


def parse_vectors(text) -> List[List[float]]:
    """'1,2; 1.1,2' -> [[1, 2], [1.1, 2]]"""
    if isinstance(text, (list, tuple)):
        return [parse_floats(v) for v in text]
    return [parse_floats(part) for part in str(text).split(';') if part.strip()]


def parse_ints(text) -> List[int]:
    try:
        return [int(v) for v in parse_floats(text)]
    except ConfigError:
        raise ConfigError(f"expected a comma-separated list of integers, got '{text}'")


# key -> parser for the [run] section
RUN_KEYS = {
    'model': str,
    'seed': int,
    'threads': int,
    'output': str,
    'T': float,
    'n_steps': int,
    'n_paths': int,
    'deltas': parse_floats,
    'delta': float,
    'p': float,
    'x': parse_floats,
    'i': int,
    'direction': parse_floats,
    'dt_list': parse_floats,
    'dt': float,
    'xs': parse_vectors,
    'test_function': str,
    'H': float,
    'w': float,
    'n': parse_ints,
    'h': float,
    'm': float,
    't_grid': parse_floats,
    'y0': parse_vectors,
    'R': float,
    'index': int,
}

SECTIONS = ('run', 'model', 'rates', 'lotka')

# left out of the provenance echo so thread count and destination do not change output bytes
_NOT_ECHOED = ('threads', 'output')


@dataclass
class RunConfig:
    """Resolved settings of one CLI invocation"""
    command: str
    values: Dict[str, object] = field(default_factory=dict)
    model_params: Dict[str, str] = field(default_factory=dict)
    sections: Dict[str, Dict[str, str]] = field(default_factory=dict)
    check: bool = False

    def get(self, key: str, default=None):
        value = self.values.get(key)
        return default if value is None else value

    @property
    def seed(self) -> int:
        return int(self.get('seed', Config.DEFAULT_SEED))

    @property
    def threads(self) -> int:
        return int(self.get('threads', Config.THREADS))

    @property
    def output(self) -> Optional[str]:
        return self.get('output', '-')

    def echo(self) -> List[str]:
        lines = [f"{k}={_render(v)}" for k, v in sorted(self.values.items())
                 if v is not None and k not in _NOT_ECHOED]
        lines += [f"[model] {k}={v}" for k, v in sorted(self.model_params.items())]
        for name in sorted(self.sections):
            lines += [f"[{name}] {k}={v}" for k, v in sorted(self.sections[name].items())]
        if self.check:
            lines.append("check=1")
        return lines


def _render(value) -> str:
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], (list, tuple)):
            return ';'.join(_render(v) for v in value)
        return ','.join(repr(v) if isinstance(v, float) else str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def _parse_run_value(key: str, raw):
    parser = RUN_KEYS[key]
    try:
        return parser(raw)
    except ConfigError as e:
        raise ConfigError(f"[run] {key}: {e}", key=key)
    except ValueError:
        raise ConfigError(f"[run] {key} has an invalid value '{raw}'", key=key)


def read_config_file(path: str) -> Dict[str, Dict[str, str]]:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        with open(path, encoding='utf-8') as f:
            parser.read_file(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", key=path)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e}", key=path)

    sections = {}
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}] in {path}", key=name)
        sections[name] = dict(parser.items(name))
    return sections


def load_run_config(command: str, path: Optional[str] = None, overrides: Optional[Mapping[str, object]] = None,
                    check: bool = False) -> RunConfig:
    """File values first, then every non-None override; unknown [run] keys are rejected"""
    sections = read_config_file(path) if path else {}
    run_section = sections.pop('run', {})
    values: Dict[str, object] = {}
    for key, raw in run_section.items():
        if key not in RUN_KEYS:
            raise ConfigError(f"unknown key '{key}' in [run]", key=key)
        values[key] = _parse_run_value(key, raw)

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in RUN_KEYS:
            raise ConfigError(f"unknown setting '{key}'", key=key)
        values[key] = value

    model_params = sections.pop('model', {})
    cfg = RunConfig(command=command, values=values, model_params=model_params, sections=sections, check=check)
    logger.debug(f"Resolved configuration for {command}: {cfg.echo()}")
    return cfg
