"""Pipeline configuration: INI file, presets, command-line overrides and STEALTH_SEED."""
import configparser
import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, replace
from enum import Enum

from app.util.annotator import AnnotatorConfig
from app.util.augment import SWEEP_SNR_DB, AugmentConfig
from app.util.dsp import DspConfig
from app.util.errors import ConfigError, CorpusIOError
from app.util.experiments import MODEL_SCALES
from app.util.features import FeatureSet
from app.util.model import ModelConfig
from app.util.stream import StreamConfig
from app.util.train_eval import TrainConfig, model_config_for
from data.etl.corpus_etl import Composition, SynthConfig, tiny_composition

logger = logging.getLogger(__name__)

SEED_ENV_VAR = 'STEALTH_SEED'
PRESETS = ('default', 'tiny')
SWEEP_GRIDS = ('robustness', 'model_size', 'features', 'axis', 'folds', 'snr')
ALIASES = {'participants': 'synth.n_participants'}


@dataclass(frozen=True)
class FeatureConfig:
    feature_set: FeatureSet = FeatureSet.FULL41

    def __post_init__(self):
        object.__setattr__(self, 'feature_set', FeatureSet(self.feature_set))


@dataclass(frozen=True)
class SplitConfig:
    holdout_frac: float = 0.1
    # 0 runs the full participant rotation
    n_folds: int = 0
    # fold used by train, eval and the single-fold grids
    fold: int = 0
    val_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.holdout_frac < 1 or not 0 <= self.val_fraction < 1:
            raise ValueError("holdout_frac must lie in (0, 1) and val_fraction in [0, 1)")
        if self.n_folds < 0 or self.fold < 0:
            raise ValueError("n_folds and fold must be nonnegative")


@dataclass(frozen=True)
class SweepConfig:
    grid: str = 'robustness'
    snr_levels: tuple = SWEEP_SNR_DB
    scales: tuple = MODEL_SCALES
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'snr_levels', tuple(float(v) for v in self.snr_levels))
        object.__setattr__(self, 'scales', tuple(float(v) for v in self.scales))
        if self.grid not in SWEEP_GRIDS:
            raise ValueError(f"unknown sweep grid {self.grid!r}")
        if not self.snr_levels or not self.scales or min(self.scales) <= 0:
            raise ValueError("snr_levels and positive scales must be non-empty")


@dataclass(frozen=True)
class PipelineConfig:
    dsp: DspConfig = DspConfig()
    synth: SynthConfig = SynthConfig()
    annotator: AnnotatorConfig = AnnotatorConfig()
    features: FeatureConfig = FeatureConfig()
    augment: AugmentConfig = AugmentConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    stream: StreamConfig = StreamConfig()
    split: SplitConfig = SplitConfig()
    sweep: SweepConfig = SweepConfig()
    preset: str = 'default'

    def to_dict(self) -> dict:
        return _to_builtin(self)


# Keys each INI section accepts; nested configs are assembled, not read.
_SECTIONS = {
    'dsp': DspConfig,
    'synth': SynthConfig,
    'annotator': AnnotatorConfig,
    'features': FeatureConfig,
    'augment': AugmentConfig,
    'model': ModelConfig,
    'train': TrainConfig,
    'stream': StreamConfig,
    'split': SplitConfig,
    'sweep': SweepConfig,
}
_ASSEMBLED = {'train': {'augment', 'feature_set'}, 'stream': {'gate', 'dsp', 'feature_set'}, 'synth': {'composition'}}
_EXTRA_KEYS = {'synth': {'composition': 'default'}, 'stream': {'gate_min_separation_s': 1.0}}


def section_keys(section: str) -> dict:
    """key -> field type for one section."""
    skip = _ASSEMBLED.get(section, set())
    keys = {f.name: f.type for f in dataclasses.fields(_SECTIONS[section]) if f.name not in skip}
    for key, default in _EXTRA_KEYS.get(section, {}).items():
        keys[key] = type(default)
    return keys


def _to_builtin(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _to_builtin(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (tuple, list)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in sorted(value.items())}
    if isinstance(value, float) and value in (float('inf'), float('-inf')):
        return str(value)
    return value


def _parse_number(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return float(text)


def coerce(value, typ, key: str = ''):
    """Converts an INI or command-line string to the field's declared type."""
    if not isinstance(value, str):
        return value
    try:
        if typ is bool:
            lowered = value.strip().lower()
            if lowered not in ('1', '0', 'true', 'false', 'yes', 'no', 'on', 'off'):
                raise ValueError(f"not a boolean: {value!r}")
            return lowered in ('1', 'true', 'yes', 'on')
        if typ is int:
            return int(value)
        if typ is float:
            return float(value)
        if typ is tuple:
            return tuple(_parse_number(v) for v in value.split(',') if v.strip())
        if isinstance(typ, type) and issubclass(typ, Enum):
            return typ(value.strip())
        return value.strip()
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {e}") from e


def parse_composition(text: str) -> Composition:
    """``default``, ``tiny`` or ``uniform:<k>``."""
    text = text.strip().lower()
    if text == 'default':
        return Composition()
    if text == 'tiny':
        return tiny_composition()
    if text.startswith('uniform:'):
        return Composition.uniform(int(text.split(':', 1)[1]))
    raise ConfigError(f"unknown composition {text!r}")


def preset_values(name: str) -> dict:
    """Section -> {key: value} applied before the config file."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")
    if name == 'default':
        return {}
    return {
        'synth': {'n_participants': '4', 'composition': 'tiny', 'workers': '1'},
        'model': {'block_channels': '4,4,8,8'},
        'train': {'batch_size': '16', 'max_epochs': '3', 'patience': '2', 'workers': '1'},
        'split': {'n_folds': '1'},
        'sweep': {'scales': '0.5,1.0', 'snr_levels': '-10,10'},
    }


def parse_overrides(tokens: list) -> list:
    """``--key value`` / ``--section.key value`` / ``--key=value`` tokens into (key, value) pairs."""
    pairs, i = [], 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith('--') or len(token) < 3:
            raise ConfigError(f"unexpected argument {token!r}")
        if '=' in token:
            key, value = token[2:].split('=', 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"missing value for {token}")
            key, value = token[2:], tokens[i + 1]
            i += 2
        pairs.append((ALIASES.get(key.replace('-', '_'), key.replace('-', '_')), value))
    return pairs


def _apply(raw: dict, key: str, value: str) -> None:
    if '.' in key:
        section, name = key.split('.', 1)
        if section not in _SECTIONS or name not in section_keys(section):
            raise ConfigError(f"unknown config key {key!r}")
        raw.setdefault(section, {})[name] = value
        return
    targets = [s for s in _SECTIONS if key in section_keys(s)]
    if not targets:
        raise ConfigError(f"unknown config key {key!r}")
    for section in targets:
        raw.setdefault(section, {})[key] = value


def read_ini(path: str) -> dict:
    if not os.path.isfile(path):
        raise CorpusIOError("config file not found", path)
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}", path) from e
    raw = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]", path)
        keys = section_keys(section)
        for name, value in parser.items(section):
            if name not in keys:
                raise ConfigError(f"unknown key {name!r} in [{section}]", path)
            raw.setdefault(section, {})[name] = value
    return raw


def load_config(path: str = None, overrides: list = None, preset: str = 'default', env: dict = None) -> PipelineConfig:
    """
    Resolves the pipeline configuration.

    Precedence, lowest first: dataclass defaults, preset, config file,
    command-line overrides, then the STEALTH_SEED environment variable for
    every ``seed`` key.

    Args:
        path (str): Optional INI file with sections named like PipelineConfig fields.
        overrides (list): (key, value) pairs; keys are ``section.key`` or a bare key
            applied to every section that has it.
        preset (str): ``default`` or ``tiny``.
        env (dict): Environment to read STEALTH_SEED from; defaults to os.environ.

    Returns:
        PipelineConfig: Validated configuration.
    """
    raw = {section: dict(values) for section, values in preset_values(preset).items()}
    if path:
        for section, values in read_ini(path).items():
            raw.setdefault(section, {}).update(values)
    for key, value in overrides or []:
        _apply(raw, key, value)
    env = os.environ if env is None else env
    if env.get(SEED_ENV_VAR):
        _apply(raw, 'seed', env[SEED_ENV_VAR])
        logger.info("%s=%s overrides every seed", SEED_ENV_VAR, env[SEED_ENV_VAR])

    try:
        values = {s: {k: coerce(v, section_keys(s)[k], f"{s}.{k}") for k, v in raw.get(s, {}).items()}
                  for s in _SECTIONS}
        dsp = DspConfig(**values['dsp'])
        synth_values = dict(values['synth'])
        composition = parse_composition(synth_values.pop('composition', 'default'))
        synth = SynthConfig(composition=composition, **synth_values)
        annotator = AnnotatorConfig(**values['annotator'])
        features = FeatureConfig(**values['features'])
        augment = AugmentConfig(**values['augment'])
        model = model_config_for(features.feature_set, ModelConfig(**values['model']))
        train = TrainConfig(augment=augment, feature_set=features.feature_set, **values['train'])
        stream_values = dict(values['stream'])
        gate = replace(annotator, min_separation_s=stream_values.pop('gate_min_separation_s', 1.0))
        stream = StreamConfig(gate=gate, feature_set=features.feature_set, dsp=dsp, **stream_values)
        split = SplitConfig(**values['split'])
        sweep = SweepConfig(**values['sweep'])
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid configuration: {e}", path) from e
    return PipelineConfig(dsp, synth, annotator, features, augment, model, train, stream, split, sweep, preset)


def config_hash(cfg: PipelineConfig) -> str:
    """SHA-256 of the canonical JSON of the resolved config."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(blob.encode('utf-8')).hexdigest()
