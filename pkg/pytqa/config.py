"""
The global configuration file.

A file holds ``key = value`` lines grouped under ``[section]`` headers;
``#`` starts a comment and keys before the first header belong to
``[global]``::

    preset = synthetic
    corpus = corpus.tsv
    seed = 7

    [search]
    max_rules = 6

    [train]
    epochs = 20

The preset supplies the defaults of every section, explicit keys override
them and a seed given on the command line overrides every seed.
"""

import configparser
import io
import os
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .datasets import SynConfig
from .evalkit import EvalConfig
from .grammar import GrammarConfig
from .model import ModelConfig
from .search import SearchConfig
from .trainer import TrainConfig

PRESETS = ('synthetic', 'wtq-like', 'wsq-like')
MODEL_SIZES = {'synthetic': 'desk', 'wtq-like': 'wtq', 'wsq-like': 'wsq'}
CACHE_ENV = 'PYTQA_CACHE_DIR'
QUIET_ENV = 'PYTQA_QUIET'

# keys derived from the [global] section
_DERIVED = {'search': ('grammar', 'cache_path'),
            'eval': ('grammar',),
            'train': ('checkpoint_path', 'metrics_path')}
_SECTIONS = {'gen': SynConfig, 'grammar': GrammarConfig,
             'search': SearchConfig, 'model': ModelConfig,
             'train': TrainConfig, 'eval': EvalConfig}
_SEEDED = ('gen', 'model', 'train')


class ConfigError(RuntimeError):
    pass


@dataclass(frozen=True)
class GlobalConfig(object):
    """
    Paths, the preset, the seed and one configuration per component.
    """
    corpus: Optional[str] = None
    cache_dir: str = '.pytqa'
    checkpoint: Optional[str] = None
    metrics: Optional[str] = None
    preset: str = 'synthetic'
    seed: int = 0
    gen: SynConfig = field(default_factory=SynConfig)
    grammar: GrammarConfig = field(default_factory=GrammarConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def cache_path(self):
        return os.path.join(self.cache_dir, 'search.cache')

    @property
    def checkpoint_path(self):
        return self.checkpoint or os.path.join(self.cache_dir, 'model.npz')


def preset_config(name):
    """
    Defaults of a preset.

    >>> preset_config('wtq-like').search.max_rules
    9
    """
    if name not in PRESETS:
        raise ConfigError("unknown preset %r, expected one of %s" %
                          (name, ', '.join(PRESETS)))
    search = SearchConfig.preset(name)
    return GlobalConfig(preset=name, grammar=search.grammar, search=search,
                        model=ModelConfig.preset(MODEL_SIZES[name]),
                        eval=EvalConfig(max_rules=search.max_rules,
                                        grammar=search.grammar))


def _parser():
    parser = configparser.ConfigParser(comment_prefixes=('#',),
                                       inline_comment_prefixes=('#',),
                                       strict=False, interpolation=None)
    parser.optionxform = str
    return parser


def _convert(section, key, text, default, kind=None):
    try:
        if key == 'template_mix':
            pairs = [item.split(':') for item in text.split(',') if
                     item.strip()]
            return dict((name.strip(), float(weight))
                        for name, weight in pairs)
        if isinstance(default, bool):
            states = configparser.ConfigParser.BOOLEAN_STATES
            if text.lower() not in states:
                raise ValueError("not a boolean")
            return states[text.lower()]
        if isinstance(default, tuple):
            kinds = [type(x) for x in default]
            items = [x.strip() for x in text.split(',')]
            if len(items) != len(kinds):
                raise ValueError("expected %d values" % len(kinds))
            return tuple(kind(x) for kind, x in zip(kinds, items))
        if isinstance(default, (int, float, str)):
            return type(default)(text)
        kinds = [k for k in getattr(kind, '__args__', ())
                 if k is not type(None)]
        return (kinds[0] if kinds else str)(text)
    except ValueError as error:
        raise ConfigError("%s.%s: bad value %r: %s" % (section, key, text,
                                                       error))


def _section(name, options, base):
    allowed = dict((f.name, f.type) for f in fields(base)
                   if f.name not in _DERIVED.get(name, ()))
    values = {}
    for key, text in options.items():
        if key not in allowed:
            raise ConfigError("unknown key %s.%s" % (name, key))
        values[key] = _convert(name, key, text, getattr(base, key),
                               allowed[key])
    return values


def read_config(text, seed=None, environ=None):
    """
    Parse configuration text.

    Args:
        text (str): the configuration.
        seed (int, optional): overrides every seed.
        environ (dict, optional): environment, `os.environ` by default.

    Returns:
        `GlobalConfig`

    Raises:
        ConfigError: for unknown sections or keys and bad values.

    >>> config = read_config('preset = wsq-like\\n[train]\\nepochs = 3\\n',
    ...                      seed=5, environ={})
    >>> config.train.epochs, config.train.seed, config.grammar.enable_or
    (3, 5, False)
    """
    environ = os.environ if environ is None else environ
    parser = _parser()
    try:
        parser.read_string('[global]\n' + text)
    except configparser.Error as error:
        raise ConfigError(str(error))
    unknown = set(parser.sections()) - set(_SECTIONS) - set(['global'])
    if unknown:
        raise ConfigError("unknown section [%s]" % sorted(unknown)[0])
    options = dict((s, dict(parser.items(s))) for s in parser.sections())
    glob = options.get('global', {})
    config = preset_config(glob.get('preset', 'synthetic'))
    values = _section('global', glob, config)
    for name in _SECTIONS:
        if name in values:
            raise ConfigError("unknown key global.%s" % name)
    config = replace(config, **values)
    if seed is not None:
        config = replace(config, seed=seed)
    sections = {}
    for name in _SECTIONS:
        base = getattr(config, name)
        section = _section(name, options.get(name, {}), base)
        if name in _SEEDED and (seed is not None or 'seed' not in section):
            section['seed'] = config.seed
        sections[name] = section
    try:
        grammar = replace(config.grammar, **sections['grammar'])
        search = replace(config.search, grammar=grammar,
                         cache_path=config.cache_path, **sections['search'])
        if 'max_rules' not in sections['eval']:
            sections['eval']['max_rules'] = search.max_rules
        config = replace(
            config, grammar=grammar, search=search,
            gen=replace(config.gen, **sections['gen']),
            model=replace(config.model, **sections['model']),
            train=replace(config.train, **sections['train']),
            eval=replace(config.eval, grammar=grammar, **sections['eval']))
    except RuntimeError as error:
        raise ConfigError(str(error))
    if environ.get(CACHE_ENV):
        config = replace(config, cache_dir=environ[CACHE_ENV])
        config = replace(config, search=replace(
            config.search, cache_path=config.cache_path))
    return replace(config, train=replace(
        config.train, checkpoint_path=config.checkpoint_path,
        metrics_path=config.metrics))


def load_config(path=None, seed=None, environ=None):
    """
    Read a configuration file; no path gives the preset defaults.

    Args:
        path (str, optional): configuration file.
        seed (int, optional): overrides every seed.
        environ (dict, optional): environment, `os.environ` by default.

    Returns:
        `GlobalConfig`
    """
    if path is None:
        return read_config('', seed, environ)
    try:
        with io.open(path, encoding='utf-8') as stream:
            text = stream.read()
    except IOError as error:
        raise ConfigError("cannot read %s: %s" % (path, error))
    return read_config(text, seed, environ)


def is_quiet(environ=None):
    environ = os.environ if environ is None else environ
    return environ.get(QUIET_ENV, '').lower() in ('1', 'true', 'yes', 'on')
