import copy
import json
import os

import jsonschema

from gait_errors import ConfigError
from seq2seq_gait import ATTENTION_MODES, BAS, LAS, MBAS, NO_ATTENTION
from skeleton_io import HALF_PREDICTION, REVERSE, TASKS

DEFAULTS = {
    'dataset': None,
    'sequence_length': 6,
    'hidden_size': 128,
    'window': 2,
    'num_joints': None,
    'attention': LAS,
    'auxiliary_attention': BAS,
    'tasks': [REVERSE],
    'lambda_s': 1.0,
    'lambda_a': 0.5,
    'lambda_c': 0.5,
    'beta': 1e-4,
    'temperature': 0.1,
    'batch_size': 4,
    'interval': 1,
    'optimizer': 'adam',
    'learning_rate': 5e-4,
    'adam_beta1': 0.9,
    'adam_beta2': 0.999,
    'clip_norm': 5.0,
    'epochs': 50,
    'seed': 0,
    'strategy': 'AP',
    'feature': 'context',
    'recognizer_hidden': 256,
    'recognizer_epochs': 200,
    'recognizer_learning_rate': 1e-3,
    'head_tail_discard': 10,
    'step': None,
    'center_joint': None,
    'contrast_hidden': None,
    'output': 'output/',
    'log_level': 'INFO'
}

# environment variables and the keys they set
ENVIRONMENT = {
    'GAIT_OUTPUT_PATH': 'output',
    'GAIT_SEED': 'seed',
    'LOG_LEVEL': 'log_level'
}

NUMBER = {'type': 'number'}
NON_NEGATIVE = {'type': 'number', 'minimum': 0}
POSITIVE = {'type': 'number', 'exclusiveMinimum': 0}

SCHEMA = {
    'type': 'object',
    'additionalProperties': False,
    'properties': {
        'dataset': {'type': ['string', 'null']},
        'sequence_length': {'type': 'integer', 'minimum': 2},
        'hidden_size': {'type': 'integer', 'minimum': 1},
        'window': {'type': 'integer', 'minimum': 1},
        'num_joints': {'type': ['integer', 'null'], 'minimum': 2},
        'attention': {'enum': list(ATTENTION_MODES)},
        'auxiliary_attention': {'enum': [NO_ATTENTION, BAS]},
        'tasks': {
            'type': 'array',
            'items': {'enum': list(TASKS)},
            'minItems': 1,
            'uniqueItems': True
        },
        'lambda_s': NON_NEGATIVE,
        'lambda_a': NON_NEGATIVE,
        'lambda_c': NON_NEGATIVE,
        'beta': NON_NEGATIVE,
        'temperature': POSITIVE,
        'batch_size': {'type': 'integer', 'minimum': 2},
        'interval': {'type': 'integer', 'minimum': 1},
        'optimizer': {'enum': ['adam', 'sgd']},
        'learning_rate': POSITIVE,
        'adam_beta1': {'type': 'number', 'minimum': 0, 'exclusiveMaximum': 1},
        'adam_beta2': {'type': 'number', 'minimum': 0, 'exclusiveMaximum': 1},
        'clip_norm': {'type': ['number', 'null'], 'exclusiveMinimum': 0},
        'epochs': {'type': 'integer', 'minimum': 0},
        'seed': {'type': 'integer', 'minimum': 0},
        'strategy': {'enum': ['AP', 'SC']},
        'feature': {'enum': ['context', 'hidden']},
        'recognizer_hidden': {'type': 'integer', 'minimum': 1},
        'recognizer_epochs': {'type': 'integer', 'minimum': 0},
        'recognizer_learning_rate': POSITIVE,
        'head_tail_discard': {'type': 'integer', 'minimum': 0},
        'step': {'type': ['integer', 'null'], 'minimum': 1},
        'center_joint': {'type': ['integer', 'null'], 'minimum': 0},
        'contrast_hidden': {'type': ['integer', 'null'], 'minimum': 1},
        'output': {'type': 'string'},
        'log_level': {
            'enum': ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
        }
    }
}


class RunConfig:
    """RunConfig class

    Resolved and validated run configuration. Values are resolved from
    defaults, then environment variables, then a JSON config file, then
    explicit overrides (CLI flags).
    """

    def __init__(self, values=None, environ=None, validate=True):
        """Constructor

        :param dict values: Config file values merged with flag overrides
        :param dict environ: Environment (default os.environ)
        :param bool validate: Check schema and rules
        """
        if environ is None:
            environ = os.environ
        self.values = copy.deepcopy(DEFAULTS)
        for variable, key in ENVIRONMENT.items():
            if variable in environ:
                value = environ[variable]
                if key == 'seed':
                    try:
                        value = int(value)
                    except ValueError:
                        raise ConfigError("%s must be an integer, got '%s'" %
                                          (variable, value))
                self.values[key] = value
        for key, value in (values or {}).items():
            self.values[key] = copy.deepcopy(value)
        if validate:
            self.validate()

    @classmethod
    def resolve(cls, config_path=None, overrides=None, environ=None):
        """Resolve a config from an optional JSON file and flag overrides.

        :param str config_path: JSON config file
        :param dict overrides: Values given on the command line
        :param dict environ: Environment (default os.environ)
        """
        values = {}
        if config_path:
            values.update(read_config_file(config_path))
        values.update(overrides or {})
        return cls(values, environ)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def to_dict(self):
        return copy.deepcopy(self.values)

    def updated(self, **overrides):
        """Return a validated copy with some keys replaced."""
        values = self.to_dict()
        values.update(overrides)
        return RunConfig(values, environ={})

    def validate(self):
        try:
            jsonschema.validate(self.values, SCHEMA)
        except jsonschema.ValidationError as e:
            path = '.'.join(str(p) for p in e.absolute_path) or 'config'
            raise ConfigError("Invalid value for '%s': %s" % (path, e.message))

        tasks = self.values['tasks']
        attention = self.values['attention']
        if attention in (MBAS, LAS) and tasks[0] != REVERSE:
            raise ConfigError(
                "Rule 'locality needs reverse reconstruction': attention "
                "'%s' requires 'reverse' as the first task, got '%s'" %
                (attention, tasks[0])
            )
        if self.values['lambda_a'] > 0 and attention != LAS:
            raise ConfigError(
                "Rule 'alignment loss needs las': lambda_a=%s requires "
                "attention 'las', got '%s'" %
                (self.values['lambda_a'], attention)
            )
        if HALF_PREDICTION in tasks and self.values['sequence_length'] % 2:
            raise ConfigError(
                "Rule 'half prediction needs even f': sequence_length=%d" %
                self.values['sequence_length']
            )
        if self.values['feature'] == 'context':
            for task in tasks:
                if self.task_attention(task) == NO_ATTENTION:
                    raise ConfigError(
                        "Rule 'context features need attention': task '%s' "
                        "runs without attention" % task
                    )

    def task_attention(self, task):
        """Attention mode a task trains with.

        The locality mask assumes reverse alignment, so only reverse
        reconstruction may use mbas/las; other tasks fall back to the
        auxiliary mode.
        """
        attention = self.values['attention']
        if task == REVERSE or attention in (NO_ATTENTION, BAS):
            return attention
        return self.values['auxiliary_attention']


def read_config_file(path):
    """Read a JSON object of config keys."""
    try:
        with open(path, encoding='utf-8') as fh:
            values = json.load(fh)
    except (OSError, ValueError) as e:
        raise ConfigError("Could not read config file '%s': %s" % (path, e))
    if not isinstance(values, dict):
        raise ConfigError("Config file '%s' must hold a JSON object" % path)
    return values
