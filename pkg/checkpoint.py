import json

import jsonschema
import numpy as np

from gait_errors import CheckpointError

CHECKPOINT_VERSION = 1

CHECKPOINT_SCHEMA = {
    'type': 'object',
    'required': ['version', 'config', 'parameters'],
    'properties': {
        'version': {'type': 'integer'},
        'config': {'type': 'object'},
        'parameters': {
            'type': 'array',
            'items': {
                'type': 'object',
                'required': ['name', 'shape', 'values'],
                'properties': {
                    'name': {'type': 'string'},
                    'shape': {
                        'type': 'array',
                        'items': {'type': 'integer', 'minimum': 1}
                    },
                    'values': {'type': 'array', 'items': {'type': 'number'}}
                }
            }
        }
    }
}


def save_checkpoint(path, parameters, config):
    """Write parameters and a config echo as a JSON checkpoint.

    :param str path: Output file
    :param list parameters: Parameters (name/value)
    :param dict config: Resolved configuration to echo
    """
    document = {
        'version': CHECKPOINT_VERSION,
        'config': config,
        'parameters': [
            {
                'name': p.name,
                'shape': list(p.shape),
                'values': [float(v) for v in p.value.reshape(-1)]
            }
            for p in parameters
        ]
    }
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(document, fh)


def load_checkpoint(path):
    """Read a JSON checkpoint.

    Return (config, {name: ndarray}).

    :param str path: Checkpoint file
    """
    try:
        with open(path, encoding='utf-8') as fh:
            document = json.load(fh)
    except (OSError, ValueError) as e:
        raise CheckpointError("Could not read checkpoint '%s': %s" % (path, e))

    try:
        jsonschema.validate(document, CHECKPOINT_SCHEMA)
    except jsonschema.ValidationError as e:
        raise CheckpointError(
            "Invalid checkpoint '%s': %s" % (path, e.message)
        )
    if document['version'] != CHECKPOINT_VERSION:
        raise CheckpointError(
            "Unknown checkpoint version %s in '%s'" %
            (document['version'], path)
        )

    arrays = {}
    for entry in document['parameters']:
        shape = tuple(entry['shape'])
        values = np.array(entry['values'], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise CheckpointError(
                "Parameter '%s' has %d values for shape %s" %
                (entry['name'], values.size, shape)
            )
        arrays[entry['name']] = values.reshape(shape)
    return document['config'], arrays


def assign_parameters(parameters, arrays):
    """Copy loaded arrays into parameters, checking names and shapes.

    :param list parameters: Target parameters
    :param dict arrays: {name: ndarray} from load_checkpoint
    """
    for parameter in parameters:
        if parameter.name not in arrays:
            raise CheckpointError(
                "Checkpoint has no parameter '%s'" % parameter.name
            )
        value = arrays[parameter.name]
        if value.shape != parameter.shape:
            raise CheckpointError(
                "Parameter '%s' has shape %s, expected %s" %
                (parameter.name, value.shape, parameter.shape)
            )
        parameter.value[...] = value
