import numpy as np

import numerics as nx
from gait_errors import ConfigError

# largest model grad_check accepts
MAX_PARAMETERS = 10 ** 4


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def grad_check(parameters, loss_fn, epsilon=1e-5, tolerance=1e-4,
               exclude=()):
    """Compare analytic gradients with central finite differences.

    Return a report with the max relative error per parameter name and an
    overall 'passed' flag.

    :param list parameters: Model parameters
    :param func loss_fn: Builds a fresh graph and returns a scalar Tensor
    :param float epsilon: Finite difference step
    :param float tolerance: Max accepted relative error
    :param iterable exclude: Names of frozen parameters to leave out
    """
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive, got %s" % epsilon)
    if nx.parameter_count(parameters) > MAX_PARAMETERS:
        raise ConfigError(
            "grad_check supports at most %d parameters" % MAX_PARAMETERS
        )

    nx.backward(loss_fn(), parameters)
    analytic = {p.name: p.grad.copy() for p in parameters}

    errors = {}
    for parameter in parameters:
        if parameter.name in exclude:
            continue
        numeric = np.zeros_like(parameter.value)
        flat = parameter.value.reshape(-1)
        numeric_flat = numeric.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            upper = loss_fn().item()
            flat[i] = original - epsilon
            lower = loss_fn().item()
            flat[i] = original
            numeric_flat[i] = (upper - lower) / (2.0 * epsilon)
        errors[parameter.name] = float(
            relative_error(analytic[parameter.name], numeric).max()
        )

    return {
        'errors': errors,
        'max_error': max(errors.values()) if errors else 0.0,
        'passed': all(e < tolerance for e in errors.values())
    }
