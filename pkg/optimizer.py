import numpy as np

from gait_errors import ConfigError


class Optimizer:
    """Optimizer base class

    Updates a list of Parameters in place from their accumulated gradients,
    after clipping the global gradient norm.
    """

    def __init__(self, parameters, learning_rate, clip_norm=None):
        """Constructor

        :param list parameters: Parameters to update
        :param float learning_rate: Step size, must be positive
        :param float clip_norm: Global gradient norm limit (None disables)
        """
        if learning_rate <= 0:
            raise ConfigError(
                "learning rate must be positive, got %s" % learning_rate
            )
        self.parameters = list(parameters)
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm

    def clipped_gradients(self):
        grads = [p.grad for p in self.parameters]
        if self.clip_norm is None:
            return grads
        norm = np.sqrt(np.sum([np.sum(g ** 2) for g in grads]))
        if norm > self.clip_norm:
            scale = self.clip_norm / norm
            grads = [g * scale for g in grads]
        return grads

    def step(self):
        """Apply one update to all parameters."""
        raise NotImplementedError


class SgdOptimizer(Optimizer):
    """SgdOptimizer class

    Plain gradient descent.
    """

    def step(self):
        for parameter, grad in zip(self.parameters, self.clipped_gradients()):
            parameter.value -= self.learning_rate * grad


class AdamOptimizer(Optimizer):
    """AdamOptimizer class

    Adam with bias-corrected first and second moment estimates.
    """

    def __init__(self, parameters, learning_rate=5e-4, beta1=0.9,
                 beta2=0.999, epsilon=1e-8, clip_norm=5.0):
        """Constructor

        :param list parameters: Parameters to update
        :param float learning_rate: Step size
        :param float beta1: First moment decay
        :param float beta2: Second moment decay
        :param float epsilon: Denominator offset
        :param float clip_norm: Global gradient norm limit (None disables)
        """
        super(AdamOptimizer, self).__init__(
            parameters, learning_rate, clip_norm
        )
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.steps = 0
        self.first_moments = [np.zeros_like(p.value) for p in self.parameters]
        self.second_moments = [
            np.zeros_like(p.value) for p in self.parameters
        ]

    def step(self):
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps
        grads = self.clipped_gradients()
        for i, (parameter, grad) in enumerate(zip(self.parameters, grads)):
            m = self.first_moments[i]
            v = self.second_moments[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad ** 2
            m_hat = m / correction1
            v_hat = v / correction2
            parameter.value -= (
                self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
            )


def create_optimizer(name, parameters, learning_rate, beta1=0.9,
                     beta2=0.999, clip_norm=5.0):
    """Return an optimizer by name ('adam' or 'sgd').

    :param str name: Optimizer name
    :param list parameters: Parameters to update
    :param float learning_rate: Step size
    :param float beta1: Adam first moment decay
    :param float beta2: Adam second moment decay
    :param float clip_norm: Global gradient norm limit
    """
    if name == 'adam':
        return AdamOptimizer(parameters, learning_rate, beta1, beta2,
                             clip_norm=clip_norm)
    elif name == 'sgd':
        return SgdOptimizer(parameters, learning_rate, clip_norm)
    raise ConfigError("Unknown optimizer '%s'" % name)
