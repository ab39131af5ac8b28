import numpy as np

import numerics as nx
from gait_errors import ShapeError


class LstmCellParams:
    """LstmCellParams class

    Gate weights of one LSTM cell with input size D_in and hidden size K.
    Gates are packed in the order input, forget, output, candidate, so every
    weight has 4K columns.
    """

    GATES = ('input', 'forget', 'output', 'candidate')

    def __init__(self, name, input_size, hidden_size, rng):
        """Constructor

        Weights are drawn from uniform(-1/sqrt(K), 1/sqrt(K)), biases start at
        zero except for the forget gate bias, which starts at +1.

        :param str name: Parameter name prefix (e.g. 'X.encoder')
        :param int input_size: Input width D_in
        :param int hidden_size: Hidden width K
        :param Generator rng: Seeded numpy generator
        """
        self.name = name
        self.input_size = input_size
        self.hidden_size = hidden_size

        bound = 1.0 / np.sqrt(hidden_size)
        self.w_input = nx.uniform_parameter(
            '%s.w_input' % name, (input_size, 4 * hidden_size), bound, rng
        )
        self.w_hidden = nx.uniform_parameter(
            '%s.w_hidden' % name, (hidden_size, 4 * hidden_size), bound, rng
        )
        bias = np.zeros(4 * hidden_size)
        bias[hidden_size:2 * hidden_size] = 1.0
        self.bias = nx.Parameter('%s.bias' % name, bias)

    def parameters(self):
        return [self.w_input, self.w_hidden, self.bias]

    def zero_state(self, batch_size):
        zeros = np.zeros((batch_size, self.hidden_size))
        return nx.constant(zeros), nx.constant(zeros)


def lstm_step(params, inputs, state):
    """Advance an LSTM cell by one step.

    :param LstmCellParams params: Cell parameters
    :param Tensor inputs: Input batch (B x D_in)
    :param tuple state: (hidden, cell), each B x K
    """
    inputs = nx.as_tensor(inputs)
    hidden, cell = state
    if inputs.ndim != 2 or inputs.shape[1] != params.input_size:
        raise ShapeError(
            "LSTM '%s' expects input width %d, got shape %s" %
            (params.name, params.input_size, inputs.shape)
        )
    k = params.hidden_size
    if hidden.shape != (inputs.shape[0], k) or cell.shape != hidden.shape:
        raise ShapeError(
            "LSTM '%s' state shape mismatch: %s / %s" %
            (params.name, hidden.shape, cell.shape)
        )

    gates = inputs @ params.w_input + hidden @ params.w_hidden + params.bias
    input_gate = nx.sigmoid(gates[:, 0:k])
    forget_gate = nx.sigmoid(gates[:, k:2 * k])
    output_gate = nx.sigmoid(gates[:, 2 * k:3 * k])
    candidate = nx.tanh(gates[:, 3 * k:4 * k])

    new_cell = forget_gate * cell + input_gate * candidate
    new_hidden = output_gate * nx.tanh(new_cell)
    return new_hidden, new_cell
