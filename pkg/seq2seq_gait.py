import numpy as np

import numerics as nx
from contrastive import ProjectionHead
from gait_errors import ConfigError, ShapeError
from lstm_cell import LstmCellParams, lstm_step
from skeleton_io import DIMENSIONS, GROUND_TRUTH_TARGET

NO_ATTENTION = 'none'
BAS = 'bas'
MBAS = 'mbas'
LAS = 'las'
ATTENTION_MODES = (NO_ATTENTION, BAS, MBAS, LAS)

TRAIN = 'train'
TEST = 'test'


class GaitModelDim:
    """GaitModelDim class

    Encoder/decoder of one coordinate dimension: an encoder LSTM over the
    f x J slice, a decoder LSTM that reconstructs the target, the attention
    matrix W_att (K x 2K), the output matrix W_F (J x K) and the projection
    head used by the contrastive loss.
    """

    def __init__(self, dim, num_joints, hidden_size, attention=LAS,
                 window=2, sequence_length=6, rng=None, contrast_hidden=None):
        """Constructor

        :param str dim: 'X', 'Y' or 'Z'
        :param int num_joints: Joints J
        :param int hidden_size: Hidden width K
        :param str attention: 'none', 'bas', 'mbas' or 'las'
        :param int window: Locality window D (sigma = D/2)
        :param int sequence_length: Sequence length f
        :param Generator rng: Seeded numpy generator
        :param int contrast_hidden: Projection hidden width H (default fK/2)
        """
        if dim not in DIMENSIONS:
            raise ConfigError("Unknown dimension '%s'" % dim)
        if attention not in ATTENTION_MODES:
            raise ConfigError("Unknown attention mode '%s'" % attention)
        if window < 1:
            raise ConfigError("window must be >= 1, got %s" % window)
        if rng is None:
            rng = np.random.default_rng(0)

        self.dim = dim
        self.num_joints = num_joints
        self.hidden_size = hidden_size
        self.attention = attention
        self.window = window
        self.sigma = window / 2.0
        self.sequence_length = sequence_length

        decoder_input = num_joints
        if attention != NO_ATTENTION:
            # input feeding: x_{t-1} followed by the attentional state
            decoder_input += hidden_size

        bound = 1.0 / np.sqrt(hidden_size)
        self.encoder = LstmCellParams('%s.encoder' % dim, num_joints,
                                      hidden_size, rng)
        self.decoder = LstmCellParams('%s.decoder' % dim, decoder_input,
                                      hidden_size, rng)
        self.w_att = None
        if attention != NO_ATTENTION:
            self.w_att = nx.uniform_parameter(
                '%s.w_att' % dim, (hidden_size, 2 * hidden_size), bound, rng
            )
        self.w_f = nx.uniform_parameter(
            '%s.w_f' % dim, (num_joints, hidden_size), bound, rng
        )

        representation = sequence_length * hidden_size
        if contrast_hidden is None:
            contrast_hidden = max(representation // 2, 1)
        self.contrast_hidden = contrast_hidden
        self.projection = ProjectionHead(
            '%s.projection' % dim, representation, contrast_hidden,
            hidden_size, rng
        )

    def parameters(self):
        params = self.encoder.parameters() + self.decoder.parameters()
        if self.w_att is not None:
            params.append(self.w_att)
        params.append(self.w_f)
        return params + self.projection.parameters()

    def masks(self):
        return locality_masks(self.sequence_length, self.window)


class GaitModel:
    """GaitModel class

    Three independent per-dimension models trained on one pretext task.
    """

    def __init__(self, task, num_joints, hidden_size, attention, window,
                 sequence_length, seed=0, contrast_hidden=None,
                 task_index=0):
        """Constructor

        :param str task: Pretext task
        :param int num_joints: Joints J
        :param int hidden_size: Hidden width K
        :param str attention: Attention mode of this task
        :param int window: Locality window D
        :param int sequence_length: Sequence length f
        :param int seed: Run seed
        :param int contrast_hidden: Projection hidden width H
        :param int task_index: Position of the task in the run
        """
        self.task = task
        self.attention = attention
        self.sequence_length = sequence_length
        self.num_joints = num_joints
        self.dims = {}
        for d, dim in enumerate(DIMENSIONS):
            rng = np.random.default_rng([seed, task_index, d])
            self.dims[dim] = GaitModelDim(
                dim, num_joints, hidden_size, attention, window,
                sequence_length, rng, contrast_hidden
            )

    def __getitem__(self, dim):
        return self.dims[dim]

    def parameters(self):
        params = []
        for dim in DIMENSIONS:
            params += self.dims[dim].parameters()
        return params

    def describe(self):
        """Return the architecture fields echoed into checkpoints."""
        model = self.dims['X']
        return {
            'task': self.task,
            'attention': self.attention,
            'num_joints': self.num_joints,
            'hidden_size': model.hidden_size,
            'window': model.window,
            'sequence_length': self.sequence_length,
            'contrast_hidden': model.contrast_hidden
        }

    @classmethod
    def from_description(cls, description):
        return cls(
            description['task'], description['num_joints'],
            description['hidden_size'], description['attention'],
            description['window'], description['sequence_length'],
            contrast_hidden=description.get('contrast_hidden')
        )


class EncoderOutput:
    """Encoded gait states h_1..h_f (each B x K) plus the final LSTM state."""

    def __init__(self, states, final_state):
        self.states = states
        self.final_state = final_state


class DecodeTrace:
    """DecodeTrace class

    Everything computed while decoding one batch: encoded and decoded
    states, alignment scores (B x f per step), their masked version,
    context vectors, attentional states and output skeletons.
    """

    def __init__(self, attention, masks=None, encoded=None, decoded=None,
                 alignments=None, masked_alignments=None, contexts=None,
                 attentional=None, outputs=None):
        """Constructor

        :param str attention: Attention mode
        :param ndarray masks: Locality masks, one row per decoding step
        :param list encoded: Encoded states h_t
        :param list decoded: Decoded states
        :param list alignments: Alignment scores a_t
        :param list masked_alignments: l_t * a_t (mbas/las)
        :param list contexts: Context vectors c_t
        :param list attentional: Attentional states
        :param list outputs: Output skeletons
        """
        self.attention = attention
        self.masks = masks
        self.encoded = encoded or []
        self.decoded = decoded or []
        self.alignments = alignments or []
        self.masked_alignments = masked_alignments or []
        self.contexts = contexts or []
        self.attentional = attentional or []
        self.outputs = outputs or []

    def output_tensor(self):
        """Outputs stacked to B x f x J."""
        return nx.stack(self.outputs, axis=1)

    def alignment_matrix(self):
        """Alignment scores as a B x f x f array (rows = decoding steps)."""
        return np.stack([a.value for a in self.alignments], axis=1)

    def representation(self):
        """Sequence-level representation [v_1; ...; v_f] (B x fK).

        v_t are the context vectors, or the encoded states when decoding
        ran without attention.
        """
        steps = self.contexts if self.contexts else self.encoded
        return nx.concat(steps, axis=1)


def _batch_values(values, num_joints, sequence_length):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[None]
    if values.ndim != 3 or values.shape[1:] != (sequence_length, num_joints):
        raise ShapeError(
            "Expected slices of shape (%d, %d), got %s" %
            (sequence_length, num_joints, values.shape)
        )
    return values


def encode(model, values):
    """Run the encoder LSTM over a dimension slice.

    :param GaitModelDim model: Dimension model
    :param ndarray values: f x J slice or B x f x J batch
    """
    values = _batch_values(values, model.num_joints, model.sequence_length)
    state = model.encoder.zero_state(values.shape[0])
    states = []
    for t in range(values.shape[1]):
        state = lstm_step(model.encoder, nx.constant(values[:, t, :]), state)
        states.append(state[0])
    return EncoderOutput(states, state)


def locality_mask(t, f, window):
    """Gaussian locality weights l_t(j), j = 1..f.

    Centered at p_t = f - t + 1 with sigma = D/2; evaluated at every
    position, the window only sets the width.

    :param int t: Decoding step (1-based)
    :param int f: Sequence length
    :param int window: Locality window D
    """
    if not 1 <= t <= f:
        raise ConfigError("step t=%s outside 1..%d" % (t, f))
    if window < 1:
        raise ConfigError("window must be >= 1, got %s" % window)
    sigma = window / 2.0
    center = f - t + 1
    j = np.arange(1, f + 1)
    return np.exp(-((j - center) ** 2) / (2.0 * sigma ** 2))


def locality_masks(f, window):
    """All locality masks as an f x f array (row t-1 holds l_t)."""
    return np.stack([locality_mask(t, f, window) for t in range(1, f + 1)])


def decode_sequence(model, encoded, targets=None,
                    aux_rule=GROUND_TRUTH_TARGET, phase=TRAIN):
    """Decode a batch of encoded sequences.

    Step 1 starts from the final encoder state and the all-zero skeleton.
    Later steps feed back the previous target skeleton when training with
    the ground truth rule, otherwise the previous output.

    :param GaitModelDim model: Dimension model
    :param EncoderOutput encoded: Output of encode()
    :param ndarray targets: Target slices (B x f x J), needed for teacher
                            forcing
    :param str aux_rule: GROUND_TRUTH_TARGET or MODEL_OUTPUT
    :param str phase: 'train' or 'test'
    """
    f = len(encoded.states)
    if f != model.sequence_length:
        raise ShapeError("Encoded %d states, model expects %d" %
                         (f, model.sequence_length))
    batch = encoded.states[0].shape[0]
    teacher_forcing = phase == TRAIN and aux_rule == GROUND_TRUTH_TARGET
    if teacher_forcing:
        if targets is None:
            raise ConfigError("Teacher forcing needs target slices")
        targets = _batch_values(targets, model.num_joints, f)
        if targets.shape[0] != batch:
            raise ShapeError("Got %d targets for %d sequences" %
                             (targets.shape[0], batch))

    k = model.hidden_size
    trace = DecodeTrace(model.attention, model.masks(), encoded.states)
    attended = model.attention != NO_ATTENTION
    if attended:
        memory = nx.stack(encoded.states, axis=1)
        w_att_t = nx.transpose(model.w_att)
    w_f_t = nx.transpose(model.w_f)

    state = encoded.final_state
    previous = nx.constant(np.zeros((batch, model.num_joints)))
    attentional = nx.constant(np.zeros((batch, k)))
    for t in range(f):
        if attended:
            feed = nx.concat([previous, attentional], axis=1)
        else:
            feed = previous
        state = lstm_step(model.decoder, feed, state)
        decoded = state[0]
        trace.decoded.append(decoded)

        if attended:
            scores = nx.sum(memory * nx.reshape(decoded, (batch, 1, k)),
                            axis=2)
            alignment = nx.softmax(scores, axis=1)
            trace.alignments.append(alignment)
            weights = alignment
            if model.attention in (MBAS, LAS):
                masked = alignment * trace.masks[t]
                trace.masked_alignments.append(masked)
                if model.attention == MBAS:
                    weights = masked
            context = nx.sum(memory * nx.reshape(weights, (batch, f, 1)),
                             axis=1)
            trace.contexts.append(context)
            attentional = nx.tanh(
                nx.concat([context, decoded], axis=1) @ w_att_t
            )
            trace.attentional.append(attentional)
            output = attentional @ w_f_t
        else:
            output = decoded @ w_f_t
        trace.outputs.append(output)

        if teacher_forcing:
            previous = nx.constant(targets[:, t, :])
        else:
            previous = output

    return trace


def reconstruction_loss(trace, targets):
    """Squared reconstruction error summed over frames and joints.

    Averaged over the batch; equals the plain sum for one sequence.

    :param DecodeTrace trace: Decode trace
    :param ndarray targets: f x J or B x f x J target slices
    """
    outputs = trace.output_tensor()
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 2:
        targets = targets[None]
    if targets.shape != outputs.shape:
        raise ShapeError("Output shape %s does not match target shape %s" %
                         (outputs.shape, targets.shape))
    return nx.sum_squares(outputs - targets) * (1.0 / outputs.shape[0])


def alignment_loss(trace, target=None):
    """Locality alignment loss sum_{t,j} (a_t(j) - l_t(j) a_t(j))^2.

    The masked target is held constant, so the gradient only moves a.
    Averaged over the batch.

    :param DecodeTrace trace: Decode trace of a las model
    :param ndarray target: Fixed masked target (B x f x f); computed from
                           the trace when omitted
    """
    if trace.attention != LAS:
        raise ConfigError(
            "alignment loss needs locality-aware attention, got '%s'" %
            trace.attention
        )
    alignments = nx.stack(trace.alignments, axis=1)
    if target is None:
        masks = np.asarray(trace.masks)[:len(trace.alignments)]
        target = alignments.value * masks
    target = nx.constant(target)
    if target.shape != alignments.shape:
        raise ShapeError("Alignment target shape %s, expected %s" %
                         (target.shape, alignments.shape))
    return nx.sum_squares(alignments - target) * \
        (1.0 / alignments.shape[0])


class LossWeights:
    """LossWeights class

    Weights of the reconstruction, alignment and contrastive terms and of
    the L2 penalty.
    """

    def __init__(self, lambda_s=1.0, lambda_a=0.5, lambda_c=0.5, beta=1e-4):
        for name, value in (('lambda_s', lambda_s), ('lambda_a', lambda_a),
                            ('lambda_c', lambda_c), ('beta', beta)):
            if value < 0:
                raise ConfigError("%s must be >= 0, got %s" % (name, value))
        self.lambda_s = lambda_s
        self.lambda_a = lambda_a
        self.lambda_c = lambda_c
        self.beta = beta


def total_loss(l_s, l_a, l_c, weights, parameters):
    """lambda_S L_S + lambda_A L_A + lambda_C L_C + beta ||Theta||^2.

    Missing terms (None) count as zero.

    :param Tensor l_s: Reconstruction loss
    :param Tensor l_a: Alignment loss or None
    :param Tensor l_c: Contrastive loss or None
    :param LossWeights weights: Loss weights
    :param list parameters: All model parameters Theta
    """
    total = nx.constant(0.0)
    for term, weight in ((l_s, weights.lambda_s), (l_a, weights.lambda_a),
                         (l_c, weights.lambda_c)):
        if term is not None and weight != 0:
            total = total + term * weight
    if weights.beta != 0:
        total = total + nx.l2_penalty(parameters) * weights.beta
    return total


def window_mass(alignment, window):
    """Mean attention mass inside the locality window.

    Averages sum_{|j - p_t| <= D} a_t(j) over the decoding steps.

    :param ndarray alignment: f x f (or B x f x f) alignment scores
    :param int window: Locality window D
    """
    alignment = np.asarray(alignment)
    f = alignment.shape[-1]
    t = np.arange(1, f + 1)[:, None]
    j = np.arange(1, f + 1)[None, :]
    inside = np.abs(j - (f - t + 1)) <= window
    return float((alignment * inside).sum(axis=-1).mean())
