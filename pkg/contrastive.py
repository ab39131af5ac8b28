import numpy as np

import numerics as nx
from gait_errors import ConfigError, ShapeError

# lower bound of projection norms inside the loss
NORM_EPS = 1e-8


class ProjectionHead:
    """ProjectionHead class

    Two-layer perceptron z = W2 relu(W1 V) mapping a sequence-level
    representation (f*K) into the contrasting space (K).
    """

    def __init__(self, name, input_size, hidden_size, output_size, rng):
        """Constructor

        :param str name: Parameter name prefix (e.g. 'X.projection')
        :param int input_size: Representation width f*K
        :param int hidden_size: Hidden width H
        :param int output_size: Output width K
        :param Generator rng: Seeded numpy generator
        """
        self.name = name
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.output_size = output_size
        self.w1 = nx.uniform_parameter(
            '%s.w1' % name, (hidden_size, input_size),
            1.0 / np.sqrt(input_size), rng
        )
        self.w2 = nx.uniform_parameter(
            '%s.w2' % name, (output_size, hidden_size),
            1.0 / np.sqrt(hidden_size), rng
        )

    def parameters(self):
        return [self.w1, self.w2]


def project(head, representations):
    """Map representations (B x fK, or one vector) to the contrasting space.

    :param ProjectionHead head: Projection head
    :param Tensor representations: Sequence-level representations V
    """
    representations = nx.as_tensor(representations)
    single = representations.ndim == 1
    if single:
        representations = nx.reshape(representations,
                                     (1, representations.shape[0]))
    if representations.shape[1] != head.input_size:
        raise ShapeError(
            "Projection '%s' expects width %d, got %d" %
            (head.name, head.input_size, representations.shape[1])
        )
    hidden = nx.relu(representations @ nx.transpose(head.w1))
    z = hidden @ nx.transpose(head.w2)
    if single:
        z = nx.reshape(z, (head.output_size,))
    return z


def cosine_sim(z_i, z_j):
    """Cosine similarity of two nonzero vectors as a float."""
    return nx.cosine_similarity(nx.constant(z_i), nx.constant(z_j)).item()


def contrast_representations(z):
    """Arrange the projections of n ordered sequences for the contrast.

    Rows 0..n-2 hold z(V_1..V_{n-1}) and rows n-1..2n-3 hold
    z(V_2..V_n), so row k and row k+n-1 are an adjacent (positive) pair.

    :param Tensor z: Projections of the batch (n x K)
    """
    z = nx.as_tensor(z)
    n = z.shape[0]
    if n < 2:
        raise ConfigError("A contrast batch needs n >= 2, got %d" % n)
    return nx.concat([z[0:n - 1], z[1:n]], axis=0)


def lcl_loss(representations, temperature):
    """Locality-aware contrastive loss over 2n-2 representations.

    Each row is pulled toward its adjacent partner (row i and row
    i + n - 1) and pushed from all other rows, duplicates included. Row
    norms are clamped to NORM_EPS, so a zero projection (all ReLU units
    dead) contributes similarity 0 instead of failing.

    :param Tensor representations: Rows from contrast_representations
    :param float temperature: Softmax temperature tau
    """
    if temperature <= 0:
        raise ConfigError("temperature must be positive, got %s" %
                          temperature)
    representations = nx.as_tensor(representations)
    rows = representations.shape[0]
    if rows < 2 or rows % 2 != 0:
        raise ConfigError(
            "lcl_loss needs 2n-2 representations with n >= 2, got %d" % rows
        )
    half = rows // 2

    similarity = nx.cosine_similarity_matrix(representations, eps=NORM_EPS)
    log_p = nx.log_softmax(similarity * (1.0 / temperature), axis=1,
                           mask=~np.eye(rows, dtype=bool))
    partners = (np.arange(rows) + half) % rows
    positives = log_p[(np.arange(rows), partners)]
    return nx.mul(nx.mean(positives), -1.0)


class ContrastBatch:
    """ContrastBatch class

    n sequences of one identity and recording, in temporal order, spaced
    by the contrasting interval.
    """

    def __init__(self, sequences, interval=1, temperature=0.1,
                 complete=True):
        """Constructor

        :param list sequences: SkeletonSequences in temporal order
        :param int interval: seq_index gap between batch members
        :param float temperature: Softmax temperature tau
        :param bool complete: False for a remainder shorter than n
        """
        self.sequences = list(sequences)
        self.interval = interval
        self.temperature = temperature
        self.complete = complete

    def __len__(self):
        return len(self.sequences)

    @property
    def identity(self):
        return self.sequences[0].identity


def make_batches(sequences, identity, n, interval=1, temperature=0.1,
                 drop_remainder=True, logger=None):
    """Partition the timeline of one identity into contrast batches.

    Sequences are chained per recording by seq_index modulo ``interval``
    and cut into batches of n without shuffling. Short remainders are
    dropped, or returned as incomplete batches when ``drop_remainder`` is
    False.

    :param list sequences: SkeletonSequences (any identities)
    :param int identity: Identity label
    :param int n: Batch size
    :param int interval: seq_index gap between batch members
    :param float temperature: Softmax temperature tau
    :param bool drop_remainder: Drop short remainders
    :param Logger logger: Logger for skipped identities
    """
    if n < 2:
        raise ConfigError("batch_size must be >= 2, got %s" % n)
    if interval < 1:
        raise ConfigError("interval must be >= 1, got %s" % interval)

    recordings = {}
    for sequence in sequences:
        if sequence.identity == identity:
            recordings.setdefault(sequence.recording, []).append(sequence)

    batches = []
    for rec in sorted(recordings, key=lambda r: (r is None, r)):
        timeline = sorted(recordings[rec], key=lambda s: s.seq_index)
        for residue in range(interval):
            chain = [s for s in timeline if s.seq_index % interval == residue]
            for start in range(0, len(chain), n):
                members = chain[start:start + n]
                complete = len(members) == n
                if complete or not drop_remainder:
                    batches.append(ContrastBatch(
                        members, interval, temperature, complete
                    ))

    if logger is not None and not any(b.complete for b in batches):
        logger.warning(
            "Identity %s has fewer than %d sequences at interval %d, no "
            "contrast batch" % (identity, n, interval)
        )
    return batches
