import json

import numpy as np

import numerics as nx
from gait_errors import ConfigError, DatasetFormatError, ShapeError
from optimizer import AdamOptimizer
from seq2seq_gait import NO_ATTENTION, TEST, decode_sequence, encode
from skeleton_io import DIMENSIONS, TASKS, dimension_values

AP = 'AP'
SC = 'SC'
STRATEGIES = (AP, SC)

CONTEXT = 'context'
HIDDEN = 'hidden'
FEATURES = (CONTEXT, HIDDEN)

# encoding variants
AGE = 'AGE'
CAGE = 'CAGE'
H = 'H'

# sequences decoded per forward pass during extraction
EXTRACT_CHUNK = 256


class GaitEncoding:
    """GaitEncoding class

    Skeleton-level gait features of one sequence (f x W). The sequence-level
    vector is their row-major concatenation.
    """

    def __init__(self, identity, recording, seq_index, vectors, variant,
                 tasks, split=None, role=None, condition=None):
        """Constructor

        :param int identity: Identity label (None if unknown)
        :param int recording: Source recording
        :param int seq_index: Window number within the recording
        :param ndarray vectors: f x W skeleton-level vectors
        :param str variant: 'AGE', 'CAGE' or 'H'
        :param tuple tasks: Pretext tasks the features come from
        :param str split: Split of the source recording
        :param str role: Gallery/probe role of the source recording
        :param str condition: Condition tag of the source recording
        """
        self.identity = identity
        self.recording = recording
        self.seq_index = seq_index
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.variant = variant
        self.tasks = tuple(tasks)
        self.split = split
        self.role = role
        self.condition = condition

    @property
    def key(self):
        return (self.identity, self.recording, self.seq_index)

    @property
    def frames(self):
        return self.vectors.shape[0]

    @property
    def width(self):
        """Skeleton-level width."""
        return self.vectors.shape[1]

    @property
    def sequence_vector(self):
        return self.vectors.reshape(-1)

    def features(self, strategy):
        """Recognizer input rows: one per frame (AP) or one per sequence."""
        if strategy == AP:
            return self.vectors
        elif strategy == SC:
            return self.sequence_vector[None]
        raise ConfigError("Unknown strategy '%s'" % strategy)


def encoding_variant(feature, lambda_c):
    if feature == HIDDEN:
        return H
    return CAGE if lambda_c > 0 else AGE


def extract_encodings(model, sequences, feature=CONTEXT, variant=None):
    """Encode sequences with a trained model in test-mode decoding.

    Skeleton-level vectors are [c^X_t; c^Y_t; c^Z_t] for context features
    and [h^X_t; h^Y_t; h^Z_t] for encoder-state features.

    :param GaitModel model: Trained model of one pretext task
    :param list sequences: SkeletonSequences (unshuffled)
    :param str feature: 'context' or 'hidden'
    :param str variant: Encoding variant tag (default AGE/H)
    """
    if feature not in FEATURES:
        raise ConfigError("Unknown feature '%s'" % feature)
    if feature == CONTEXT and model.attention == NO_ATTENTION:
        raise ConfigError(
            "Context vectors are undefined without attention (task '%s')" %
            model.task
        )
    if variant is None:
        variant = H if feature == HIDDEN else AGE

    encodings = []
    for first in range(0, len(sequences), EXTRACT_CHUNK):
        chunk = sequences[first:first + EXTRACT_CHUNK]
        for sequence in chunk:
            if sequence.num_joints != model.num_joints:
                raise ShapeError(
                    "Sequence has %d joints, model expects %d" %
                    (sequence.num_joints, model.num_joints)
                )
            if sequence.length != model.sequence_length:
                raise ShapeError(
                    "Sequence has %d frames, model expects %d" %
                    (sequence.length, model.sequence_length)
                )
        per_dim = []
        for dim in DIMENSIONS:
            values = np.stack([dimension_values(s.frames, dim)
                               for s in chunk])
            encoded = encode(model[dim], values)
            if feature == HIDDEN:
                steps = encoded.states
            else:
                steps = decode_sequence(model[dim], encoded,
                                        phase=TEST).contexts
            # B x f x K
            per_dim.append(np.stack([s.value for s in steps], axis=1))
        vectors = np.concatenate(per_dim, axis=2)
        for sequence, sequence_vectors in zip(chunk, vectors):
            encodings.append(GaitEncoding(
                sequence.identity, sequence.recording, sequence.seq_index,
                sequence_vectors, variant, (model.task,), sequence.split,
                sequence.role, sequence.condition
            ))
    return encodings


def fuse_encodings(encodings):
    """Concatenate the encodings of one sequence from several tasks.

    Vectors are joined per skeleton in the canonical task order, whatever
    the input order.

    :param list encodings: GaitEncodings of the same sequence
    """
    if not encodings:
        raise ConfigError("Nothing to fuse")
    first = encodings[0]
    for encoding in encodings[1:]:
        if encoding.key != first.key:
            raise ConfigError("Cannot fuse encodings of %s and %s" %
                              (first.key, encoding.key))
        if encoding.frames != first.frames:
            raise ShapeError("Cannot fuse encodings of %d and %d frames" %
                             (first.frames, encoding.frames))
    ordered = sorted(encodings, key=lambda e: TASKS.index(e.tasks[0]))
    tasks = tuple(t for e in ordered for t in e.tasks)
    if len(set(tasks)) != len(tasks):
        raise ConfigError("Duplicate tasks in fusion: %s" % (tasks,))
    variants = []
    for encoding in ordered:
        if encoding.variant not in variants:
            variants.append(encoding.variant)
    return GaitEncoding(
        first.identity, first.recording, first.seq_index,
        np.concatenate([e.vectors for e in ordered], axis=1),
        '+'.join(variants), tasks, first.split, first.role, first.condition
    )


def fuse_encoding_sets(encoding_sets):
    """Fuse per-task encoding lists sequence by sequence.

    :param list encoding_sets: One list of GaitEncodings per task
    """
    if len(encoding_sets) == 1:
        return list(encoding_sets[0])
    indexed = [{e.key: e for e in encodings} for encodings in encoding_sets]
    keys = [e.key for e in encoding_sets[0]]
    for index in indexed[1:]:
        if set(index) != set(keys):
            raise ConfigError("Encoding sets cover different sequences")
    return [fuse_encodings([index[key] for index in indexed])
            for key in keys]


def write_encodings(path, encodings):
    """Write sequence-level encodings as JSON lines.

    :param str path: Output file
    :param list encodings: GaitEncodings
    """
    with open(path, 'w', encoding='utf-8') as fh:
        for e in encodings:
            fh.write(json.dumps({
                'id': None if e.identity is None else str(e.identity),
                'rec': e.recording,
                'seq_index': e.seq_index,
                'level': 'sequence',
                'variant': e.variant,
                'tasks': list(e.tasks),
                'frames': e.frames,
                'split': e.split,
                'role': e.role,
                'condition': e.condition,
                'vector': e.sequence_vector.tolist()
            }))
            fh.write('\n')


def read_encodings(path):
    """Read encodings written by write_encodings.

    :param str path: Encodings file
    """
    encodings = []
    try:
        fh = open(path, encoding='utf-8')
    except OSError as e:
        raise DatasetFormatError("Could not read encodings '%s': %s" %
                                 (path, e))
    with fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                vector = np.array(doc['vector'], dtype=np.float64)
                frames = int(doc['frames'])
                identity = doc['id']
                encodings.append(GaitEncoding(
                    None if identity is None else int(identity), doc['rec'],
                    doc['seq_index'], vector.reshape(frames, -1),
                    doc['variant'], doc['tasks'], doc.get('split'),
                    doc.get('role'), doc.get('condition')
                ))
            except (ValueError, KeyError, TypeError) as e:
                raise DatasetFormatError(
                    "Malformed encoding at line %d of '%s': %s" %
                    (line_number, path, e)
                )
    return encodings


class RecognitionNet:
    """RecognitionNet class

    One rectifier hidden layer followed by a softmax layer over C classes.
    Class c (1..C) is output index c-1. Inputs are standardized with the
    column mean and scale of the training rows.
    """

    def __init__(self, input_size, num_classes, hidden_size=256,
                 strategy=AP, rng=None):
        """Constructor

        :param int input_size: Input width (3K for AP, 3Kf for SC)
        :param int num_classes: Identity count C
        :param int hidden_size: Hidden width M
        :param str strategy: 'AP' or 'SC'
        :param Generator rng: Seeded numpy generator
        """
        if strategy not in STRATEGIES:
            raise ConfigError("Unknown strategy '%s'" % strategy)
        if rng is None:
            rng = np.random.default_rng(0)
        self.input_size = input_size
        self.num_classes = num_classes
        self.hidden_size = hidden_size
        self.strategy = strategy
        self.w1 = nx.uniform_parameter(
            'recognizer.w1', (input_size, hidden_size),
            1.0 / np.sqrt(input_size), rng
        )
        self.b1 = nx.zeros_parameter('recognizer.b1', (hidden_size,))
        self.w2 = nx.uniform_parameter(
            'recognizer.w2', (hidden_size, num_classes),
            1.0 / np.sqrt(hidden_size), rng
        )
        self.b2 = nx.zeros_parameter('recognizer.b2', (num_classes,))
        # input standardization, fixed by fit_standardization
        self.mean = nx.zeros_parameter('recognizer.mean', (input_size,))
        self.scale = nx.Parameter('recognizer.scale', np.ones(input_size))

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def state(self):
        """Trainable parameters plus the standardization, for checkpoints."""
        return self.parameters() + [self.mean, self.scale]

    def fit_standardization(self, rows):
        """Set mean and scale from training rows (N x input_size)."""
        rows = np.asarray(rows, dtype=np.float64)
        std = rows.std(axis=0)
        self.mean.value[...] = rows.mean(axis=0)
        self.scale.value[...] = np.where(std > 1e-8, std, 1.0)

    def logits(self, inputs):
        inputs = nx.as_tensor(inputs)
        if inputs.ndim != 2 or inputs.shape[1] != self.input_size:
            raise ShapeError(
                "Recognizer expects width %d, got shape %s" %
                (self.input_size, inputs.shape)
            )
        inputs = nx.mul(nx.sub(inputs, self.mean.value),
                        1.0 / self.scale.value)
        hidden = nx.relu(inputs @ self.w1 + self.b1)
        return hidden @ self.w2 + self.b2

    def probabilities(self, inputs):
        return nx.softmax(self.logits(nx.constant(inputs)), axis=1).value

    def describe(self):
        return {
            'input_size': self.input_size,
            'num_classes': self.num_classes,
            'hidden_size': self.hidden_size,
            'strategy': self.strategy
        }

    @classmethod
    def from_description(cls, description):
        return cls(description['input_size'], description['num_classes'],
                   description['hidden_size'], description['strategy'])


def recognizer_inputs(encodings, strategy):
    """Stack recognizer input rows and their identity labels."""
    rows = []
    labels = []
    for encoding in encodings:
        features = encoding.features(strategy)
        rows.append(features)
        labels += [encoding.identity] * features.shape[0]
    return np.concatenate(rows, axis=0), np.array(labels)


def train_recognizer(encodings, strategy=AP, hidden_size=256, epochs=200,
                     learning_rate=1e-3, seed=0, num_classes=None,
                     logger=None):
    """Train a recognition net on frozen encodings.

    Full-batch Adam on cross-entropy. Under AP every skeleton of a sequence
    carries the sequence label.

    Return (net, per-epoch losses).

    :param list encodings: Labelled GaitEncodings (training split)
    :param str strategy: 'AP' or 'SC'
    :param int hidden_size: Hidden width M
    :param int epochs: Training epochs
    :param float learning_rate: Adam step size
    :param int seed: Random seed
    :param int num_classes: Identity count C (default: largest label)
    :param Logger logger: Application logger
    """
    if not encodings:
        raise ConfigError("No encodings to train the recognizer on")
    inputs, labels = recognizer_inputs(encodings, strategy)
    if num_classes is None:
        num_classes = int(labels.max())
    if labels.min() < 1 or labels.max() > num_classes:
        raise ConfigError("Labels must lie in 1..%d, got %d..%d" %
                          (num_classes, labels.min(), labels.max()))

    net = RecognitionNet(inputs.shape[1], num_classes, hidden_size, strategy,
                         np.random.default_rng([seed, 7]))
    net.fit_standardization(inputs)
    parameters = net.parameters()
    optimizer = AdamOptimizer(parameters, learning_rate)
    features = nx.constant(inputs)
    targets = labels - 1

    history = []
    for epoch in range(epochs):
        loss = nx.cross_entropy(net.logits(features), targets)
        nx.backward(loss, parameters)
        optimizer.step()
        history.append(loss.item())
        if logger is not None and (epoch + 1) % 50 == 0:
            logger.info("recognizer epoch %d: loss=%.6f" %
                        (epoch + 1, loss.item()))
    return net, history


def predict_sequence(net, encoding, strategy=None):
    """Class distribution (length C) for one sequence.

    AP averages the per-skeleton softmax outputs, SC classifies the
    sequence-level vector.

    :param RecognitionNet net: Trained recognizer
    :param encoding: GaitEncoding, or skeleton-level vectors (f x W)
    :param str strategy: 'AP' or 'SC' (default: the net's strategy)
    """
    strategy = strategy or net.strategy
    if isinstance(encoding, GaitEncoding):
        rows = encoding.features(strategy)
    else:
        vectors = np.asarray(encoding, dtype=np.float64)
        if vectors.ndim == 1:
            vectors = vectors[None]
        rows = vectors if strategy == AP else vectors.reshape(1, -1)
    if rows.shape[1] != net.input_size:
        raise ShapeError(
            "Recognizer expects width %d for %s, got %d" %
            (net.input_size, strategy, rows.shape[1])
        )
    return net.probabilities(rows).mean(axis=0)
