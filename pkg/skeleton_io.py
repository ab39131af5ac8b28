import json
import os

import jsonschema
import numpy as np

from gait_errors import ConfigError, DatasetFormatError, \
    InsufficientFramesError, ShapeError

MANIFEST_VERSION = 1

DIMENSIONS = ('X', 'Y', 'Z')

# pretext tasks, in canonical fusion order
REVERSE = 'reverse'
PREDICTION = 'prediction'
HALF_PREDICTION = 'half_prediction'
SORTING = 'sorting'
PLAIN = 'plain'
TASKS = (REVERSE, PREDICTION, HALF_PREDICTION, SORTING, PLAIN)

# auxiliary decoder input during training
GROUND_TRUTH_TARGET = 'ground_truth_target'
MODEL_OUTPUT = 'model_output'

AUX_RULES = {
    REVERSE: GROUND_TRUTH_TARGET,
    PLAIN: GROUND_TRUTH_TARGET,
    PREDICTION: MODEL_OUTPUT,
    HALF_PREDICTION: MODEL_OUTPUT,
    SORTING: MODEL_OUTPUT
}

MANIFEST_SCHEMA = {
    'type': 'object',
    'required': ['num_joints', 'identities', 'recordings'],
    'properties': {
        'version': {'type': 'integer'},
        'num_joints': {'type': 'integer', 'minimum': 2},
        'sequence_length': {'type': ['integer', 'null'], 'minimum': 1},
        'center_joint': {'type': ['integer', 'null'], 'minimum': 0},
        'identities': {
            'type': 'array',
            'items': {
                'type': 'object',
                'required': ['label', 'recordings'],
                'properties': {
                    'label': {'type': 'string'},
                    'recordings': {'type': 'integer', 'minimum': 0}
                }
            }
        },
        'recordings': {
            'type': 'array',
            'items': {
                'type': 'object',
                'required': ['file', 'id', 'rec'],
                'properties': {
                    'file': {'type': 'string'},
                    'id': {'type': 'string'},
                    'rec': {'type': 'integer'},
                    'split': {'enum': ['train', 'test']},
                    'role': {'enum': ['gallery', 'probe', None]},
                    'condition': {'type': ['string', 'null']}
                }
            }
        }
    }
}


class Recording:
    """Recording class

    One raw skeleton recording (T x J x 3, meters) of an identity, with its
    split assignment and optional gallery/probe role and condition tag.
    """

    def __init__(self, identity, rec, frames, split='train', role=None,
                 condition=None):
        """Constructor

        :param int identity: Identity label (1..C)
        :param int rec: Recording number within the identity
        :param ndarray frames: T x J x 3 coordinates
        :param str split: 'train' or 'test'
        :param str role: 'gallery', 'probe' or None
        :param str condition: Optional condition tag (e.g. 'nm')
        """
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise ShapeError(
                "Recording frames must be T x J x 3, got %s" % (frames.shape,)
            )
        if frames.shape[1] < 2:
            raise ShapeError("A skeleton needs at least 2 joints")
        if not np.all(np.isfinite(frames)):
            raise DatasetFormatError(
                "Recording id %s rec %s has non-finite coordinates" %
                (identity, rec)
            )
        self.identity = identity
        self.rec = rec
        self.frames = frames
        self.split = split
        self.role = role
        self.condition = condition

    @property
    def name(self):
        return "id %s rec %s" % (self.identity, self.rec)

    @property
    def key(self):
        return (self.identity, self.rec)

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def num_joints(self):
        return self.frames.shape[1]

    def prepared_frames(self, center_joint=None):
        """Return frames, optionally centered at a root joint per frame."""
        if center_joint is None:
            return self.frames
        if not 0 <= center_joint < self.num_joints:
            raise ConfigError(
                "center joint %d out of range for %d joints" %
                (center_joint, self.num_joints)
            )
        return self.frames - self.frames[:, center_joint:center_joint + 1, :]

    def trimmed_frames(self, head_tail_discard, center_joint=None):
        frames = self.prepared_frames(center_joint)
        return frames[head_tail_discard:self.num_frames - head_tail_discard]


class SkeletonSequence:
    """SkeletonSequence class

    Window of f consecutive skeleton frames cut from a recording.
    """

    def __init__(self, frames, identity=None, seq_index=0, recording=None,
                 start=0, split=None, role=None, condition=None):
        """Constructor

        :param ndarray frames: f x J x 3 coordinates
        :param int identity: Identity label (None at inference)
        :param int seq_index: Window number within the source recording
        :param int recording: Source recording number
        :param int start: First frame within the trimmed recording
        :param str split: Split of the source recording
        :param str role: Gallery/probe role of the source recording
        :param str condition: Condition tag of the source recording
        """
        self.frames = np.asarray(frames, dtype=np.float64)
        self.identity = identity
        self.seq_index = seq_index
        self.recording = recording
        self.start = start
        self.split = split
        self.role = role
        self.condition = condition

    @property
    def length(self):
        return self.frames.shape[0]

    @property
    def num_joints(self):
        return self.frames.shape[1]

    @property
    def key(self):
        return (self.identity, self.recording, self.seq_index)

    def with_frames(self, frames):
        """Return a copy carrying other frames but the same provenance."""
        return SkeletonSequence(
            frames, self.identity, self.seq_index, self.recording,
            self.start, self.split, self.role, self.condition
        )

    def dimension_slice(self, dim):
        return DimensionSlice(dim, dimension_values(self.frames, dim))


class DimensionSlice:
    """DimensionSlice class

    Coordinates of one dimension (X, Y or Z) of a sequence: f x J.
    """

    def __init__(self, dim, values):
        if dim not in DIMENSIONS:
            raise ConfigError("Unknown dimension '%s'" % dim)
        self.dim = dim
        self.values = np.asarray(values, dtype=np.float64)


def dimension_values(frames, dim):
    """Return the ... x J matrix of one coordinate dimension.

    :param ndarray frames: ... x J x 3 coordinates
    :param str dim: 'X', 'Y' or 'Z'
    """
    return np.asarray(frames)[..., DIMENSIONS.index(dim)]


class PretextSample:
    """PretextSample class

    Input/target pair of one self-supervised training instance.
    """

    skipped = False

    def __init__(self, input, target, task, aux_rule, shuffle_indices=None):
        self.input = input
        self.target = target
        self.task = task
        self.aux_rule = aux_rule
        self.shuffle_indices = shuffle_indices


class PretextSkip:
    """PretextSkip class

    Result of build_pretext for a window that cannot form a sample.
    """

    skipped = True

    def __init__(self, task, sequence, reason):
        self.task = task
        self.sequence = sequence
        self.reason = reason


def split_recording(recording, f, head_tail_discard=10, step=None,
                    center_joint=None):
    """Cut a recording into overlapping windows of length f.

    The first and last ``head_tail_discard`` frames are dropped, then windows
    start every ``step`` frames (default f/2) within the retained frames.

    :param Recording recording: Source recording
    :param int f: Window length
    :param int head_tail_discard: Frames dropped at each end
    :param int step: Window step (default f // 2)
    :param int center_joint: Optional root joint for centering
    """
    if step is None:
        step = max(f // 2, 1)
    if step < 1:
        raise ConfigError("step must be >= 1, got %s" % step)
    if f < 1:
        raise ConfigError("sequence length must be >= 1, got %s" % f)

    frames = recording.trimmed_frames(head_tail_discard, center_joint)
    retained = frames.shape[0]
    if retained < f:
        raise InsufficientFramesError(
            "Recording %s has insufficient frames: %d retained after "
            "discarding %d at each end, need %d" %
            (recording.name, max(retained, 0), head_tail_discard, f)
        )

    sequences = []
    for seq_index, start in enumerate(range(0, retained - f + 1, step)):
        sequences.append(SkeletonSequence(
            frames[start:start + f], recording.identity, seq_index,
            recording.rec, start, recording.split, recording.role,
            recording.condition
        ))
    return sequences


def build_pretext(task, sequence, context=None, rng=None):
    """Build the input/target pair of a pretext task for a sequence.

    Return a PretextSample, or a PretextSkip if the source recording has no
    future frames left for a prediction target.

    :param str task: One of TASKS
    :param SkeletonSequence sequence: Window S
    :param ndarray context: Trimmed frames of the source recording
    :param Generator rng: Seeded generator (required for sorting)
    """
    f = sequence.length
    frames = sequence.frames

    if task == REVERSE:
        return PretextSample(sequence, sequence.with_frames(frames[::-1]),
                             task, AUX_RULES[task])

    elif task == PLAIN:
        return PretextSample(sequence, sequence, task, AUX_RULES[task])

    elif task in (PREDICTION, HALF_PREDICTION):
        if context is None:
            raise ConfigError("Prediction needs the source recording frames")
        if task == HALF_PREDICTION:
            if f % 2 != 0:
                raise ConfigError(
                    "half prediction needs an even sequence length, got %d" % f
                )
            offset = f // 2
        else:
            offset = f
        first = sequence.start + offset
        if first + f > context.shape[0]:
            return PretextSkip(
                task, sequence,
                "window %d of %s needs frames up to %d, recording has %d" %
                (sequence.seq_index, sequence.recording, first + f,
                 context.shape[0])
            )
        target = sequence.with_frames(context[first:first + f])
        return PretextSample(sequence, target, task, AUX_RULES[task])

    elif task == SORTING:
        if rng is None:
            raise ConfigError("Sorting needs a random generator")
        shuffle_indices = rng.permutation(f)
        return PretextSample(
            sequence.with_frames(frames[shuffle_indices]), sequence, task,
            AUX_RULES[task], shuffle_indices
        )

    raise ConfigError("Unknown pretext task '%s'" % task)


class GaitDataset:
    """GaitDataset class

    Recordings of C identities plus the manifest metadata.
    """

    def __init__(self, num_joints, recordings, sequence_length=None,
                 center_joint=None):
        """Constructor

        :param int num_joints: Joints per skeleton J
        :param list recordings: Recordings in manifest order
        :param int sequence_length: Preferred window length f
        :param int center_joint: Root joint used for centering (or None)
        """
        self.num_joints = num_joints
        self.recordings = list(recordings)
        self.sequence_length = sequence_length
        self.center_joint = center_joint

        for recording in self.recordings:
            if recording.num_joints != num_joints:
                raise ShapeError(
                    "Recording %s has %d joints, dataset has %d" %
                    (recording.name, recording.num_joints, num_joints)
                )
        labels = self.identities()
        if labels != list(range(1, len(labels) + 1)):
            raise DatasetFormatError(
                "Identity labels must be contiguous 1..C, got %s" % labels
            )

    def identities(self):
        return sorted(set(r.identity for r in self.recordings))

    def recordings_in(self, split=None):
        return [r for r in self.recordings
                if split is None or r.split == split]

    def recording(self, identity, rec):
        for recording in self.recordings:
            if recording.key == (identity, rec):
                return recording
        return None

    def sequences(self, f, head_tail_discard=10, step=None, split=None,
                  logger=None):
        """Split all recordings of a split into sequences.

        Recordings that are too short are skipped with a warning.

        :param int f: Window length
        :param int head_tail_discard: Frames dropped at each end
        :param int step: Window step (default f // 2)
        :param str split: 'train', 'test' or None for all
        :param Logger logger: Logger for skipped recordings
        """
        sequences = []
        for recording in self.recordings_in(split):
            try:
                sequences.extend(split_recording(
                    recording, f, head_tail_discard, step, self.center_joint
                ))
            except InsufficientFramesError as e:
                if logger is not None:
                    logger.warning("Skipping recording: %s" % e)
        return sequences

    def contexts(self, head_tail_discard=10):
        """Return {(identity, rec): trimmed frames} for pretext targets."""
        return {
            r.key: r.trimmed_frames(head_tail_discard, self.center_joint)
            for r in self.recordings
        }

    def manifest(self, recordings_file):
        """Return the manifest document for this dataset.

        :param str recordings_file: JSONL file name, relative to the manifest
        """
        counts = {}
        for recording in self.recordings:
            counts[recording.identity] = counts.get(recording.identity, 0) + 1
        return {
            'version': MANIFEST_VERSION,
            'num_joints': self.num_joints,
            'sequence_length': self.sequence_length,
            'center_joint': self.center_joint,
            'identities': [
                {'label': str(label), 'recordings': counts[label]}
                for label in sorted(counts)
            ],
            'recordings': [
                {
                    'file': recordings_file,
                    'id': str(r.identity),
                    'rec': r.rec,
                    'split': r.split,
                    'role': r.role,
                    'condition': r.condition
                }
                for r in self.recordings
            ]
        }


def save_dataset(dataset, path):
    """Write a dataset as a JSON manifest plus a JSONL recordings file.

    The recordings file is written next to the manifest with the same stem.
    Coordinates are printed as shortest round-trip decimals.

    :param GaitDataset dataset: Dataset
    :param str path: Manifest path (e.g. 'data/synthetic.json')
    """
    directory = os.path.dirname(path) or '.'
    os.makedirs(directory, exist_ok=True)
    stem = os.path.splitext(os.path.basename(path))[0]
    recordings_file = '%s.jsonl' % stem

    with open(os.path.join(directory, recordings_file), 'w',
              encoding='utf-8') as fh:
        for recording in dataset.recordings:
            fh.write(json.dumps({
                'id': str(recording.identity),
                'rec': recording.rec,
                'frames': recording.frames.tolist()
            }))
            fh.write('\n')

    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(dataset.manifest(recordings_file), fh, indent=2)


class DatasetReader:
    """DatasetReader class

    Read a dataset manifest and its JSONL recording files.
    """

    def __init__(self, logger=None):
        """Constructor

        :param Logger logger: Application logger
        """
        self.logger = logger

    def read(self, path):
        """Load the dataset described by a manifest file.

        :param str path: Manifest path
        """
        try:
            with open(path, encoding='utf-8') as fh:
                manifest = json.load(fh)
        except OSError as e:
            raise DatasetFormatError("Could not read manifest '%s': %s" %
                                     (path, e))
        except ValueError as e:
            raise DatasetFormatError("Manifest '%s' is not valid JSON: %s" %
                                     (path, e))
        try:
            jsonschema.validate(manifest, MANIFEST_SCHEMA)
        except jsonschema.ValidationError as e:
            raise DatasetFormatError("Invalid manifest '%s': %s" %
                                     (path, e.message))

        directory = os.path.dirname(path) or '.'
        num_joints = manifest['num_joints']

        # read every referenced file once, in manifest order
        lines = {}
        for entry in manifest['recordings']:
            filename = os.path.join(directory, entry['file'])
            if filename not in lines:
                if not os.path.isfile(filename):
                    raise DatasetFormatError(
                        "Recording file '%s' referenced by '%s' does not "
                        "exist" % (filename, path)
                    )
                lines[filename] = self.read_recordings(filename, num_joints)

        recordings = []
        for entry in manifest['recordings']:
            filename = os.path.join(directory, entry['file'])
            key = (entry['id'], entry['rec'])
            if key not in lines[filename]:
                raise DatasetFormatError(
                    "Recording id %s rec %s not found in '%s'" %
                    (entry['id'], entry['rec'], filename)
                )
            recordings.append(Recording(
                self.parse_label(entry['id'], path), entry['rec'],
                lines[filename][key], entry.get('split', 'train'),
                entry.get('role'), entry.get('condition')
            ))

        expected = {
            self.parse_label(i['label'], path): i['recordings']
            for i in manifest['identities']
        }
        found = {}
        for recording in recordings:
            found[recording.identity] = found.get(recording.identity, 0) + 1
        if expected != found:
            raise DatasetFormatError(
                "Manifest '%s' identity counts %s do not match recordings %s"
                % (path, expected, found)
            )

        if self.logger is not None:
            self.logger.info(
                "Loaded %d recordings of %d identities from '%s'" %
                (len(recordings), len(found), path)
            )
        return GaitDataset(num_joints, recordings,
                           manifest.get('sequence_length'),
                           manifest.get('center_joint'))

    def read_recordings(self, filename, num_joints):
        """Parse a JSONL recordings file.

        Return {(id, rec): frames}.

        :param str filename: JSONL file
        :param int num_joints: Expected joints per skeleton
        """
        recordings = {}
        with open(filename, encoding='utf-8') as fh:
            for line_number, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    document = json.loads(line)
                    key = (str(document['id']), int(document['rec']))
                    frames = np.array(document['frames'], dtype=np.float64)
                except (ValueError, KeyError, TypeError) as e:
                    raise DatasetFormatError(
                        "Malformed recording at line %d of '%s': %s" %
                        (line_number, filename, e)
                    )
                if frames.ndim != 3 or frames.shape[1:] != (num_joints, 3):
                    raise DatasetFormatError(
                        "Recording at line %d of '%s' has shape %s, expected "
                        "T x %d x 3" %
                        (line_number, filename, frames.shape, num_joints)
                    )
                recordings[key] = frames
        return recordings

    def parse_label(self, label, path):
        try:
            return int(label)
        except ValueError:
            raise DatasetFormatError(
                "Identity label '%s' in '%s' is not an integer" % (label, path)
            )


def load_dataset(path, logger=None):
    """Load a dataset from its manifest.

    :param str path: Manifest path
    :param Logger logger: Application logger
    """
    return DatasetReader(logger).read(path)
