from datetime import datetime
import os

import numpy as np

from evaluation import identity_distances, pairwise_distances, \
    rank_identities
from experiment import load_recognizer
from features_reid import STRATEGIES, predict_sequence, read_encodings
from gait_errors import GaitError


class ReIdService:
    """ReIdService class

    Match probe encodings against an enrolled gallery and query the trained
    recognizer. Gallery and recognizer files are reloaded when they change.
    """

    def __init__(self, logger):
        """Constructor

        :param Logger logger: Application logger
        """
        self.logger = logger

        # get artifact paths from ENV
        output_path = os.environ.get('GAIT_OUTPUT_PATH', 'output/')
        self.gallery_path = os.environ.get(
            'GAIT_GALLERY_ENCODINGS',
            os.path.join(output_path, 'encodings.jsonl')
        )
        self.recognizer_path = os.environ.get(
            'GAIT_RECOGNIZER_CHECKPOINT',
            os.path.join(output_path, 'recognizer.json')
        )
        self.strategy = os.environ.get('GAIT_STRATEGY', 'AP')

        # {path: {'timestamp': mtime, 'value': loaded artifact}}
        self.artifact_cache = {}

    def last_update(self):
        """Return UTC timestamp of last gallery update."""
        if os.path.isfile(self.gallery_path):
            updated_at = datetime.utcfromtimestamp(
                os.path.getmtime(self.gallery_path)
            )
        else:
            updated_at = datetime.utcnow()

        return {
            'gallery_updated_at': updated_at.strftime("%Y-%m-%d %H:%M:%S")
        }

    def gallery(self):
        """Return a summary of the enrolled gallery."""
        gallery = self.load_gallery()
        if 'error' in gallery:
            return gallery

        return {
            'identities': [int(i) for i in np.unique(gallery['labels'])],
            'sequences': len(gallery['labels']),
            'width': int(gallery['vectors'].shape[1])
        }

    def match(self, vector, top_k=5):
        """Rank gallery identities by Euclidean distance to a probe.

        :param list vector: Sequence-level probe encoding
        :param int top_k: Number of identities to return
        """
        gallery = self.load_gallery()
        if 'error' in gallery:
            return gallery

        try:
            probe = np.asarray(vector, dtype=np.float64).reshape(1, -1)
            distances = pairwise_distances(probe, gallery['vectors'])
        except (GaitError, ValueError, TypeError) as e:
            return {'error': "Invalid probe: %s" % e, 'code': 400}

        collapsed, identities = identity_distances(
            distances, gallery['labels']
        )
        ranking = rank_identities(collapsed, identities, ascending=True)[0]
        order = {label: i for i, label in enumerate(identities)}
        return {
            'ranking': [
                {
                    'identity': int(label),
                    'distance': float(collapsed[0, order[label]])
                }
                for label in ranking[:max(int(top_k), 1)]
            ]
        }

    def predict(self, vectors, strategy=None):
        """Return the recognizer's identity distribution for a sequence.

        :param list vectors: Skeleton-level vectors (AP) or the
                             sequence-level vector (SC)
        :param str strategy: 'AP' or 'SC' (default from GAIT_STRATEGY)
        """
        strategy = strategy or self.strategy
        if strategy not in STRATEGIES:
            return {'error': "Unknown strategy '%s'" % strategy, 'code': 400}

        net = self.cached(self.recognizer_path, load_recognizer)
        if isinstance(net, dict):
            return net

        try:
            probabilities = predict_sequence(net, vectors, strategy)
        except (GaitError, ValueError, TypeError) as e:
            return {'error': "Invalid encoding: %s" % e, 'code': 400}

        return {
            'identity': int(np.argmax(probabilities)) + 1,
            'probabilities': [float(p) for p in probabilities]
        }

    def load_gallery(self):
        """Return gallery vectors and labels (or an error result)."""
        encodings = self.cached(self.gallery_path, read_encodings)
        if isinstance(encodings, dict):
            return encodings

        # enrolled sequences only, if roles are tagged
        gallery = [e for e in encodings if e.role == 'gallery'] or encodings
        gallery = [e for e in gallery if e.identity is not None]
        if not gallery:
            return {'error': "Gallery '%s' is empty" % self.gallery_path,
                    'code': 404}
        return {
            'vectors': np.stack([e.sequence_vector for e in gallery]),
            'labels': np.array([e.identity for e in gallery])
        }

    def cached(self, path, loader):
        """Load an artifact, reusing the cached copy while its file is
        unchanged.

        :param str path: Artifact path
        :param func loader: Loads the artifact from a path
        """
        if not os.path.isfile(path):
            self.logger.warning("Artifact '%s' not found" % path)
            return {'error': "Artifact '%s' not found" % path, 'code': 404}

        timestamp = os.path.getmtime(path)
        entry = self.artifact_cache.get(path)
        if entry is not None and entry['timestamp'] == timestamp:
            return entry['value']

        try:
            value = loader(path)
        except GaitError as e:
            self.logger.error("Could not load '%s': %s" % (path, e))
            return {'error': str(e), 'code': 404}

        self.logger.info("Loaded '%s'" % path)
        self.artifact_cache[path] = {'timestamp': timestamp, 'value': value}
        return value
