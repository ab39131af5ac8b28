import csv
import json

import numpy as np

from gait_errors import ConfigError, ShapeError
from features_reid import predict_sequence


class CmcCurve:
    """CmcCurve class

    Cumulative matching characteristic: values[k-1] is the fraction of
    probes whose identity is ranked within the top k of G gallery
    identities.
    """

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def __len__(self):
        return len(self.values)

    @property
    def rank1(self):
        return float(self.values[0])

    def nauc(self):
        return nauc(self)

    def to_list(self):
        return [float(v) for v in self.values]


def rank_identities(scores, labels, ascending=False):
    """Rank gallery identities per probe.

    Ties go to the smaller identity label.

    :param ndarray scores: N x G scores (probabilities or distances)
    :param list labels: G identity labels, one per score column
    :param bool ascending: True for distances (smaller is better)
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    keys = scores if ascending else -scores
    rankings = np.empty(scores.shape, dtype=labels.dtype)
    for i, row in enumerate(keys):
        # lexsort sorts by the last key first
        rankings[i] = labels[np.lexsort((labels, row))]
    return rankings


def cmc(rankings, truth):
    """CMC from per-probe identity rankings.

    :param ndarray rankings: N x G ranked identity labels
    :param list truth: True identity per probe
    """
    rankings = np.asarray(rankings)
    truth = np.asarray(truth)
    if rankings.ndim != 2 or rankings.shape[0] != len(truth):
        raise ShapeError("Got %s rankings for %d probes" %
                         (rankings.shape, len(truth)))
    if rankings.shape[0] == 0:
        raise ConfigError("CMC needs at least one probe")
    matches = rankings == truth[:, None]
    missing = ~matches.any(axis=1)
    if missing.any():
        raise ConfigError(
            "Probe identity %s is absent from the gallery" %
            truth[np.argmax(missing)]
        )
    ranks = np.argmax(matches, axis=1)
    gallery_size = rankings.shape[1]
    counts = np.bincount(ranks, minlength=gallery_size)
    return CmcCurve(np.cumsum(counts) / float(len(truth)))


def nauc(curve):
    """Area under the CMC normalized by the number of ranks, in (0, 1]."""
    values = curve.values if isinstance(curve, CmcCurve) else \
        np.asarray(curve, dtype=np.float64)
    if len(values) == 0:
        raise ConfigError("nAUC of an empty CMC curve")
    return float(values.sum() / len(values))


def metrics(curve):
    """Metrics document: Rank-1 and nAUC in percent plus the raw curve."""
    return {
        'rank1': 100.0 * curve.rank1,
        'nauc': 100.0 * nauc(curve),
        'cmc': curve.to_list()
    }


def evaluate_classifier(net, encodings, strategy=None):
    """Rank-1, nAUC and CMC of a recognizer on labelled encodings.

    Identities are ranked by predicted class probability.

    :param RecognitionNet net: Trained recognizer
    :param list encodings: Labelled GaitEncodings (test split)
    :param str strategy: 'AP' or 'SC' (default: the net's strategy)
    """
    if not encodings:
        raise ConfigError("No encodings to evaluate")
    truth = np.array([e.identity for e in encodings])
    if truth.min() < 1 or truth.max() > net.num_classes:
        raise ConfigError(
            "Labels %d..%d do not fit a recognizer of %d classes" %
            (truth.min(), truth.max(), net.num_classes)
        )
    probabilities = np.stack([predict_sequence(net, e, strategy)
                              for e in encodings])
    labels = np.arange(1, net.num_classes + 1)
    curve = cmc(rank_identities(probabilities, labels), truth)
    return curve.rank1, nauc(curve), curve


def pairwise_distances(probes, gallery):
    """Euclidean distances between rows (N x M)."""
    probes = np.asarray(probes, dtype=np.float64)
    gallery = np.asarray(gallery, dtype=np.float64)
    if probes.shape[1] != gallery.shape[1]:
        raise ShapeError("Probe width %d does not match gallery width %d" %
                         (probes.shape[1], gallery.shape[1]))
    return np.sqrt(((probes[:, None, :] - gallery[None, :, :]) ** 2)
                   .sum(axis=2))


def identity_distances(distances, gallery_labels):
    """Collapse per-sequence distances to the minimum per identity.

    Return (N x G distances, G sorted identity labels).
    """
    gallery_labels = np.asarray(gallery_labels)
    identities = np.unique(gallery_labels)
    collapsed = np.stack([
        distances[:, gallery_labels == identity].min(axis=1)
        for identity in identities
    ], axis=1)
    return collapsed, identities


class MatchProtocol:
    """MatchProtocol class

    Gallery/probe matching between two condition tags, named
    '<probe>-<gallery>' (e.g. 'bg-nm').
    """

    def __init__(self, probe_condition=None, gallery_condition=None):
        self.probe_condition = probe_condition
        self.gallery_condition = gallery_condition

    @property
    def name(self):
        return '%s-%s' % (self.probe_condition or 'all',
                          self.gallery_condition or 'all')

    @classmethod
    def parse(cls, name):
        parts = name.split('-')
        if len(parts) != 2 or not all(parts):
            raise ConfigError(
                "Protocol '%s' must be named <probe>-<gallery>" % name
            )
        return cls(*[None if p == 'all' else p for p in parts])

    def select(self, encodings):
        """Split encodings into (probes, gallery) by role and condition."""
        def pick(role, condition):
            return [
                e for e in encodings
                if e.role == role and
                (condition is None or e.condition == condition)
            ]

        probes = pick('probe', self.probe_condition)
        gallery = pick('gallery', self.gallery_condition)
        if not probes or not gallery:
            raise ConfigError(
                "Protocol %s has %d probes and %d gallery sequences" %
                (self.name, len(probes), len(gallery))
            )
        shared = set(e.key for e in probes) & set(e.key for e in gallery)
        if shared:
            raise ConfigError("Protocol %s: probe sequences in gallery: %s" %
                              (self.name, sorted(shared)[:3]))
        if not set(e.identity for e in probes) & \
                set(e.identity for e in gallery):
            raise ConfigError("Protocol %s: probe and gallery identities "
                              "do not overlap" % self.name)
        return probes, gallery


def match_gallery(probe_vectors, probe_labels, gallery_vectors,
                  gallery_labels):
    """Nearest-gallery matching by Euclidean distance.

    Gallery identities are scored by their closest sequence. Return the
    CMC curve, whose first value is the Rank-1 matching rate.

    :param ndarray probe_vectors: N x W sequence-level probe encodings
    :param list probe_labels: N probe identities
    :param ndarray gallery_vectors: M x W sequence-level gallery encodings
    :param list gallery_labels: M gallery identities
    """
    distances = pairwise_distances(probe_vectors, gallery_vectors)
    collapsed, identities = identity_distances(distances, gallery_labels)
    return cmc(rank_identities(collapsed, identities, ascending=True),
               probe_labels)


def evaluate_protocol(protocol, encodings):
    """Run match_gallery for a protocol over test encodings."""
    probes, gallery = protocol.select(encodings)
    # probes of identities without gallery sequences cannot be ranked
    enrolled = set(e.identity for e in gallery)
    probes = [e for e in probes if e.identity in enrolled]
    return match_gallery(
        np.stack([e.sequence_vector for e in probes]),
        [e.identity for e in probes],
        np.stack([e.sequence_vector for e in gallery]),
        [e.identity for e in gallery]
    )


def write_metrics_json(path, document):
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(document, fh, indent=2, sort_keys=True)


def write_csv(path, columns, rows):
    """Write dict rows with a header line.

    :param str path: Output file
    :param list columns: Column names
    :param list rows: Dicts keyed by column
    """
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns),
                                extrasaction='ignore', lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
