import logging
import os
import shutil
import tempfile
import unittest

import numpy as np
from flask import Response, json
from flask.testing import FlaskClient

import server
from checkpoint import save_checkpoint
from features_reid import AP, GaitEncoding, train_recognizer, \
    write_encodings


def gallery_encodings():
    """Two enrolled identities around (0, 0) and (10, 10), plus a probe."""
    def encoding(identity, value, rec, role, seq_index=0):
        return GaitEncoding(identity, rec, seq_index,
                            np.full((2, 2), float(value)), 'CAGE',
                            ('reverse',), 'test', role, 'nm')

    return [
        encoding(1, 0.0, 2, 'gallery'),
        encoding(1, 0.5, 2, 'gallery', 1),
        encoding(2, 10.0, 2, 'gallery'),
        encoding(2, 1.0, 3, 'probe')
    ]


class ApiTestCase(unittest.TestCase):
    """Test case for server API"""

    @classmethod
    def setUpClass(cls):
        cls.directory = tempfile.mkdtemp()
        cls.gallery_path = os.path.join(cls.directory, 'encodings.jsonl')
        cls.recognizer_path = os.path.join(cls.directory, 'recognizer.json')
        write_encodings(cls.gallery_path, gallery_encodings())

        rng = np.random.default_rng(0)
        training = [
            GaitEncoding(identity, 0, i,
                         np.eye(2)[identity - 1] * 3.0 +
                         rng.normal(scale=0.1, size=(2, 2)),
                         'CAGE', ('reverse',), 'train')
            for identity in (1, 2) for i in range(4)
        ]
        net, _ = train_recognizer(training, AP, hidden_size=8, epochs=100,
                                  learning_rate=1e-2)
        save_checkpoint(cls.recognizer_path, net.state(),
                        {'recognizer': net.describe()})

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.directory)

    def setUp(self):
        server.app.testing = True
        server.app.logger.setLevel(logging.CRITICAL)
        self.app = FlaskClient(server.app, Response)
        service = server.reid_service
        service.gallery_path = self.gallery_path
        service.recognizer_path = self.recognizer_path
        service.strategy = AP

    def get(self, url):
        """Send GET request and return status code and decoded JSON from
        response.
        """
        response = self.app.get(url)
        return response.status_code, json.loads(response.data)

    def post(self, url, data):
        """Send POST request with JSON body and return status code and
        decoded JSON from response.
        """
        response = self.app.post(url, json=data)
        return response.status_code, json.loads(response.data)

    def test_last_update(self):
        status_code, json_data = self.get('/last_update')
        self.assertEqual(200, status_code, "Status code is not OK")
        self.assertIn('gallery_updated_at', json_data)
        self.assertEqual(19, len(json_data['gallery_updated_at']))

    def test_gallery(self):
        status_code, json_data = self.get('/gallery')
        self.assertEqual(200, status_code, "Status code is not OK")
        self.assertEqual([1, 2], json_data['identities'])
        self.assertEqual(3, json_data['sequences'])
        self.assertEqual(4, json_data['width'])

    def test_match(self):
        status_code, json_data = self.post('/match',
                                           {'vector': [9.0] * 4, 'top_k': 2})
        self.assertEqual(200, status_code, "Status code is not OK")
        ranking = json_data['ranking']
        self.assertEqual([2, 1], [entry['identity'] for entry in ranking])
        self.assertAlmostEqual(2.0, ranking[0]['distance'], delta=1e-9)

    def test_match_uses_closest_sequence(self):
        # closest gallery sequence of identity 1 is (0.5, ...)
        status_code, json_data = self.post('/match',
                                           {'vector': [0.5] * 4, 'top_k': 1})
        self.assertEqual(200, status_code, "Status code is not OK")
        self.assertEqual(1, len(json_data['ranking']))
        self.assertEqual(1, json_data['ranking'][0]['identity'])
        self.assertEqual(0.0, json_data['ranking'][0]['distance'])

    def test_match_invalid(self):
        status_code, _ = self.post('/match', {'top_k': 2})
        self.assertEqual(400, status_code)
        status_code, _ = self.post('/match', {'vector': [1.0, 2.0]})
        self.assertEqual(400, status_code)
        status_code, _ = self.post('/match',
                                   {'vector': [1.0] * 4, 'top_k': 'many'})
        self.assertEqual(400, status_code)

    def test_predict(self):
        status_code, json_data = self.post(
            '/predict', {'vectors': [[3.0, 0.0], [2.9, 0.1]]}
        )
        self.assertEqual(200, status_code, "Status code is not OK")
        self.assertEqual(1, json_data['identity'])
        self.assertAlmostEqual(1.0, sum(json_data['probabilities']),
                               delta=1e-6)

    def test_predict_invalid(self):
        status_code, _ = self.post('/predict', {'vectors': [[1.0, 2.0]],
                                                'strategy': 'XY'})
        self.assertEqual(400, status_code)
        status_code, _ = self.post('/predict', {'vectors': [[1.0, 2.0, 3.0]]})
        self.assertEqual(400, status_code)
        status_code, _ = self.post('/predict', {})
        self.assertEqual(400, status_code)

    def test_missing_gallery(self):
        server.reid_service.gallery_path = os.path.join(self.directory,
                                                        'missing.jsonl')
        status_code, _ = self.get('/gallery')
        self.assertEqual(404, status_code)
        status_code, _ = self.post('/match', {'vector': [1.0] * 4})
        self.assertEqual(404, status_code)

    def test_artifacts_are_cached(self):
        self.get('/gallery')
        cache = server.reid_service.artifact_cache
        self.assertIn(self.gallery_path, cache)
        cached = cache[self.gallery_path]['value']
        self.get('/gallery')
        self.assertIs(cached, cache[self.gallery_path]['value'])
