import json
import os
import shutil
import tempfile
import unittest

import numpy as np
import numpy.testing as npt

import numerics as nx
from checkpoint import CHECKPOINT_VERSION, assign_parameters, \
    load_checkpoint, save_checkpoint
from contrastive import lcl_loss
from gait_errors import CheckpointError, ConfigError, NumericalError, \
    ShapeError
from gradient_check import MAX_PARAMETERS, grad_check
from lstm_cell import LstmCellParams, lstm_step
from optimizer import AdamOptimizer, SgdOptimizer, create_optimizer


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class SoftmaxTestCase(unittest.TestCase):
    """Test case for softmax"""

    def test_uniform(self):
        npt.assert_allclose(nx.softmax([0.0, 0.0, 0.0]).value,
                            [1 / 3.0] * 3, rtol=1e-12)

    def test_closed_form(self):
        npt.assert_allclose(nx.softmax([0.0, np.log(3.0)]).value,
                            [0.25, 0.75], rtol=1e-12)

    def test_large_inputs_do_not_overflow(self):
        y = nx.softmax([1000.0, 0.0]).value
        self.assertTrue(np.all(np.isfinite(y)))
        self.assertAlmostEqual(1.0, y[0], places=12)
        self.assertAlmostEqual(0.0, y[1], places=12)

    def test_sums_to_one_and_permutation_equivariant(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=7)
        perm = rng.permutation(7)
        y = nx.softmax(x).value
        self.assertAlmostEqual(1.0, y.sum(), delta=1e-9)
        npt.assert_allclose(nx.softmax(x[perm]).value, y[perm], rtol=1e-12)

    def test_empty_vector(self):
        with self.assertRaises(ShapeError):
            nx.softmax(np.zeros(0))


class TapeTestCase(unittest.TestCase):
    """Test case for reverse-mode gradients"""

    def test_sum_gradient_is_ones(self):
        p = nx.Parameter('p', np.arange(6.0).reshape(2, 3))
        nx.backward(nx.sum(p), [p])
        npt.assert_array_equal(np.ones((2, 3)), p.grad)

    def test_non_scalar_loss(self):
        p = nx.Parameter('p', np.ones(3))
        with self.assertRaises(ShapeError):
            nx.backward(p * 2.0, [p])

    def test_detached_branch_has_zero_gradient(self):
        p = nx.Parameter('p', np.ones(3))
        q = nx.Parameter('q', np.ones(3))
        loss = nx.sum(nx.detach(p) * q)
        nx.backward(loss, [p, q])
        npt.assert_array_equal(np.zeros(3), p.grad)
        npt.assert_array_equal(np.ones(3), q.grad)

    def test_unused_parameter_gets_zero_gradient(self):
        p = nx.Parameter('p', np.ones(2))
        unused = nx.Parameter('unused', np.ones(2))
        unused.grad += 5.0
        nx.backward(nx.sum_squares(p), [p, unused])
        npt.assert_array_equal(np.zeros(2), unused.grad)

    def test_shared_node_accumulates(self):
        p = nx.Parameter('p', np.array([2.0]))
        y = p * p
        nx.backward(nx.sum(y + y), [p])
        npt.assert_allclose([8.0], p.grad)

    def test_non_finite_value(self):
        with self.assertRaises(NumericalError):
            nx.tanh(nx.constant([np.nan]))

    def test_cosine_similarity_of_zero_vector(self):
        with self.assertRaises(NumericalError):
            nx.cosine_similarity(nx.constant([0.0, 0.0]),
                                 nx.constant([1.0, 0.0]))

    def test_clamped_normalize_maps_zero_row_to_zero(self):
        unit = nx.normalize(nx.constant([[0.0, 0.0], [3.0, 4.0]]), axis=1,
                            eps=1e-8)
        npt.assert_allclose([[0.0, 0.0], [0.6, 0.8]], unit.value)

    def test_clamped_normalize_gradient(self):
        # below eps the map is p / eps
        p = nx.Parameter('p', np.zeros(2))
        nx.backward(nx.sum(nx.mul(nx.normalize(p, eps=0.5), [1.0, 2.0])),
                    [p])
        npt.assert_allclose([2.0, 4.0], p.grad)

    def test_matmul_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            nx.matmul(nx.constant(np.ones((2, 3))),
                      nx.constant(np.ones((2, 3))))

    def test_masked_log_softmax_excludes_entries(self):
        x = nx.constant([[0.0, 5.0, 0.0]])
        y = nx.log_softmax(x, axis=1, mask=[[True, False, True]]).value
        npt.assert_allclose([[np.log(0.5), 0.0, np.log(0.5)]], y,
                            rtol=1e-12)


class GradientCheckTestCase(unittest.TestCase):
    """Test case for finite-difference gradient checks of primitives"""

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def check(self, parameters, loss_fn):
        report = grad_check(parameters, loss_fn)
        self.assertEqual(sorted(p.name for p in parameters),
                         sorted(report['errors']))
        self.assertTrue(report['passed'], report)

    def test_linear_mse(self):
        w = nx.Parameter('w', self.rng.normal(size=(3, 2)))
        x = nx.constant(self.rng.normal(size=(4, 3)))
        y = self.rng.normal(size=(4, 2))
        self.check([w], lambda: nx.mean(nx.square(x @ w - y)))

    def test_tanh_softmax_concat(self):
        a = nx.Parameter('a', self.rng.normal(size=(2, 3)))
        b = nx.Parameter('b', self.rng.normal(size=(2, 2)))
        weights = self.rng.normal(size=(2, 5))

        def loss():
            joined = nx.concat([nx.tanh(a), b], axis=1)
            return nx.sum(nx.softmax(joined, axis=1) * weights)

        self.check([a, b], loss)

    def test_cosine_similarity(self):
        a = nx.Parameter('a', self.rng.normal(size=4))
        b = nx.Parameter('b', self.rng.normal(size=4))
        self.check([a, b], lambda: nx.cosine_similarity(a, b))

    def test_lstm_step(self):
        cell = LstmCellParams('cell', 3, 4, self.rng)
        x = self.rng.normal(size=(2, 3))
        h0 = self.rng.normal(size=(2, 4))
        c0 = self.rng.normal(size=(2, 4))

        def loss():
            h, c = lstm_step(cell, nx.constant(x),
                             (nx.constant(h0), nx.constant(c0)))
            return nx.sum_squares(h) + nx.sum(c * 0.5)

        self.check(cell.parameters(), loss)

    def test_contrastive_loss(self):
        z = nx.Parameter('z', self.rng.normal(size=(4, 3)))
        self.check([z], lambda: lcl_loss(z, 0.5))

    def test_zero_epsilon(self):
        p = nx.Parameter('p', np.ones(2))
        with self.assertRaises(ConfigError):
            grad_check([p], lambda: nx.sum(p), epsilon=0)

    def test_clamped_similarity_matrix(self):
        z = nx.Parameter('z', self.rng.normal(size=(4, 3)))
        weights = self.rng.normal(size=(4, 4))
        self.check([z], lambda: nx.sum(nx.mul(
            nx.cosine_similarity_matrix(z, eps=1e-8), weights
        )))

    def test_model_too_large(self):
        p = nx.Parameter('p', np.zeros(MAX_PARAMETERS + 1))
        with self.assertRaises(ConfigError):
            grad_check([p], lambda: nx.sum(p))

    def test_excluded_parameter_not_reported(self):
        p = nx.Parameter('p', np.ones(2))
        frozen = nx.Parameter('frozen', np.ones(2))
        report = grad_check([p, frozen], lambda: nx.sum_squares(p * frozen),
                            exclude=['frozen'])
        self.assertEqual(['p'], list(report['errors']))
        self.assertTrue(report['passed'])


class LstmStepTestCase(unittest.TestCase):
    """Test case for the LSTM cell"""

    def test_zero_weights_give_zero_hidden(self):
        cell = LstmCellParams('cell', 3, 2, np.random.default_rng(0))
        for p in cell.parameters():
            p.value[...] = 0.0
        state = cell.zero_state(1)
        h, c = lstm_step(cell, nx.constant([[1.0, -2.0, 3.0]]), state)
        npt.assert_array_equal(np.zeros((1, 2)), h.value)

    def test_scalar_oracle(self):
        cell = LstmCellParams('cell', 1, 1, np.random.default_rng(0))
        # gate order: input, forget, output, candidate
        w = np.array([0.5, -0.3, 0.8, 1.2])
        u = np.array([0.1, 0.4, -0.6, 0.7])
        b = np.array([0.05, 1.0, -0.2, 0.3])
        cell.w_input.value[...] = w[None]
        cell.w_hidden.value[...] = u[None]
        cell.bias.value[...] = b
        x, h0, c0 = 0.9, -0.4, 0.25

        i = sigmoid(w[0] * x + u[0] * h0 + b[0])
        f = sigmoid(w[1] * x + u[1] * h0 + b[1])
        o = sigmoid(w[2] * x + u[2] * h0 + b[2])
        g = np.tanh(w[3] * x + u[3] * h0 + b[3])
        c1 = f * c0 + i * g
        h1 = o * np.tanh(c1)

        h, c = lstm_step(cell, nx.constant([[x]]),
                         (nx.constant([[h0]]), nx.constant([[c0]])))
        self.assertAlmostEqual(h1, h.item(), delta=1e-12)
        self.assertAlmostEqual(c1, c.item(), delta=1e-12)

    def test_deterministic(self):
        cell = LstmCellParams('cell', 2, 3, np.random.default_rng(5))
        x = nx.constant([[0.3, -0.1]])
        first = lstm_step(cell, x, cell.zero_state(1))[0].value
        second = lstm_step(cell, x, cell.zero_state(1))[0].value
        npt.assert_array_equal(first, second)

    def test_forget_bias_starts_at_one(self):
        cell = LstmCellParams('cell', 2, 3, np.random.default_rng(5))
        npt.assert_array_equal(np.ones(3), cell.bias.value[3:6])
        npt.assert_array_equal(np.zeros(3), cell.bias.value[0:3])

    def test_input_width_mismatch(self):
        cell = LstmCellParams('cell', 2, 3, np.random.default_rng(5))
        with self.assertRaises(ShapeError):
            lstm_step(cell, nx.constant([[1.0, 2.0, 3.0]]),
                      cell.zero_state(1))


class OptimizerTestCase(unittest.TestCase):
    """Test case for SGD and Adam updates"""

    def test_zero_gradient_leaves_parameters(self):
        p = nx.Parameter('p', np.array([1.0, -2.0]))
        optimizer = AdamOptimizer([p], learning_rate=0.1)
        optimizer.step()
        npt.assert_array_equal([1.0, -2.0], p.value)

    def test_first_adam_step_moves_by_learning_rate(self):
        p = nx.Parameter('p', np.array([1.0, 1.0]))
        p.grad = np.array([0.3, -2.0])
        AdamOptimizer([p], learning_rate=0.01, clip_norm=None).step()
        npt.assert_allclose([0.99, 1.01], p.value, atol=1e-7)

    def test_sgd_step(self):
        p = nx.Parameter('p', np.array([1.0]))
        p.grad = np.array([2.0])
        SgdOptimizer([p], 0.1).step()
        npt.assert_allclose([0.8], p.value)

    def test_gradient_clipping(self):
        p = nx.Parameter('p', np.zeros(2))
        p.grad = np.array([30.0, 40.0])
        optimizer = SgdOptimizer([p], 1.0, clip_norm=5.0)
        npt.assert_allclose([3.0, 4.0], optimizer.clipped_gradients()[0])

    def test_non_positive_learning_rate(self):
        with self.assertRaises(ConfigError):
            create_optimizer('adam', [], 0.0)
        with self.assertRaises(ConfigError):
            create_optimizer('sgd', [], -1.0)

    def test_identical_runs(self):
        def run():
            rng = np.random.default_rng(1)
            w = nx.Parameter('w', rng.normal(size=(3, 1)))
            x = nx.constant(rng.normal(size=(5, 3)))
            optimizer = AdamOptimizer([w], 0.05)
            for _ in range(10):
                nx.backward(nx.sum_squares(x @ w - 1.0), [w])
                optimizer.step()
            return w.value

        npt.assert_array_equal(run(), run())


class CheckpointTestCase(unittest.TestCase):
    """Test case for JSON checkpoints"""

    def setUp(self):
        self.directory = tempfile.mkdtemp()
        self.path = os.path.join(self.directory, 'checkpoint.json')

    def tearDown(self):
        shutil.rmtree(self.directory)

    def test_parameters_restored_exactly(self):
        rng = np.random.default_rng(2)
        params = [nx.Parameter('a', rng.normal(size=(2, 3))),
                  nx.Parameter('b', rng.normal(size=4))]
        save_checkpoint(self.path, params, {'hidden_size': 3})
        config, arrays = load_checkpoint(self.path)
        self.assertEqual({'hidden_size': 3}, config)

        restored = [nx.Parameter('a', np.zeros((2, 3))),
                    nx.Parameter('b', np.zeros(4))]
        assign_parameters(restored, arrays)
        for original, copy in zip(params, restored):
            npt.assert_array_equal(original.value, copy.value)

    def test_unknown_version(self):
        with open(self.path, 'w') as fh:
            json.dump({'version': CHECKPOINT_VERSION + 1, 'config': {},
                       'parameters': []}, fh)
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_shape_mismatch(self):
        save_checkpoint(self.path, [nx.Parameter('a', np.zeros(3))], {})
        _, arrays = load_checkpoint(self.path)
        with self.assertRaises(CheckpointError):
            assign_parameters([nx.Parameter('a', np.zeros(4))], arrays)

    def test_missing_file(self):
        with self.assertRaises(CheckpointError):
            load_checkpoint(os.path.join(self.directory, 'missing.json'))
