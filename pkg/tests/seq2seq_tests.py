import logging
import unittest

import numpy as np
import numpy.testing as npt

import numerics as nx
from contrastive import contrast_representations, lcl_loss, project
from gait_errors import ConfigError, ShapeError
from gait_trainer import GaitTrainer
from gradient_check import grad_check
from run_config import RunConfig
from seq2seq_gait import BAS, LAS, MBAS, NO_ATTENTION, TEST, TRAIN, \
    DecodeTrace, EncoderOutput, GaitModel, GaitModelDim, LossWeights, \
    alignment_loss, decode_sequence, encode, locality_mask, \
    reconstruction_loss, total_loss, window_mass
from skeleton_io import GROUND_TRUTH_TARGET, MODEL_OUTPUT
from synthetic_gait import generate_synthetic


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_oracle(cell, x, h, c):
    """Scalar-by-scalar LSTM step on plain numpy vectors."""
    k = cell.hidden_size
    z = x @ cell.w_input.value + h @ cell.w_hidden.value + cell.bias.value
    i = sigmoid(z[0:k])
    f = sigmoid(z[k:2 * k])
    o = sigmoid(z[2 * k:3 * k])
    g = np.tanh(z[3 * k:4 * k])
    c = f * c + i * g
    return o * np.tanh(c), c


def full_loss_fn(model, inputs, targets, aux_rule, weights, temperature):
    """Total loss of a batch with the alignment target frozen at the
    unperturbed parameters.
    """
    parameters = model.parameters()
    frozen = {}

    def loss():
        trace = decode_sequence(model, encode(model, inputs), targets,
                                aux_rule, TRAIN)
        l_s = reconstruction_loss(trace, targets)
        l_a = None
        if model.attention == LAS:
            if 'target' not in frozen:
                frozen['target'] = trace.alignment_matrix() * trace.masks
            l_a = alignment_loss(trace, frozen['target'])
        z = project(model.projection, trace.representation())
        l_c = lcl_loss(contrast_representations(z), temperature)
        return total_loss(l_s, l_a, l_c, weights, parameters)

    return loss


def zero_parameters(model):
    for p in model.parameters():
        p.value[...] = 0.0


class EncodeTestCase(unittest.TestCase):
    """Test case for the gait encoder"""

    def test_shape(self):
        model = GaitModelDim('X', 5, 3, BAS, sequence_length=4,
                             rng=np.random.default_rng(0))
        encoded = encode(model, np.ones((4, 5)))
        self.assertEqual(4, len(encoded.states))
        for state in encoded.states:
            self.assertEqual((1, 3), state.shape)

    def test_zero_weights(self):
        model = GaitModelDim('X', 5, 3, BAS, sequence_length=4)
        zero_parameters(model)
        encoded = encode(model, np.random.default_rng(1).normal(size=(4, 5)))
        for state in encoded.states:
            npt.assert_array_equal(np.zeros((1, 3)), state.value)

    def test_scalar_oracle(self):
        model = GaitModelDim('X', 1, 1, NO_ATTENTION, sequence_length=2,
                             rng=np.random.default_rng(2))
        values = np.array([[0.7], [-0.4]])
        encoded = encode(model, values)
        h, c = np.zeros(1), np.zeros(1)
        for t in range(2):
            h, c = lstm_oracle(model.encoder, values[t], h, c)
            self.assertAlmostEqual(h[0], encoded.states[t].item(),
                                   delta=1e-12)

    def test_shape_mismatch(self):
        model = GaitModelDim('X', 5, 3, BAS, sequence_length=4)
        with self.assertRaises(ShapeError):
            encode(model, np.ones((4, 6)))


class LocalityMaskTestCase(unittest.TestCase):
    """Test case for the Gaussian locality mask"""

    def test_peak(self):
        mask = locality_mask(1, 6, 2)
        self.assertEqual(1.0, mask[5])
        self.assertEqual(5, int(np.argmax(mask)))

    def test_value(self):
        self.assertAlmostEqual(np.exp(-2.0), locality_mask(1, 6, 2)[3],
                               delta=1e-15)
        self.assertAlmostEqual(0.13534, locality_mask(1, 6, 2)[3],
                               delta=1e-5)

    def test_symmetry(self):
        mask = locality_mask(3, 7, 2)
        center = 7 - 3
        for k in range(1, 3):
            self.assertAlmostEqual(mask[center - k], mask[center + k],
                                   delta=1e-15)


class DecodeTestCase(unittest.TestCase):
    """Test case for attention decoding"""

    def setUp(self):
        self.rng = np.random.default_rng(5)

    def test_no_attention_zero_weights(self):
        model = GaitModelDim('X', 4, 3, NO_ATTENTION, sequence_length=5)
        zero_parameters(model)
        values = self.rng.normal(size=(2, 5, 4))
        trace = decode_sequence(model, encode(model, values), phase=TEST)
        npt.assert_array_equal(np.zeros((2, 5, 4)),
                               trace.output_tensor().value)
        self.assertEqual([], trace.alignments)

    def test_identical_states_give_uniform_attention(self):
        model = GaitModelDim('X', 4, 3, BAS, sequence_length=5,
                             rng=self.rng)
        state = nx.constant(self.rng.normal(size=(1, 3)))
        encoded = EncoderOutput([state] * 5, (state, state))
        trace = decode_sequence(model, encoded, phase=TEST)
        for alignment, context in zip(trace.alignments, trace.contexts):
            npt.assert_allclose(np.full((1, 5), 0.2), alignment.value,
                                rtol=1e-12)
            npt.assert_allclose(state.value, context.value, rtol=1e-12)

    def test_scalar_pipeline_oracle(self):
        model = GaitModelDim('X', 1, 1, MBAS, window=2, sequence_length=2,
                             rng=self.rng)
        values = np.array([[0.3], [-0.8]])
        trace = decode_sequence(model, encode(model, values), phase=TEST)

        h, c = np.zeros(1), np.zeros(1)
        encoded = []
        for t in range(2):
            h, c = lstm_oracle(model.encoder, values[t], h, c)
            encoded.append(h[0])
        encoded = np.array(encoded)

        w_att = model.w_att.value[0]
        w_f = model.w_f.value[0, 0]
        previous, attentional = 0.0, 0.0
        for t in range(2):
            h, c = lstm_oracle(model.decoder,
                               np.array([previous, attentional]), h, c)
            scores = encoded * h[0]
            a = np.exp(scores - scores.max())
            a = a / a.sum()
            center = 2 - (t + 1) + 1
            l = np.exp(-(np.arange(1, 3) - center) ** 2 / 2.0)
            context = np.sum(l * a * encoded)
            attentional = np.tanh(w_att[0] * context + w_att[1] * h[0])
            output = w_f * attentional
            self.assertAlmostEqual(output, trace.outputs[t].item(),
                                   delta=1e-12)
            previous = output

    def test_teacher_forcing_uses_targets(self):
        model = GaitModelDim('X', 2, 3, BAS, sequence_length=3, rng=self.rng)
        values = self.rng.normal(size=(1, 3, 2))
        targets = self.rng.normal(size=(1, 3, 2))
        encoded = encode(model, values)
        forced = decode_sequence(model, encoded, targets,
                                 GROUND_TRUTH_TARGET, TRAIN)
        free = decode_sequence(model, encoded, targets, MODEL_OUTPUT, TRAIN)
        # the first step never sees a previous skeleton
        npt.assert_array_equal(forced.outputs[0].value, free.outputs[0].value)
        self.assertFalse(np.allclose(forced.outputs[2].value,
                                     free.outputs[2].value))

    def test_alignment_rows_and_masked_scores(self):
        model = GaitModelDim('X', 3, 4, LAS, sequence_length=6, rng=self.rng)
        trace = decode_sequence(model, encode(model,
                                              self.rng.normal(size=(2, 6, 3))),
                                phase=TEST)
        matrix = trace.alignment_matrix()
        npt.assert_allclose(np.ones((2, 6)), matrix.sum(axis=2), atol=1e-9)
        for a, masked in zip(trace.alignments, trace.masked_alignments):
            self.assertTrue(np.all(masked.value <= a.value))

    def test_representation_width(self):
        model = GaitModelDim('X', 3, 4, LAS, sequence_length=6, rng=self.rng)
        trace = decode_sequence(model, encode(model,
                                              self.rng.normal(size=(2, 6, 3))),
                                phase=TEST)
        self.assertEqual((2, 24), trace.representation().shape)


class LossTestCase(unittest.TestCase):
    """Test case for reconstruction, alignment and total losses"""

    def trace(self, outputs):
        return DecodeTrace(BAS, outputs=[nx.constant(outputs[:, t])
                                         for t in range(outputs.shape[1])])

    def test_reconstruction_zero(self):
        targets = np.random.default_rng(0).normal(size=(1, 6, 5))
        self.assertEqual(0.0, reconstruction_loss(self.trace(targets),
                                                  targets).item())

    def test_reconstruction_unit_offset(self):
        targets = np.zeros((1, 6, 5))
        loss = reconstruction_loss(self.trace(targets + 1.0), targets[0])
        self.assertAlmostEqual(30.0, loss.item(), delta=1e-12)

    def test_reconstruction_brute_force(self):
        rng = np.random.default_rng(1)
        outputs = rng.normal(size=(1, 4, 3))
        targets = rng.normal(size=(1, 4, 3))
        expected = 0.0
        for i in range(4):
            for j in range(3):
                expected += (outputs[0, i, j] - targets[0, i, j]) ** 2
        self.assertAlmostEqual(
            expected,
            reconstruction_loss(self.trace(outputs), targets).item(),
            delta=1e-12
        )

    def test_alignment_loss_closed_form(self):
        trace = DecodeTrace(LAS, masks=np.array([[1.0, np.exp(-2.0)]]),
                            alignments=[nx.constant([[0.5, 0.5]])])
        expected = (0.5 - 0.5 * np.exp(-2.0)) ** 2
        self.assertAlmostEqual(expected, alignment_loss(trace).item(),
                               delta=1e-9)
        self.assertAlmostEqual(0.1870, alignment_loss(trace).item(),
                               delta=1e-4)

    def test_alignment_loss_zero_when_mask_is_one_on_support(self):
        trace = DecodeTrace(LAS, masks=np.array([[1.0, 0.3]]),
                            alignments=[nx.constant([[1.0, 0.0]])])
        self.assertEqual(0.0, alignment_loss(trace).item())

    def test_alignment_loss_needs_las(self):
        trace = DecodeTrace(MBAS, masks=np.ones((1, 2)),
                            alignments=[nx.constant([[0.5, 0.5]])])
        with self.assertRaises(ConfigError):
            alignment_loss(trace)

    def test_total_loss_zero_weights(self):
        p = nx.Parameter('p', np.ones(3))
        weights = LossWeights(0.0, 0.0, 0.0, 0.0)
        loss = total_loss(nx.sum(p), nx.sum(p), nx.sum(p), weights, [p])
        self.assertEqual(0.0, loss.item())

    def test_total_loss_reconstruction_only(self):
        p = nx.Parameter('p', np.ones(3))
        l_s = nx.sum_squares(p)
        loss = total_loss(l_s, nx.constant(2.0), nx.constant(3.0),
                          LossWeights(1.0, 0.0, 0.0, 0.0), [p])
        self.assertEqual(l_s.item(), loss.item())

    def test_total_loss_weighted_sum(self):
        rng = np.random.default_rng(4)
        params = [nx.Parameter('a', rng.normal(size=3)),
                  nx.Parameter('b', rng.normal(size=(2, 2)))]
        l_s, l_a, l_c = rng.uniform(size=3)
        weights = LossWeights(0.7, 0.2, 0.4, 0.01)
        expected = (0.7 * l_s + 0.2 * l_a + 0.4 * l_c + 0.01 * sum(
            np.sum(p.value ** 2) for p in params))
        loss = total_loss(nx.constant(l_s), nx.constant(l_a),
                          nx.constant(l_c), weights, params)
        self.assertAlmostEqual(expected, loss.item(), delta=1e-12)

    def test_negative_weight(self):
        with self.assertRaises(ConfigError):
            LossWeights(lambda_c=-0.1)

    def test_window_mass_of_uniform_matrix(self):
        # f=4, D=1: windows hold 2, 3, 3, 2 positions
        self.assertAlmostEqual(10 / 16.0,
                               window_mass(np.full((4, 4), 0.25), 1),
                               delta=1e-12)


class FullLossGradientTestCase(unittest.TestCase):
    """Test case for gradients of the combined loss"""

    def check(self, attention, aux_rule=GROUND_TRUTH_TARGET, reverse=True):
        rng = np.random.default_rng(8)
        model = GaitModelDim('X', 3, 3, attention, window=2,
                             sequence_length=4, rng=rng)
        inputs = rng.normal(size=(3, 4, 3))
        targets = inputs[:, ::-1] if reverse else rng.normal(size=(3, 4, 3))
        weights = LossWeights(1.0, 0.5 if attention == LAS else 0.0, 0.5,
                              1e-3)
        report = grad_check(
            model.parameters(),
            full_loss_fn(model, inputs, targets, aux_rule, weights, 0.1)
        )
        self.assertTrue(report['passed'], report)
        self.assertEqual(len(model.parameters()), len(report['errors']))

    def test_no_attention(self):
        self.check(NO_ATTENTION)

    def test_bas(self):
        self.check(BAS)

    def test_mbas(self):
        self.check(MBAS)

    def test_las(self):
        self.check(LAS)

    def test_model_output_feedback(self):
        self.check(BAS, MODEL_OUTPUT, reverse=False)


class GaitModelTestCase(unittest.TestCase):
    """Test case for the per-dimension model bundle"""

    def test_parameter_names(self):
        model = GaitModel('reverse', 5, 4, LAS, 2, 6, seed=0)
        names = [p.name for p in model.parameters()]
        self.assertEqual(len(names), len(set(names)))
        for dim in 'XYZ':
            self.assertIn('%s.w_att' % dim, names)
            self.assertIn('%s.encoder.w_input' % dim, names)
        self.assertTrue(all(name[0] in 'XYZ' for name in names))

    def test_no_attention_has_no_attention_matrix(self):
        model = GaitModel('plain', 5, 4, NO_ATTENTION, 2, 6, seed=0)
        names = [p.name for p in model.parameters()]
        self.assertNotIn('X.w_att', names)
        self.assertEqual(5, model['X'].decoder.input_size)

    def test_dimensions_initialized_independently(self):
        model = GaitModel('reverse', 5, 4, LAS, 2, 6, seed=0)
        self.assertFalse(np.allclose(model['X'].w_f.value,
                                     model['Y'].w_f.value))


class GaitTrainerTestCase(unittest.TestCase):
    """Test case for per-dimension training"""

    def setUp(self):
        self.logger = logging.getLogger('gait.tests')
        self.dataset = generate_synthetic(2, 2, 40, num_joints=4, seed=0)

    def config(self, **values):
        base = dict(hidden_size=4, sequence_length=4, head_tail_discard=2,
                    batch_size=3, epochs=2, learning_rate=0.01)
        base.update(values)
        return RunConfig(base, environ={})

    def test_zero_epochs_keep_initialization(self):
        trainer = GaitTrainer(self.config(epochs=0), self.logger)
        model = trainer.build_model('reverse', 4)
        initial = [p.value.copy() for p in model.parameters()]
        result = trainer.train(model, self.dataset)
        for before, p in zip(initial, model.parameters()):
            npt.assert_array_equal(before, p.value)
        self.assertEqual(1, len(result.curves['X']))
        self.assertEqual(0, result.curves['X'][0]['epoch'])

    def test_same_seed_same_curves(self):
        def curves():
            trainer = GaitTrainer(self.config(), self.logger)
            model = trainer.build_model('reverse', 4)
            return trainer.train(model, self.dataset).curves

        self.assertEqual(curves(), curves())

    def test_curve_columns(self):
        trainer = GaitTrainer(self.config(), self.logger)
        result = trainer.train(trainer.build_model('reverse', 4),
                               self.dataset)
        for dim in 'XYZ':
            self.assertEqual([0, 1, 2],
                             [row['epoch'] for row in result.curves[dim]])
            self.assertGreater(result.curves[dim][0]['L_C'], 0.0)
            self.assertGreater(result.curves[dim][0]['L_A'], 0.0)

    def test_other_tasks_fall_back_to_auxiliary_attention(self):
        trainer = GaitTrainer(self.config(tasks=['reverse', 'sorting']),
                              self.logger)
        model = trainer.build_model('sorting', 4)
        self.assertEqual(BAS, model.attention)
        result = trainer.train(model, self.dataset, epochs=1)
        self.assertEqual(0.0, result.curves['X'][-1]['L_A'])

    def test_prediction_skips_tail_windows(self):
        trainer = GaitTrainer(
            self.config(tasks=['reverse', 'prediction']), self.logger
        )
        result = trainer.train(trainer.build_model('prediction', 4),
                               self.dataset, epochs=0)
        self.assertGreater(result.skipped, 0)

    def test_evaluate_reconstruction(self):
        trainer = GaitTrainer(self.config(), self.logger)
        model = trainer.build_model('reverse', 4)
        losses = trainer.evaluate_reconstruction(model, self.dataset)
        self.assertEqual(['X', 'Y', 'Z'], sorted(losses))
        for value in losses.values():
            self.assertGreater(value, 0.0)
