import numpy as np

import numerics as nx
from contrastive import contrast_representations, lcl_loss, make_batches, \
    project
from gait_errors import NumericalError
from optimizer import create_optimizer
from seq2seq_gait import LAS, TEST, TRAIN, GaitModel, \
    LossWeights, alignment_loss, decode_sequence, encode, \
    reconstruction_loss, total_loss
from skeleton_io import DIMENSIONS, TASKS, build_pretext, dimension_values

LOSS_COLUMNS = ('epoch', 'L_S', 'L_A', 'L_C', 'total')


class TrainingResult:
    """TrainingResult class

    Per-dimension loss curves of one pretext task.
    """

    def __init__(self, task):
        self.task = task
        # {dim: [{'epoch', 'L_S', 'L_A', 'L_C', 'total'}]}
        self.curves = {dim: [] for dim in DIMENSIONS}
        self.skipped = 0

    def final(self, column='L_S'):
        """Mean over dimensions of the last value of a loss column."""
        return float(np.mean([self.curves[d][-1][column] for d in DIMENSIONS]))

    def initial(self, column='L_S'):
        return float(np.mean([self.curves[d][0][column] for d in DIMENSIONS]))


class GaitTrainer:
    """GaitTrainer class

    Train the per-dimension gait models of one pretext task on the training
    split, jointly optimizing the reconstruction, alignment and
    contrastive losses.
    """

    def __init__(self, config, logger):
        """Constructor

        :param RunConfig config: Resolved run configuration
        :param Logger logger: Application logger
        """
        self.config = config
        self.logger = logger

    def build_model(self, task, num_joints):
        """Create a freshly initialized model for a pretext task.

        :param str task: Pretext task
        :param int num_joints: Joints J
        """
        return GaitModel(
            task, num_joints, self.config['hidden_size'],
            self.config.task_attention(task), self.config['window'],
            self.config['sequence_length'], self.config['seed'],
            self.config['contrast_hidden'], TASKS.index(task)
        )

    def loss_weights(self, attention):
        lambda_a = self.config['lambda_a'] if attention == LAS else 0.0
        return LossWeights(self.config['lambda_s'], lambda_a,
                           self.config['lambda_c'], self.config['beta'])

    def batches(self, sequences):
        """Mini-batches in timeline order: the contrast batches of every
        identity, remainders included.
        """
        batches = []
        for identity in sorted(set(s.identity for s in sequences)):
            batches += make_batches(
                sequences, identity, self.config['batch_size'],
                self.config['interval'], self.config['temperature'],
                drop_remainder=False, logger=self.logger
            )
        return batches

    def train(self, model, dataset, epochs=None):
        """Train all dimensions of a model.

        Epoch 0 is an evaluation pass before any update.

        :param GaitModel model: Model to train in place
        :param GaitDataset dataset: Dataset
        :param int epochs: Override of the configured epoch count
        """
        if epochs is None:
            epochs = self.config['epochs']
        sequences = dataset.sequences(
            self.config['sequence_length'], self.config['head_tail_discard'],
            self.config['step'], split='train', logger=self.logger
        )
        contexts = dataset.contexts(self.config['head_tail_discard'])
        batches = self.batches(sequences)
        self.logger.info(
            "Training task '%s' (%s attention) on %d sequences in %d batches"
            % (model.task, model.attention, len(sequences), len(batches))
        )

        result = TrainingResult(model.task)
        for d, dim in enumerate(DIMENSIONS):
            rng = np.random.default_rng(
                [self.config['seed'], TASKS.index(model.task), d, 1]
            )
            result.skipped += self.train_dimension(
                model[dim], model.task, batches, contexts, epochs, rng,
                result.curves[dim]
            )
        return result

    def train_dimension(self, model, task, batches, contexts, epochs, rng,
                        curve):
        """Train one dimension model; append loss rows to ``curve``.

        Return the number of skipped pretext samples.
        """
        parameters = model.parameters()
        optimizer = create_optimizer(
            self.config['optimizer'], parameters,
            self.config['learning_rate'], self.config['adam_beta1'],
            self.config['adam_beta2'], self.config['clip_norm']
        )
        weights = self.loss_weights(model.attention)
        skipped = 0

        for epoch in range(epochs + 1):
            totals = {column: [] for column in LOSS_COLUMNS[1:]}
            for step, batch in enumerate(batches):
                samples = [
                    build_pretext(task, sequence,
                                  contexts[(sequence.identity,
                                            sequence.recording)], rng)
                    for sequence in batch.sequences
                ]
                kept = [s for s in samples if not s.skipped]
                if epoch == 0:
                    skipped += len(samples) - len(kept)
                if not kept:
                    continue
                contrast = (batch.complete and len(kept) == len(samples)
                            and weights.lambda_c > 0)
                try:
                    losses = self.batch_losses(model, kept, weights,
                                               parameters, contrast)
                    if epoch > 0:
                        nx.backward(losses['total'], parameters)
                        optimizer.step()
                except NumericalError as e:
                    self.logger.error(
                        "Training aborted in dimension %s, epoch %d, step %d"
                        % (model.dim, epoch, step)
                    )
                    raise NumericalError(
                        "%s (dimension %s, epoch %d, step %d)" %
                        (e, model.dim, epoch, step)
                    )
                for column, value in losses.items():
                    if value is not None:
                        totals[column].append(value.item())

            row = {'epoch': epoch}
            for column, values in totals.items():
                row[column] = float(np.mean(values)) if values else 0.0
            curve.append(row)
            self.logger.info(
                "%s %s epoch %d: L_S=%.6f L_A=%.6f L_C=%.6f total=%.6f" %
                (task, model.dim, epoch, row['L_S'], row['L_A'], row['L_C'],
                 row['total'])
            )
        return skipped

    def batch_losses(self, model, samples, weights, parameters, contrast):
        """Forward one mini-batch in train mode and return its loss terms."""
        inputs = np.stack([
            dimension_values(s.input.frames, model.dim) for s in samples
        ])
        targets = np.stack([
            dimension_values(s.target.frames, model.dim) for s in samples
        ])
        trace = decode_sequence(model, encode(model, inputs), targets,
                                samples[0].aux_rule, TRAIN)
        l_s = reconstruction_loss(trace, targets)
        l_a = alignment_loss(trace) if model.attention == LAS else None
        l_c = None
        if contrast:
            z = project(model.projection, trace.representation())
            l_c = lcl_loss(contrast_representations(z),
                           self.config['temperature'])
        return {
            'L_S': l_s,
            'L_A': l_a,
            'L_C': l_c,
            'total': total_loss(l_s, l_a, l_c, weights, parameters)
        }

    def evaluate_reconstruction(self, model, dataset, split='test'):
        """Mean L_S per dimension when decoding in test mode.

        :param GaitModel model: Trained model
        :param GaitDataset dataset: Dataset
        :param str split: Split to evaluate
        """
        sequences = dataset.sequences(
            self.config['sequence_length'], self.config['head_tail_discard'],
            self.config['step'], split=split, logger=self.logger
        )
        contexts = dataset.contexts(self.config['head_tail_discard'])
        rng = np.random.default_rng([self.config['seed'], 2])
        samples = [
            build_pretext(model.task, s, contexts[(s.identity, s.recording)],
                          rng)
            for s in sequences
        ]
        samples = [s for s in samples if not s.skipped]
        losses = {}
        for dim in DIMENSIONS:
            if not samples:
                losses[dim] = None
                continue
            inputs = np.stack([dimension_values(s.input.frames, dim)
                               for s in samples])
            targets = np.stack([dimension_values(s.target.frames, dim)
                                for s in samples])
            trace = decode_sequence(model[dim], encode(model[dim], inputs),
                                    phase=TEST)
            losses[dim] = reconstruction_loss(trace, targets).item()
        return losses