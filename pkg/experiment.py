import csv
import json
import os

import numpy as np

from checkpoint import assign_parameters, load_checkpoint, save_checkpoint
from evaluation import MatchProtocol, evaluate_classifier, \
    evaluate_protocol, metrics, write_csv, write_metrics_json
from features_reid import HIDDEN, RecognitionNet, encoding_variant, \
    extract_encodings, fuse_encoding_sets, read_encodings, \
    train_recognizer, write_encodings
from gait_errors import CheckpointError, ConfigError, GaitError, ShapeError
from gait_trainer import LOSS_COLUMNS, GaitTrainer
from seq2seq_gait import LAS, NO_ATTENTION, TEST, GaitModel, \
    decode_sequence, encode, window_mass
from skeleton_io import DIMENSIONS, TASKS, dimension_values, load_dataset, \
    save_dataset
from synthetic_gait import generate_synthetic

# sweep axis -> (config key, value type)
SWEEP_AXES = {
    'tau': ('temperature', float),
    'temperature': ('temperature', float),
    'interval': ('interval', int),
    'attention': ('attention', str),
    'lambda_c': ('lambda_c', float)
}

SWEEP_COLUMNS = ('axis', 'value', 'rank1', 'nauc', 'final_ls', 'error')
ABLATION_COLUMNS = ('configuration', 'seed', 'rank1', 'nauc', 'final_ls',
                    'error')


class GaitExperiment:
    """GaitExperiment class

    Orchestrate training, feature extraction, evaluation and diagnostics
    for one resolved run configuration. All artifacts are written below
    the configured output directory together with a config echo.
    """

    def __init__(self, config, logger):
        """Constructor

        :param RunConfig config: Resolved run configuration
        :param Logger logger: Application logger
        """
        self.config = config
        self.logger = logger
        self.trainer = GaitTrainer(config, logger)

    @property
    def output(self):
        return self.config['output']

    def path(self, *parts):
        return os.path.join(self.output, *parts)

    def prepare_output(self):
        os.makedirs(self.output, exist_ok=True)
        with open(self.path('config.json'), 'w', encoding='utf-8') as fh:
            json.dump(self.config.to_dict(), fh, indent=2, sort_keys=True)

    # datasets

    def synth(self, identities=5, recordings=4, frames=60, num_joints=10,
              noise=0.01, conditions=None):
        """Generate a synthetic dataset and write it.

        Return (dataset, manifest path).
        """
        self.prepare_output()
        dataset = generate_synthetic(
            identities, recordings, frames, num_joints, noise,
            self.config['seed'], conditions=conditions
        )
        dataset.sequence_length = self.config['sequence_length']
        path = self.config['dataset'] or self.path('synthetic.json')
        save_dataset(dataset, path)
        self.logger.info("Wrote %d recordings to '%s'" %
                         (len(dataset.recordings), path))
        return dataset, path

    def load_dataset(self):
        if not self.config['dataset']:
            raise ConfigError("No dataset given (set 'dataset')")
        dataset = load_dataset(self.config['dataset'], self.logger)
        if self.config['center_joint'] is not None:
            dataset.center_joint = self.config['center_joint']
        self.check_joints(dataset)
        return dataset

    def check_joints(self, dataset):
        expected = self.config['num_joints']
        if expected is not None and expected != dataset.num_joints:
            raise ShapeError("Config expects %d joints, dataset has %d" %
                             (expected, dataset.num_joints))

    # training

    def train(self, dataset):
        """Train one model per configured task.

        Return a list of (model, TrainingResult).
        """
        self.prepare_output()
        self.check_joints(dataset)
        trained = []
        for task in self.config['tasks']:
            model = self.trainer.build_model(task, dataset.num_joints)
            result = self.trainer.train(model, dataset)
            if result.skipped:
                self.logger.warning(
                    "Task '%s' skipped %d samples without future frames" %
                    (task, result.skipped)
                )
            os.makedirs(self.path(task), exist_ok=True)
            save_checkpoint(self.path(task, 'checkpoint.json'),
                            model.parameters(), self.checkpoint_config(model))
            for dim in DIMENSIONS:
                write_csv(self.path(task, 'loss_%s.csv' % dim), LOSS_COLUMNS,
                          result.curves[dim])
            self.logger.info("Task '%s': L_S %.6f -> %.6f" %
                             (task, result.initial(), result.final()))
            trained.append((model, result))
        return trained

    def checkpoint_config(self, model):
        return {'run': self.config.to_dict(), 'model': model.describe()}

    def load_model(self, path):
        """Rebuild a trained model from its checkpoint.

        Return (model, checkpoint config).
        """
        config, arrays = load_checkpoint(path)
        if 'model' not in config:
            raise CheckpointError("Checkpoint '%s' holds no gait model" % path)
        model = GaitModel.from_description(config['model'])
        assign_parameters(model.parameters(), arrays)
        return model, config

    def load_models(self, paths=None):
        if not paths:
            paths = [self.path(task, 'checkpoint.json')
                     for task in self.config['tasks']]
        return [self.load_model(path) for path in paths]

    # features

    def extract(self, models, dataset, lambda_c=None, split=None):
        """Extract (and fuse) encodings of every sequence of a dataset.

        The sequence length comes from the models, so checkpoints trained
        on another dataset can encode this one.

        :param list models: Trained GaitModels, one per task
        :param GaitDataset dataset: Dataset to encode
        :param float lambda_c: LCL weight the models were trained with
        :param str split: Optional split filter
        """
        lengths = set(m.sequence_length for m in models)
        if len(lengths) != 1:
            raise ShapeError("Models disagree on sequence length: %s" %
                             sorted(lengths))
        if lambda_c is None:
            lambda_c = self.config['lambda_c']
        feature = self.config['feature']
        sequences = dataset.sequences(
            lengths.pop(), self.config['head_tail_discard'],
            self.config['step'], split=split, logger=self.logger
        )
        encoding_sets = [
            extract_encodings(model, sequences, feature,
                              encoding_variant(feature, lambda_c))
            for model in sorted(models, key=lambda m: TASKS.index(m.task))
        ]
        encodings = fuse_encoding_sets(encoding_sets)
        self.prepare_output()
        write_encodings(self.path('encodings.jsonl'), encodings)
        self.logger.info("Wrote %d encodings of width %d" %
                         (len(encodings),
                          encodings[0].width if encodings else 0))
        return encodings

    # evaluation

    def evaluate(self, encodings, strategies=None, protocols=None,
                 extra=None):
        """Train the recognizer on the training split, evaluate the test
        split and run gallery matching protocols.

        Return the metrics document (also written as metrics.json/csv).

        :param list encodings: Labelled GaitEncodings
        :param list strategies: Strategies to evaluate (default: configured)
        :param list protocols: Protocol names (default: all present)
        :param dict extra: Extra fields for the metrics document
        """
        if isinstance(encodings, str):
            encodings = read_encodings(encodings)
        self.prepare_output()
        train = [e for e in encodings if e.split == 'train']
        test = [e for e in encodings if e.split == 'test']
        if not train or not test:
            raise ConfigError(
                "Evaluation needs train and test encodings, got %d and %d" %
                (len(train), len(test))
            )
        strategy = self.config['strategy']
        strategies = strategies or [strategy]
        if strategy not in strategies:
            strategies = [strategy] + list(strategies)
        num_classes = max(e.identity for e in encodings)

        document = {
            'strategy': strategy,
            'variant': encodings[0].variant,
            'tasks': list(encodings[0].tasks),
            'strategies': {}
        }
        rows = []
        for name in strategies:
            net, history = train_recognizer(
                train, name, self.config['recognizer_hidden'],
                self.config['recognizer_epochs'],
                self.config['recognizer_learning_rate'], self.config['seed'],
                num_classes, self.logger
            )
            _, _, curve = evaluate_classifier(net, test, name)
            result = metrics(curve)
            result['recognizer_loss'] = history[-1] if history else None
            document['strategies'][name] = result
            rows.append({'evaluation': name, 'rank1': result['rank1'],
                         'nauc': result['nauc']})
            if name == strategy:
                document.update(rank1=result['rank1'], nauc=result['nauc'],
                                cmc=result['cmc'])
                save_checkpoint(self.path('recognizer.json'),
                                net.state(),
                                {'recognizer': net.describe()})

        document['protocols'] = {}
        for protocol in self.protocols(test, protocols):
            result = metrics(evaluate_protocol(protocol, test))
            document['protocols'][protocol.name] = result
            rows.append({'evaluation': protocol.name,
                         'rank1': result['rank1'], 'nauc': result['nauc']})

        document.update(extra or {})
        write_metrics_json(self.path('metrics.json'), document)
        write_csv(self.path('metrics.csv'), ('evaluation', 'rank1', 'nauc'),
                  rows)
        self.logger.info("Rank-1 %.2f%%, nAUC %.2f%% (%s)" %
                         (document['rank1'], document['nauc'], strategy))
        return document

    def protocols(self, encodings, names=None):
        """Matching protocols: given names, or every probe condition against
        every gallery condition present in the test encodings.
        """
        if names:
            return [MatchProtocol.parse(name) for name in names]
        probe_conditions = sorted(set(
            e.condition for e in encodings if e.role == 'probe'
        ), key=str)
        gallery_conditions = sorted(set(
            e.condition for e in encodings if e.role == 'gallery'
        ), key=str)
        return [MatchProtocol(p, g) for p in probe_conditions
                for g in gallery_conditions]

    def run(self, dataset=None):
        """Train, extract and evaluate in one artifact directory."""
        if dataset is None:
            dataset = self.load_dataset()
        trained = self.train(dataset)
        encodings = self.extract([model for model, _ in trained], dataset)
        return self.evaluate(encodings, extra={
            'initial_ls': float(np.mean([r.initial() for _, r in trained])),
            'final_ls': float(np.mean([r.final() for _, r in trained])),
            'test_ls': self.reconstruction_report(
                [model for model, _ in trained], dataset
            )
        })

    def reconstruction_report(self, models, dataset):
        """Mean test-mode L_S on the test split per task (None if empty)."""
        losses = {}
        for model in models:
            values = [
                v for v in self.trainer.evaluate_reconstruction(
                    model, dataset, split='test'
                ).values() if v is not None
            ]
            losses[model.task] = float(np.mean(values)) if values else None
        return losses

    # experiments

    def variant(self, output, **overrides):
        """Experiment for a modified config writing below ``output``."""
        if overrides.get('attention', self.config['attention']) != LAS:
            overrides['lambda_a'] = 0.0
        if overrides.get('attention') == NO_ATTENTION:
            overrides['feature'] = HIDDEN
        config = self.config.updated(output=output, **overrides)
        return GaitExperiment(config, self.logger)

    def sweep(self, axis, values, dataset=None):
        """Run train + evaluate once per value of a config axis.

        Failing values are recorded and the sweep continues.

        :param str axis: 'tau', 'interval', 'attention' or 'lambda_c'
        :param list values: At least two values
        :param GaitDataset dataset: Dataset (default: configured)
        """
        if axis not in SWEEP_AXES:
            raise ConfigError("Unknown sweep axis '%s' (use %s)" %
                              (axis, ', '.join(sorted(SWEEP_AXES))))
        if len(values) < 2:
            raise ConfigError("A sweep needs at least 2 values, got %d" %
                              len(values))
        key, cast = SWEEP_AXES[axis]
        try:
            values = [cast(v) for v in values]
        except ValueError as e:
            raise ConfigError("Invalid %s value: %s" % (axis, e))
        if dataset is None:
            dataset = self.load_dataset()
        self.prepare_output()

        rows = []
        for value in values:
            row = {'axis': axis, 'value': value, 'error': ''}
            try:
                experiment = self.variant(
                    self.path('sweep', '%s=%s' % (key, value)),
                    **{key: value}
                )
                result = experiment.run(dataset)
                row.update(rank1=result['rank1'], nauc=result['nauc'],
                           final_ls=result['final_ls'])
            except GaitError as e:
                self.logger.error("Sweep %s=%s failed: %s" % (key, value, e))
                row['error'] = str(e)
            rows.append(row)
        write_csv(self.path('sweep_%s.csv' % key), SWEEP_COLUMNS, rows)
        return rows

    def ablation_ladder(self):
        """Ablation configurations, from the bare encoder to CAGEs."""
        lambda_a = self.config['lambda_a'] or 0.5
        lambda_c = self.config['lambda_c'] or 0.5
        hidden = dict(feature=HIDDEN, lambda_c=0.0, tasks=['reverse'])
        return [
            ('ge_only', dict(hidden, attention=NO_ATTENTION, epochs=0)),
            ('ge_gd_plain', dict(hidden, attention=NO_ATTENTION,
                                 tasks=['plain'])),
            ('rev_rec', dict(hidden, attention=NO_ATTENTION)),
            ('rev_rec_las', dict(hidden, attention=LAS, lambda_a=lambda_a)),
            ('ages', dict(attention=LAS, lambda_a=lambda_a, lambda_c=0.0,
                          feature='context', tasks=['reverse'])),
            ('cages', dict(attention=LAS, lambda_a=lambda_a,
                           lambda_c=lambda_c, feature='context',
                           tasks=['reverse']))
        ]

    def ablation(self, seeds, dataset=None):
        """Run the ablation ladder for several seeds.

        :param list seeds: Seeds
        :param GaitDataset dataset: Dataset (default: configured)
        """
        if dataset is None:
            dataset = self.load_dataset()
        self.prepare_output()
        rows = []
        for name, overrides in self.ablation_ladder():
            for seed in seeds:
                row = {'configuration': name, 'seed': seed, 'error': ''}
                try:
                    experiment = self.variant(
                        self.path('ablation', '%s_seed%d' % (name, seed)),
                        seed=seed, **overrides
                    )
                    result = experiment.run(dataset)
                    row.update(rank1=result['rank1'], nauc=result['nauc'],
                               final_ls=result['final_ls'])
                except GaitError as e:
                    self.logger.error("Ablation %s seed %d failed: %s" %
                                      (name, seed, e))
                    row['error'] = str(e)
                rows.append(row)
        write_csv(self.path('ablation.csv'), ABLATION_COLUMNS, rows)
        return rows

    # diagnostics

    def attention_dump(self, models, dataset):
        """Mean f x f alignment matrix per task and dimension.

        Decoding runs in test mode over the test split (all sequences if
        the dataset has no test split). Return
        {task: {dim: {'matrix', 'window_mass'}}}.
        """
        self.prepare_output()
        split = 'test' if dataset.recordings_in('test') else None
        summary = {}
        for model in models:
            if model.attention == NO_ATTENTION:
                raise ConfigError(
                    "Task '%s' was trained without attention, nothing to "
                    "dump" % model.task
                )
            sequences = dataset.sequences(
                model.sequence_length, self.config['head_tail_discard'],
                self.config['step'], split=split, logger=self.logger
            )
            if not sequences:
                raise ConfigError("No sequences to decode")
            summary[model.task] = {}
            for dim in DIMENSIONS:
                values = np.stack([dimension_values(s.frames, dim)
                                   for s in sequences])
                trace = decode_sequence(model[dim], encode(model[dim], values),
                                        phase=TEST)
                matrix = trace.alignment_matrix().mean(axis=0)
                mass = window_mass(matrix, model[dim].window)
                path = self.path('attention_%s_%s.csv' % (model.task, dim))
                with open(path, 'w', encoding='utf-8', newline='') as fh:
                    csv.writer(fh, lineterminator='\n').writerows(
                        matrix.tolist()
                    )
                summary[model.task][dim] = {'matrix': matrix,
                                            'window_mass': mass}
                self.logger.info("%s %s: window mass %.4f" %
                                 (model.task, dim, mass))
        write_metrics_json(self.path('attention_summary.json'), {
            task: {dim: entry['window_mass'] for dim, entry in dims.items()}
            for task, dims in summary.items()
        })
        return summary


def load_recognizer(path):
    """Rebuild a recognizer from its checkpoint."""
    config, arrays = load_checkpoint(path)
    if 'recognizer' not in config:
        raise CheckpointError("Checkpoint '%s' holds no recognizer" % path)
    net = RecognitionNet.from_description(config['recognizer'])
    assign_parameters(net.state(), arrays)
    return net
