import argparse
import logging
import sys

from experiment import GaitExperiment
from gait_errors import GaitError
from run_config import DEFAULTS, RunConfig

INT_KEYS = ('sequence_length', 'hidden_size', 'window', 'num_joints',
            'batch_size', 'interval', 'epochs', 'seed', 'recognizer_hidden',
            'recognizer_epochs', 'head_tail_discard', 'step', 'center_joint',
            'contrast_hidden')
FLOAT_KEYS = ('lambda_s', 'lambda_a', 'lambda_c', 'beta', 'temperature',
              'learning_rate', 'adam_beta1', 'adam_beta2', 'clip_norm',
              'recognizer_learning_rate')
LIST_KEYS = ('tasks',)


def config_arguments():
    """Parent parser with one flag per config key."""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--config', help="JSON config file")
    parser.add_argument('--out', dest='output', default=argparse.SUPPRESS,
                        help="Output directory")
    for key in sorted(DEFAULTS):
        kwargs = {'dest': key, 'default': argparse.SUPPRESS,
                  'help': "default: %s" % (DEFAULTS[key],)}
        if key in INT_KEYS:
            kwargs['type'] = int
        elif key in FLOAT_KEYS:
            kwargs['type'] = float
        elif key in LIST_KEYS:
            kwargs['nargs'] = '+'
        parser.add_argument('--%s' % key, **kwargs)
    return parser


def build_parser():
    common = config_arguments()
    parser = argparse.ArgumentParser(
        prog='gait',
        description="Self-supervised gait encoding and person "
                    "re-identification from 3D skeleton sequences"
    )
    commands = parser.add_subparsers(dest='command', required=True)

    synth = commands.add_parser('synth', parents=[common],
                                help="Generate a synthetic dataset")
    synth.add_argument('--identities', type=int, default=5)
    synth.add_argument('--recordings', type=int, default=4,
                       help="Normal-walk recordings per identity")
    synth.add_argument('--frames', type=int, default=60,
                       help="Frames per recording")
    synth.add_argument('--joints', type=int, default=10)
    synth.add_argument('--noise', type=float, default=0.01)
    synth.add_argument('--conditions', nargs='*', default=[],
                       help="Extra probe conditions (bg, cl)")

    commands.add_parser('train', parents=[common],
                        help="Train the gait models of every task")

    extract = commands.add_parser('extract', parents=[common],
                                  help="Extract (fused) gait encodings")
    extract.add_argument('--checkpoint', nargs='+',
                         help="Model checkpoints, one per task")

    evaluate = commands.add_parser('evaluate', parents=[common],
                                   help="Recognizer and matching metrics")
    evaluate.add_argument('--encodings', help="Encodings JSONL")
    evaluate.add_argument('--protocol', nargs='*', default=None,
                          help="Matching protocols <probe>-<gallery>")
    evaluate.add_argument('--strategies', nargs='*', default=None,
                          choices=['AP', 'SC'])

    attn = commands.add_parser('attn-dump', parents=[common],
                               help="Mean attention matrices")
    attn.add_argument('--checkpoint', nargs='+')

    sweep = commands.add_parser('sweep', parents=[common],
                                help="Train and evaluate per axis value")
    sweep.add_argument('--axis', required=True,
                       choices=['tau', 'temperature', 'interval',
                                'attention', 'lambda_c'])
    sweep.add_argument('--values', nargs='+', required=True)

    ablation = commands.add_parser('ablation', parents=[common],
                                   help="Run the ablation ladder")
    ablation.add_argument('--seeds', nargs='+', type=int, default=[0, 1, 2])

    commands.add_parser('run', parents=[common],
                        help="Train, extract and evaluate")
    return parser


def overrides(args):
    """Config values given explicitly on the command line."""
    return {key: getattr(args, key) for key in DEFAULTS if hasattr(args, key)}


def cmd_synth(experiment, args):
    experiment.synth(args.identities, args.recordings, args.frames,
                     args.joints, args.noise, args.conditions)


def cmd_train(experiment, args):
    experiment.train(experiment.load_dataset())


def cmd_extract(experiment, args):
    loaded = experiment.load_models(args.checkpoint)
    models = [model for model, _ in loaded]
    lambda_c = loaded[0][1].get('run', {}).get('lambda_c')
    experiment.extract(models, experiment.load_dataset(), lambda_c)


def cmd_evaluate(experiment, args):
    encodings = args.encodings or experiment.path('encodings.jsonl')
    experiment.evaluate(encodings, args.strategies, args.protocol)


def cmd_attn_dump(experiment, args):
    models = [model for model, _ in experiment.load_models(args.checkpoint)]
    experiment.attention_dump(models, experiment.load_dataset())


def cmd_sweep(experiment, args):
    experiment.sweep(args.axis, args.values)


def cmd_ablation(experiment, args):
    experiment.ablation(args.seeds)


def cmd_run(experiment, args):
    experiment.run()


COMMANDS = {
    'synth': cmd_synth,
    'train': cmd_train,
    'extract': cmd_extract,
    'evaluate': cmd_evaluate,
    'attn-dump': cmd_attn_dump,
    'sweep': cmd_sweep,
    'ablation': cmd_ablation,
    'run': cmd_run
}


def main(argv=None):
    """Run a subcommand; return the process exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        format='%(asctime)s %(levelname)s %(name)s: %(message)s'
    )
    logger = logging.getLogger('gait')
    try:
        config = RunConfig.resolve(args.config, overrides(args))
        logger.setLevel(config['log_level'])
        COMMANDS[args.command](GaitExperiment(config, logger), args)
    except GaitError as e:
        logger.error("%s failed: %s" % (args.command, e))
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
