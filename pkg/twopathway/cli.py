"""
Command-line entry point.

    python twopath.py train-fine --profile config/desk.conf --epochs 5 --subset 2000
    python twopath.py train-coarse --imitate --fine-ckpt runs/checkpoints/fine-primary-....tpck --sigma 2.0
    python twopath.py sweep --figure 5d
    python twopath.py gradcheck

Exit status: 0 success, 1 error, 2 usage error, 3 training divergence,
130 interrupted.
"""

import argparse
import logging
import sys
from typing import List, Optional

from . import __version__
from .config import Settings, load_config
from .errors import DivergenceError, TrainingInterrupted, TwoPathError
from .harness.commands import COMMANDS, RunContext, cmd_gradcheck
from .harness.gradchecks import DEFAULT_INSTANCES
from .harness.registry import RunRegistry
from .harness.runtime import ShutdownHandler, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_INTERRUPTED = 130


def _common_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--profile', type=str,
                        help='Experiment profile (default: $TWOPATH_PROFILE or config/desk.conf)')
    parent.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='Override a profile key, e.g. --set train_fine.epochs=5 (repeatable)')
    parent.add_argument('--seed', type=int, help='Run a single seed instead of experiment.seeds')
    parent.add_argument('--output', type=str, help='Output directory (experiment.output_dir)')
    parent.add_argument('--verbose', action='store_true', help='Debug logging')
    return parent


def _dataset_option(parser: argparse.ArgumentParser):
    parser.add_argument('--dataset', choices=['primary', 'bias'], default='primary',
                        help='primary = data.* dataset, bias = CIFAR-100 super-class subset (bias.*)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='twopath', description='Two-pathway (FineNet/CoarseNet + RBM) experiments',
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)
    common = _common_options()

    fine = sub.add_parser('train-fine', parents=[common], help='Train FineNet (cross-entropy)')
    fine.add_argument('--epochs', type=int, help='Shorthand for --set train_fine.epochs=N')
    fine.add_argument('--subset', type=int, help='Cap the training split at N images, class-balanced')
    _dataset_option(fine)

    coarse = sub.add_parser('train-coarse', parents=[common], help='Train CoarseNet, optionally imitating FineNet')
    coarse.add_argument('--imitate', action='store_true', help='Imitate a frozen FineNet (needs --fine-ckpt)')
    coarse.add_argument('--fine-ckpt', type=str, help='FineNet checkpoint to imitate')
    coarse.add_argument('--epochs', type=int, help='Shorthand for --set train_coarse.epochs=N')
    coarse.add_argument('--subset', type=int, help='Cap the training split at N images, class-balanced')
    view = coarse.add_mutually_exclusive_group()
    view.add_argument('--sigma', type=float, help='Low-pass input with this Gaussian STD')
    view.add_argument('--binarize', action='store_true', help='Binarized grayscale input')
    _dataset_option(coarse)

    rbm = sub.add_parser('train-rbm', parents=[common], help='Train the associative RBM')
    rbm.add_argument('--task', choices=['robustness', 'bias'], required=True,
                     help='robustness: pairs [gC||gF]; bias: pairs [gC||context]')
    rbm.add_argument('--fine-ckpt', type=str, help='FineNet checkpoint (robustness task)')
    rbm.add_argument('--coarse-ckpt', type=str, help='CoarseNet checkpoint')
    rbm.add_argument('--epochs', type=int, help='Shorthand for --set rbm.epochs=N')

    sweep = sub.add_parser('sweep', parents=[common], help='Run a figure sweep and write a long-form CSV')
    sweep.add_argument('--figure', type=str, required=True, help='4a-4e, 5a-5f, 6a, 6b')
    sweep.add_argument('--workers', type=int, help='Parallel seed workers (experiment.workers)')

    grad = sub.add_parser('gradcheck', help='Finite-difference check of every analytic gradient')
    grad.add_argument('--instances', type=int, default=DEFAULT_INSTANCES,
                      help=f'Random instances per check (default: {DEFAULT_INSTANCES})')
    grad.add_argument('--seed', type=int, default=0)
    grad.add_argument('--verbose', action='store_true', help='Debug logging')

    ev = sub.add_parser('eval', parents=[common], help='Accuracy of a pathway checkpoint on the test split')
    ev.add_argument('--ckpt', type=str, required=True, help='Pathway checkpoint')
    ev.add_argument('--noise', choices=['uniform', 'salt_pepper', 'fgsm'], help='Corrupt the test images')
    ev.add_argument('--level', type=float, default=0.0, help='Noise level (U, p or epsilon)')
    ev.add_argument('--fine-ckpt', type=str, help='FineNet to attack for FGSM')
    ev.add_argument('--labels', choices=['fine', 'coarse'], default='fine')
    _dataset_option(ev)

    preview = sub.add_parser('preview', parents=[common], help='Write PPM/PGM previews of the input views')
    preview.add_argument('--count', type=int, default=8)
    preview.add_argument('--noise', choices=['uniform', 'salt_pepper', 'fgsm'], default='uniform')
    preview.add_argument('--level', type=float, default=0.5)

    report = sub.add_parser('report', parents=[common], help='Mean/std over seeds of a sweep CSV')
    report.add_argument('csv', type=str, help='Long-form metrics CSV')
    return parser


def command_overrides(args: argparse.Namespace) -> List[str]:
    """Translate command shorthands into profile overrides (explicit --set wins)."""
    overrides = []
    if getattr(args, 'output', None):
        overrides.append(f"experiment.output_dir={args.output}")
    if getattr(args, 'seed', None) is not None:
        overrides.append(f"experiment.seeds={args.seed}")
    if getattr(args, 'subset', None):
        overrides.append(f"data.train_limit={args.subset}")
    if getattr(args, 'workers', None):
        overrides.append(f"experiment.workers={args.workers}")
    if getattr(args, 'epochs', None) is not None:
        section = {'train-fine': 'train_fine', 'train-coarse': 'train_coarse', 'train-rbm': 'rbm'}[args.command]
        overrides.append(f"{section}.epochs={args.epochs}")
    if getattr(args, 'sigma', None) is not None:
        overrides += ["coarse.view=lowpass", f"coarse.sigma={args.sigma}"]
    if getattr(args, 'binarize', False):
        overrides.append("coarse.view=binarized")
    return overrides + list(getattr(args, 'overrides', []))


def command_label(args: argparse.Namespace) -> str:
    if args.command == 'sweep':
        return f"sweep-{args.figure.lower()}"
    if args.command == 'train-rbm':
        return f"train-rbm-{args.task}"
    return args.command


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == 'train-coarse' and args.imitate and not args.fine_ckpt:
        parser.error("--imitate requires --fine-ckpt")

    settings = Settings.from_env()
    level = "DEBUG" if args.verbose else settings.log_level
    setup_logging(level)

    if args.command == 'gradcheck':
        return cmd_gradcheck(args)

    registry, experiment_id, shutdown = None, "", None
    try:
        config = load_config(args.profile or settings.profile, command_overrides(args), settings)
        setup_logging(level, config.output_dir)
        experiment_id = config.experiment_id(command_label(args))
        registry = RunRegistry(config.output_dir)
        config_copy = registry.start(experiment_id, command_label(args), config.to_yaml())
        logger.info(f"Experiment {experiment_id} (config copy: {config_copy})")
        shutdown = ShutdownHandler()
        status = COMMANDS[args.command](args, RunContext(config, registry, shutdown, experiment_id))
        registry.finish(experiment_id, "completed" if status == EXIT_OK else "failed")
        return status
    except TrainingInterrupted as e:
        logger.warning(f"⚠️  {e}")
        return _finish(registry, experiment_id, "interrupted", EXIT_INTERRUPTED)
    except KeyboardInterrupt:
        logger.warning("⚠️  Interrupted")
        return _finish(registry, experiment_id, "interrupted", EXIT_INTERRUPTED)
    except DivergenceError as e:
        logger.error(f"✗ Training diverged at epoch {e.epoch}, batch {e.batch} (lr={e.lr:g}): {e}")
        return _finish(registry, experiment_id, "diverged", EXIT_DIVERGED)
    except TwoPathError as e:
        logger.error(f"✗ {e}")
        return _finish(registry, experiment_id, "failed", EXIT_ERROR)
    finally:
        if shutdown is not None:
            shutdown.restore()


def _finish(registry: Optional[RunRegistry], experiment_id: str, status: str, code: int) -> int:
    if registry is not None and experiment_id:
        registry.finish(experiment_id, status)
    return code


def run():
    sys.exit(main())
