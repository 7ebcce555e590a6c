"""``eval``: score a checkpoint on the held-out participants, clean and under noise."""
import logging
import os

from app.pages.common import load_manifest, report_header, selected_split, sibling_path
from app.util import util
from app.util.data_processing import build_noise_pool
from app.util.errors import ConfigError
from app.util.model import load_checkpoint
from app.util.report_graphs import plot_confusion_matrix, save_figure
from app.util.train_eval import evaluate, evaluate_noisy

logger = logging.getLogger(__name__)


def add_arguments(parser) -> None:
    parser.add_argument('--checkpoint', required=True)
    parser.add_argument('--manifest', required=True, help='manifest file or corpus directory')
    parser.add_argument('--out', required=True, help='JSON report path')
    parser.add_argument('--all-participants', action='store_true',
                        help='score every segment instead of the configured fold\'s test participants')
    parser.add_argument('--no-figures', action='store_true')


def run(args, cfg) -> dict:
    model = load_checkpoint(args.checkpoint)
    feature_set = cfg.features.feature_set
    if model.cfg.input_F != feature_set.n_rows:
        raise ConfigError(f"checkpoint expects {model.cfg.input_F} feature rows, "
                          f"feature set {feature_set.value} has {feature_set.n_rows}", args.checkpoint)
    manifest = load_manifest(args.manifest)
    if args.all_participants:
        participants, split_info = manifest.participants, None
    else:
        split = selected_split(manifest, cfg)
        participants, split_info = sorted(split.test_participants), split.describe()

    test = manifest.subset(manifest.entries['participant'].isin(participants))
    segments = test.load_segments()
    pool = build_noise_pool(manifest, participants)
    if not len(pool):
        logger.warning("no noise segments among evaluated participants; using the whole corpus")
        pool = build_noise_pool(manifest)

    clean = evaluate(model, segments, feature_set)
    noisy = evaluate_noisy(model, segments, pool, cfg.sweep.snr_levels, cfg.sweep.seed, feature_set)
    logger.info("clean balanced accuracy %.3f, noisy %.3f", clean.balanced_accuracy, noisy.balanced_accuracy)

    util.ensure_dir(os.path.dirname(os.path.abspath(args.out)))
    clean.confusion_frame().to_csv(sibling_path(args.out, '_confusion.csv'))
    noisy.confusion_frame().to_csv(sibling_path(args.out, '_confusion_noisy.csv'))
    if not args.no_figures:
        save_figure(plot_confusion_matrix(clean.confusion, 'Clean test segments'),
                    sibling_path(args.out, '_confusion.html'), 'confusion')

    report = {
        **report_header(cfg),
        'split': split_info,
        'participants': participants,
        'balanced_accuracy': clean.balanced_accuracy,
        'clean': clean.to_dict(),
        'noisy': {**noisy.to_dict(), 'snr_levels': list(cfg.sweep.snr_levels)},
    }
    util.write_json(args.out, report)
    return report
