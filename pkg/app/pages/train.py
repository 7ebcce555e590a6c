"""``train``: fit one leave-participants-out fold and write the checkpoint and history."""
import logging
import os

from app.pages.common import load_manifest, report_header, selected_split
from app.util import util
from app.util.data_processing import build_noise_pool
from app.util.model import count_macs, count_params, save_checkpoint
from app.util.report_graphs import plot_loss_curves, save_figure
from app.util.train_eval import select_best_epoch, train

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = 'model.stlm'


def add_arguments(parser) -> None:
    parser.add_argument('--manifest', required=True, help='manifest file or corpus directory')
    parser.add_argument('--out', required=True, help='run directory for checkpoint, history and report')
    parser.add_argument('--no-figures', action='store_true', help='skip the HTML loss curve')


def run(args, cfg) -> dict:
    manifest = load_manifest(args.manifest)
    split = selected_split(manifest, cfg)
    logger.info("fold %d: holding out %s", split.fold_id, sorted(split.test_participants))
    pool = build_noise_pool(manifest, split.train_participants)
    model, history = train(manifest, split, cfg.model, cfg.train, pool)

    util.ensure_dir(args.out)
    checkpoint = save_checkpoint(model, os.path.join(args.out, CHECKPOINT_NAME))
    history_records = history.to_dict(orient='records')
    util.write_json(os.path.join(args.out, 'history.json'), {'history': history_records})
    if not args.no_figures:
        save_figure(plot_loss_curves(history), os.path.join(args.out, 'loss_curves.html'), 'loss-curves')

    report = {
        **report_header(cfg),
        'split': split.describe(),
        'checkpoint': os.path.basename(checkpoint),
        'best_epoch': select_best_epoch(history),
        'epochs_run': len(history),
        'best_val_loss': float(history['val_loss'].min()),
        'params': count_params(cfg.model),
        'macs': count_macs(cfg.model),
    }
    util.write_json(os.path.join(args.out, 'train_report.json'), report)
    return report
