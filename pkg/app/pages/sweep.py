"""``sweep``: comparison grids (robustness, model size, features, axis), fold rotation and SNR survey."""
import logging
import os

from app.pages.common import all_splits, load_manifest, report_header, selected_split, sibling_path
from app.util import experiments, report_graphs, util

logger = logging.getLogger(__name__)


def add_arguments(parser) -> None:
    parser.add_argument('--manifest', required=True, help='manifest file or corpus directory')
    parser.add_argument('--out', required=True, help='JSON report path')
    parser.add_argument('--no-figures', action='store_true')


def _figure(grid: str, result):
    if grid == 'robustness':
        return report_graphs.plot_robustness_curve(result.table)
    if grid == 'model_size':
        return report_graphs.plot_model_size(result.table)
    if grid == 'features':
        return report_graphs.plot_grid_bars(result.table, 'feature_set', 'Feature-set ablation')
    if grid == 'axis':
        return report_graphs.plot_grid_bars(result.table, 'broadcast_axis', 'Broadcast axis')
    return report_graphs.plot_grid_bars(result.table.astype({'fold_id': str}), 'fold_id', 'Participant rotation')


def run(args, cfg) -> dict:
    manifest = load_manifest(args.manifest)
    grid = cfg.sweep.grid
    logger.info("running the %s grid", grid)

    if grid == 'snr':
        table = experiments.characterize_snr(manifest)
        report = {**report_header(cfg), 'grid': grid, 'summary': experiments.snr_summary(table),
                  'table': table.to_dict(orient='records')}
        if not args.no_figures:
            report_graphs.save_figure(report_graphs.plot_snr_distribution(table), sibling_path(args.out, '.html'), 'snr')
        util.write_json(args.out, report)
        return report

    if grid == 'folds':
        splits = all_splits(manifest, cfg)
        result = experiments.cross_validate(manifest, splits, cfg.model, cfg.train, cfg.sweep.snr_levels,
                                            cfg.sweep.seed, workers=cfg.train.workers)
        split_info = [s.describe() for s in splits]
    else:
        split = selected_split(manifest, cfg)
        fold = experiments.prepare_fold(manifest, split, cfg.sweep.snr_levels, cfg.sweep.seed)
        kwargs = {'scales': cfg.sweep.scales} if grid == 'model_size' else {}
        result = experiments.GRIDS[grid](fold, cfg.model, cfg.train, **kwargs)
        split_info = split.describe()

    util.ensure_dir(os.path.dirname(os.path.abspath(args.out)))
    result.table.to_csv(sibling_path(args.out, '.csv'), index=False)
    if not args.no_figures:
        report_graphs.save_figure(_figure(grid, result), sibling_path(args.out, '.html'), f"sweep-{grid}")
    report = {**report_header(cfg), 'split': split_info, **result.to_dict()}
    util.write_json(args.out, report)
    return report
