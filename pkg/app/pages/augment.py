"""``augment``: materialize the noisy evaluation corpus at the sweep SNR levels."""
import logging

from app.pages.common import load_manifest, report_header
from app.util import util
from data.etl.noisy_corpus_etl import build_noisy_corpus

logger = logging.getLogger(__name__)


def add_arguments(parser) -> None:
    parser.add_argument('--manifest', required=True, help='clean manifest file or corpus directory')
    parser.add_argument('--out', required=True, help='noisy corpus directory')


def run(args, cfg) -> dict:
    manifest = load_manifest(args.manifest)
    noisy = build_noisy_corpus(manifest, args.out, cfg.sweep.snr_levels, cfg.sweep.seed)
    report = {**report_header(cfg), 'snr_levels': list(cfg.sweep.snr_levels), 'n_segments': len(noisy),
              'per_level': noisy.entries['split_hint'].value_counts().sort_index().to_dict()}
    util.write_json(f"{args.out}/augment_report.json", report)
    return report
