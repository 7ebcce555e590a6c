"""``synth``: generate a synthetic participant corpus."""
import logging
import os

from app.pages.common import report_header
from app.util import util
from app.util.data_processing import class_summary
from data.etl.corpus_etl import build_corpus

logger = logging.getLogger(__name__)

SUMMARY_NAME = 'class_summary.csv'


def add_arguments(parser) -> None:
    parser.add_argument('--out', required=True, help='corpus directory')


def run(args, cfg) -> dict:
    s = cfg.synth
    manifest = build_corpus(s.n_participants, s.composition, s.seed, args.out, s.workers)
    class_summary(manifest).to_csv(os.path.join(args.out, SUMMARY_NAME))
    report = {
        **report_header(cfg),
        'n_participants': s.n_participants,
        'n_segments': len(manifest),
        'class_counts': manifest.class_counts.to_dict(),
        'label_counts': manifest.counts.to_dict(),
        'class_summary': SUMMARY_NAME,
    }
    util.write_json(os.path.join(args.out, 'synth_report.json'), report)
    return report
