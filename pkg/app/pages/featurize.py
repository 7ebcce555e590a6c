"""``featurize``: one binary feature file per manifest segment."""
import logging
import os
from concurrent.futures import ThreadPoolExecutor

from app.pages.common import load_manifest, report_header
from app.util import util
from app.util.features import segment_features, write_feature_file

logger = logging.getLogger(__name__)

FEATURE_SUFFIX = '.stlf'


def add_arguments(parser) -> None:
    parser.add_argument('--manifest', required=True, help='manifest file or corpus directory')
    parser.add_argument('--out', required=True, help='feature directory')


def run(args, cfg) -> dict:
    manifest = load_manifest(args.manifest)
    feature_set = cfg.features.feature_set

    def one(seg):
        fm = segment_features(seg, feature_set, cfg.dsp)
        rel_path = os.path.splitext(seg.source)[0] + FEATURE_SUFFIX
        write_feature_file(os.path.join(args.out, rel_path), fm)
        return rel_path

    segments = manifest.load_segments()
    if cfg.train.deterministic or cfg.synth.workers == 1:
        written = [one(seg) for seg in segments]
    else:
        with ThreadPoolExecutor(max_workers=cfg.synth.workers) as pool:
            written = list(pool.map(one, segments))
    logger.info("wrote %d %s feature files to %s", len(written), feature_set.value, args.out)
    report = {**report_header(cfg), 'feature_set': feature_set.value, 'n_files': len(written),
              'shape': [feature_set.n_rows, 79]}
    util.write_json(os.path.join(args.out, 'featurize_report.json'), report)
    return report
