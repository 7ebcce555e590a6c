"""``annotate``: cut a continuous recording into labeled segments and append them to a corpus."""
import json
import logging
import os
import sys

import pandas as pd

from app.util import util
from app.util.annotator import annotate_recording
from app.util.data_processing import MANIFEST_NAME, CorpusManifest, load_and_preprocess_manifest
from app.util.errors import ConfigError
from app.util.synthgen import Label

logger = logging.getLogger(__name__)


def add_arguments(parser) -> None:
    parser.add_argument('--wav', required=True, help='continuous recording')
    parser.add_argument('--label', required=True, help='pattern1, pattern2 or nopattern:<kind>')
    parser.add_argument('--participant', required=True)
    parser.add_argument('--session', default=None, help='session id; defaults to the WAV file name')
    parser.add_argument('--out', required=True, help='corpus directory to append to')


def run(args, cfg) -> dict:
    try:
        label = Label.parse(args.label)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    session = args.session or os.path.splitext(os.path.basename(args.wav))[0]
    wave = util.read_wav(args.wav)
    annotation = annotate_recording(wave, label, cfg.annotator, cfg.dsp, args.participant, session)

    records = [{'path': f"{args.participant}/{session}_{i:04d}.wav", 'participant': args.participant,
                'label': label.cls.slug, 'kind': None if label.is_pattern else label.kind.value,
                'augmented': False, 'split_hint': 'clean'} for i in range(len(annotation.segments))]

    # the merged manifest rejects duplicate paths before any segment is written
    manifest_path = os.path.join(args.out, MANIFEST_NAME)
    manifest = CorpusManifest.from_records(records, os.path.abspath(args.out))
    if os.path.isfile(manifest_path):
        existing = load_and_preprocess_manifest(manifest_path)
        merged = pd.concat([existing.entries, manifest.entries], ignore_index=True)
        manifest = CorpusManifest(merged, existing.root)

    for record, seg in zip(records, annotation.segments):
        util.write_wav(os.path.join(args.out, record['path']), seg.wave)
    manifest.write(manifest_path)

    summary = {'session': session, 'label': str(label), 'n_peaks': len(annotation.peaks),
               'n_segments': len(annotation.segments), 'n_dropped': annotation.n_dropped}
    # drop counts go to stdout for the caller
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return summary
