"""``stream``: sliding-window detection over a continuous recording."""
import logging

from app.pages.common import report_header
from app.util import util
from app.util.model import load_checkpoint
from app.util.stream import stream_detect

logger = logging.getLogger(__name__)


def add_arguments(parser) -> None:
    parser.add_argument('--wav', required=True, help='continuous recording')
    parser.add_argument('--checkpoint', required=True)
    parser.add_argument('--out', required=True, help='JSON report path')


def run(args, cfg) -> dict:
    model = load_checkpoint(args.checkpoint)
    wave = util.read_wav(args.wav)
    events = stream_detect(wave, model, cfg.stream)
    report = {
        **report_header(cfg),
        'duration_s': wave.duration_s,
        'n_events': len(events),
        'events': [e.to_dict() for e in events],
    }
    util.write_json(args.out, report)
    return report
