"""``bench``: parameter count, MACs and per-inference latency."""
import json
import logging
import sys
import time

import numpy as np

from app.pages.common import report_header
from app.util import util
from app.util.model import build_model, count_macs, count_params, forward_batch, load_checkpoint

logger = logging.getLogger(__name__)


def add_arguments(parser) -> None:
    parser.add_argument('--checkpoint', default=None, help='defaults to a freshly built model of the configured size')
    parser.add_argument('--repeats', type=int, default=20)
    parser.add_argument('--out', default=None, help='optional JSON report path')


def measure_latency(model, repeats: int, seed: int = 0) -> np.ndarray:
    """Wall-clock seconds of single-segment eval forwards, after one warm-up call."""
    model.eval()
    x = np.random.default_rng(seed).standard_normal((1, model.cfg.input_F, model.cfg.input_T)).astype(model.dtype)
    forward_batch(model, x)
    timings = []
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        forward_batch(model, x)
        timings.append(time.perf_counter() - t0)
    return np.array(timings)


def run(args, cfg) -> dict:
    model = load_checkpoint(args.checkpoint) if args.checkpoint else build_model(cfg.model, cfg.train.seed)
    timings = measure_latency(model, args.repeats, cfg.train.seed)
    report = {
        **report_header(cfg),
        'broadcast_axis': model.cfg.broadcast_axis.value,
        'block_channels': list(model.cfg.block_channels),
        'params': count_params(model.cfg),
        'macs': count_macs(model.cfg),
        'latency_ms_mean': float(timings.mean() * 1e3),
        'latency_ms_median': float(np.median(timings) * 1e3),
        'repeats': len(timings),
    }
    sys.stdout.write(json.dumps(report, sort_keys=True) + "\n")
    if args.out:
        util.write_json(args.out, report)
    return report
