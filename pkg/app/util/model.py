"""Broadcasting residual classifier in plain numpy with hand-written backprop.

Activations are laid out (N, C, A, B): A is the axis that gets pooled and
broadcast back (time for the temporal variant, features for the feature
variant), B the axis that survives pooling. A feature matrix (F x T) is
transposed into that layout on the way in.

Per block::

    g   = relu(bn(pointwise(depthwise_A(x))))        (N, C, A, B)
    r   = mean_A(g)                                  (N, C, 1, B)
    q   = relu(pointwise(depthwise_B(inorm(r))))     (N, C, 1, B)
    out = [x +] g + q                                (x only when channels match)
"""
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from app.util.errors import CheckpointFormatError, CorpusIOError, ModelShapeError

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_CHANNELS = (16, 16, 16, 24, 32)
N_CLASSES = 3

# loss_and_grad keeps every block's intermediates below this size, recomputes them above it
CACHE_LIMIT_BYTES = 1 << 30

CHECKPOINT_MAGIC = b"STLM"
CHECKPOINT_VERSION = 1


class BroadcastAxis(str, Enum):
    TEMPORAL = "temporal"
    FEATURE = "feature"


@dataclass(frozen=True)
class ModelConfig:
    broadcast_axis: BroadcastAxis = BroadcastAxis.TEMPORAL
    block_channels: tuple = DEFAULT_BLOCK_CHANNELS
    temporal_kernel: int = 3
    feature_kernel: int = 3
    n_classes: int = N_CLASSES
    input_T: int = 79
    input_F: int = 41
    eps_norm: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "broadcast_axis", BroadcastAxis(self.broadcast_axis))
        object.__setattr__(self, "block_channels", tuple(int(c) for c in self.block_channels))
        if not self.block_channels or min(self.block_channels) <= 0:
            raise ValueError("block_channels must be non-empty and positive")
        for name in ("temporal_kernel", "feature_kernel"):
            k = getattr(self, name)
            if k < 1 or k % 2 == 0:
                raise ValueError(f"{name} must be a positive odd integer, got {k}")
        if self.n_classes < 2 or self.input_T < 1 or self.input_F < 1:
            raise ValueError("n_classes >= 2 and positive input dimensions required")
        if self.eps_norm <= 0 or not 0 < self.bn_momentum <= 1:
            raise ValueError("eps_norm must be positive and bn_momentum in (0, 1]")

    @property
    def pooled_len(self) -> int:
        return self.input_T if self.broadcast_axis == BroadcastAxis.TEMPORAL else self.input_F

    @property
    def kept_len(self) -> int:
        return self.input_F if self.broadcast_axis == BroadcastAxis.TEMPORAL else self.input_T

    @property
    def pool_kernel(self) -> int:
        return self.temporal_kernel if self.broadcast_axis == BroadcastAxis.TEMPORAL else self.feature_kernel

    @property
    def kept_kernel(self) -> int:
        return self.feature_kernel if self.broadcast_axis == BroadcastAxis.TEMPORAL else self.temporal_kernel

    def scaled(self, scale: float) -> "ModelConfig":
        widths = tuple(max(1, int(round(c * scale))) for c in self.block_channels)
        return ModelConfig(**{**self.to_dict(), "block_channels": widths})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["broadcast_axis"] = self.broadcast_axis.value
        d["block_channels"] = list(self.block_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def parameter_shapes(cfg: ModelConfig) -> list:
    """(name, shape) of every learnable array in build order."""
    A, B = cfg.pooled_len, cfg.kept_len
    shapes = [("input_norm.gamma", (A, B)), ("input_norm.beta", (A, B))]
    c_in = 1
    for i, c in enumerate(cfg.block_channels):
        p = f"block{i}."
        shapes += [
            (p + "pool_encoder.dw_weight", (c_in, cfg.pool_kernel)),
            (p + "pool_encoder.dw_bias", (c_in,)),
            (p + "pool_encoder.pw_weight", (c, c_in)),
            (p + "pool_encoder.pw_bias", (c,)),
            (p + "pool_encoder.bn_gamma", (c,)),
            (p + "pool_encoder.bn_beta", (c,)),
            (p + "inorm.gamma", (c, B)),
            (p + "inorm.beta", (c, B)),
            (p + "broadcast_encoder.dw_weight", (c, cfg.kept_kernel)),
            (p + "broadcast_encoder.dw_bias", (c,)),
            (p + "broadcast_encoder.pw_weight", (c, c)),
            (p + "broadcast_encoder.pw_bias", (c,)),
        ]
        c_in = c
    shapes += [("head.weight", (cfg.n_classes, c_in)), ("head.bias", (cfg.n_classes,))]
    return shapes


def buffer_shapes(cfg: ModelConfig) -> list:
    shapes = []
    for i, c in enumerate(cfg.block_channels):
        shapes += [(f"block{i}.pool_encoder.bn_running_mean", (c,)), (f"block{i}.pool_encoder.bn_running_var", (c,))]
    return shapes


def count_params(cfg: ModelConfig) -> int:
    A, B = cfg.pooled_len, cfg.kept_len
    ka, kb = cfg.pool_kernel, cfg.kept_kernel
    total = 2 * A * B
    c_in = 1
    for c in cfg.block_channels:
        total += c_in * ka + c_in      # depthwise along the pooled axis
        total += c * c_in + c          # pointwise
        total += 2 * c                 # batch norm
        total += 2 * c * B             # instance norm
        total += c * kb + c            # depthwise along the kept axis
        total += c * c + c             # pointwise
        c_in = c
    return total + cfg.n_classes * c_in + cfg.n_classes


def count_macs(cfg: ModelConfig) -> int:
    """MACs for one 1 s input.

    Convolutions count output elements x kernel taps x input channels
    (depthwise x 1), affine layers in x out, normalizations 2 per element,
    pooling 1 per input element. Activations, residual sums and softmax are free.
    """
    A, B = cfg.pooled_len, cfg.kept_len
    ka, kb = cfg.pool_kernel, cfg.kept_kernel
    plane = A * B
    total = 2 * plane
    c_in = 1
    for c in cfg.block_channels:
        total += c_in * plane * ka     # depthwise along the pooled axis
        total += c * plane * c_in      # pointwise
        total += 2 * c * plane         # batch norm
        total += c * plane             # mean-pool over the pooled axis
        total += 2 * c * B             # instance norm
        total += c * B * kb            # depthwise along the kept axis
        total += c * B * c             # pointwise
        c_in = c
    total += c_in * plane              # global mean-pool
    return total + c_in * cfg.n_classes


def cache_bytes(cfg: ModelConfig, batch_size: int, dtype=np.float32) -> int:
    """Size of the per-block intermediates a training step keeps for its backward pass."""
    channels, c_in = 0, 1
    for c in cfg.block_channels:
        # input and depthwise map at c_in channels, normalized and rectified maps at c
        channels += 2 * c_in + 2 * c
        c_in = c
    return np.dtype(dtype).itemsize * batch_size * cfg.pooled_len * cfg.kept_len * channels


class Model:
    def __init__(self, cfg: ModelConfig, params: dict, buffers: dict, dtype=np.float32, debug: bool = False):
        self.cfg = cfg
        self.params = params
        self.buffers = buffers
        self.dtype = np.dtype(dtype)
        self.mode = "eval"
        self.debug = debug

    def train(self) -> "Model":
        self.mode = "train"
        return self

    def eval(self) -> "Model":
        self.mode = "eval"
        return self

    def copy(self) -> "Model":
        clone = Model(self.cfg, {k: v.copy() for k, v in self.params.items()},
                      {k: v.copy() for k, v in self.buffers.items()}, self.dtype, self.debug)
        clone.mode = self.mode
        return clone

    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))


def build_model(cfg: ModelConfig, seed: int, dtype=np.float32) -> Model:
    """Uniform +-sqrt(6 / fan_in) weights, zero biases, unit-gain norms."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in parameter_shapes(cfg):
        leaf = name.rsplit(".", 1)[1]
        if leaf in ("gamma", "bn_gamma"):
            params[name] = np.ones(shape, dtype=dtype)
        elif leaf.endswith("weight"):
            fan_in = shape[1]
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    buffers = {}
    for name, shape in buffer_shapes(cfg):
        buffers[name] = (np.zeros if name.endswith("mean") else np.ones)(shape, dtype=dtype)
    return Model(cfg, params, buffers, dtype)


# --- Layer primitives ---

def _along(axis: int, s: slice) -> tuple:
    return (slice(None),) * axis + (s,)


def _taps(k: int, length: int, axis: int):
    """(tap, out index, in index) of a same-padded conv: out[t] += w[tap] * in[t + tap - k // 2]."""
    p = k // 2
    for j in range(k):
        d = j - p
        if abs(d) >= length:
            continue
        dst = slice(0, length - d) if d >= 0 else slice(-d, length)
        src = slice(d, length) if d >= 0 else slice(0, length + d)
        yield j, _along(axis, dst), _along(axis, src)


def _depthwise(h, w, b, axis):
    out = np.broadcast_to(b[None, :, None, None], h.shape).astype(h.dtype)
    for j, dst, src in _taps(w.shape[1], h.shape[axis], axis):
        out[dst] += w[None, :, j, None, None] * h[src]
    return out


def _depthwise_backward(dout, h, w, axis):
    dh = np.zeros_like(h)
    dw = np.zeros_like(w)
    for j, dst, src in _taps(w.shape[1], h.shape[axis], axis):
        dw[:, j] = np.einsum('ncab,ncab->c', dout[dst], h[src])
        dh[src] += w[None, :, j, None, None] * dout[dst]
    return dh, dw, dout.sum(axis=(0, 2, 3))


def _pointwise(h, w, b):
    n, c, a, bb = h.shape
    out = np.matmul(w, h.reshape(n, c, a * bb))
    out += b[None, :, None]
    return out.reshape(n, w.shape[0], a, bb)


def _pointwise_backward(dout, h, w):
    n, c, a, bb = h.shape
    d = dout.reshape(n, w.shape[0], a * bb)
    hf = h.reshape(n, c, a * bb)
    dw = np.tensordot(d, hf, axes=([0, 2], [0, 2]))
    dh = np.matmul(w.T, d).reshape(h.shape)
    return dh, dw, d.sum(axis=(0, 2))


def _normalize(x, axes, eps):
    mu = x.mean(axis=axes, keepdims=True)
    xhat = x - mu
    var = np.square(xhat).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat *= inv
    return xhat, mu, var, inv


def _normalize_backward(dxhat, xhat, inv, axes):
    proj = (dxhat * xhat).mean(axis=axes, keepdims=True)
    dx = dxhat - dxhat.mean(axis=axes, keepdims=True)
    dx -= xhat * proj
    dx *= inv
    return dx


def _check(model: Model, x: np.ndarray, where: str) -> None:
    if model.debug and not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite activations after {where}")


@dataclass
class BlockTrace:
    """Addends and intermediate maps of one block, for inspection."""
    residual: np.ndarray
    temporal_map: np.ndarray
    pooled: np.ndarray
    inorm_hat: np.ndarray
    broadcast: np.ndarray
    out: np.ndarray


def _block_forward(model: Model, i: int, h: np.ndarray, use_batch_stats: bool):
    cfg, P, p = model.cfg, model.params, f"block{i}."
    eps = cfg.eps_norm
    c = cfg.block_channels[i]
    n, _, a, b = h.shape

    u = _depthwise(h, P[p + "pool_encoder.dw_weight"], P[p + "pool_encoder.dw_bias"], axis=2)
    v = _pointwise(u, P[p + "pool_encoder.pw_weight"], P[p + "pool_encoder.pw_bias"])
    if use_batch_stats:
        vhat, mu, var, inv = _normalize(v, (0, 2, 3), eps)
    else:
        mu = model.buffers[p + "pool_encoder.bn_running_mean"][None, :, None, None]
        var = model.buffers[p + "pool_encoder.bn_running_var"][None, :, None, None]
        inv = 1.0 / np.sqrt(var + eps)
        vhat = v - mu
        vhat *= inv
    del v
    g = vhat * P[p + "pool_encoder.bn_gamma"][None, :, None, None]
    g += P[p + "pool_encoder.bn_beta"][None, :, None, None]
    np.maximum(g, 0, out=g)
    _check(model, g, p + "pool_encoder")

    r = g.mean(axis=2, keepdims=True)
    if r.shape != (n, c, 1, b):
        raise ModelShapeError(f"{p}pooled map has shape {r.shape}, expected {(n, c, 1, b)}")
    rhat, _, _, inv_r = _normalize(r, (1, 2, 3), eps)
    rn = rhat * P[p + "inorm.gamma"][None, :, None, :] + P[p + "inorm.beta"][None, :, None, :]

    s = _depthwise(rn, P[p + "broadcast_encoder.dw_weight"], P[p + "broadcast_encoder.dw_bias"], axis=3)
    t = _pointwise(s, P[p + "broadcast_encoder.pw_weight"], P[p + "broadcast_encoder.pw_bias"])
    q = np.maximum(t, 0)
    _check(model, q, p + "broadcast_encoder")

    identity = h.shape[1] == c
    out = g + q
    if identity:
        out += h
    if out.shape != (n, c, a, b):
        raise ModelShapeError(f"{p}output has shape {out.shape}, expected {(n, c, a, b)}")
    cache = dict(h=h, u=u, vhat=vhat, inv=inv, rhat=rhat, inv_r=inv_r, rn=rn, s=s, t=t,
                 mu=mu, var=var, identity=identity, g=g, r=r, q=q)
    return out, cache


def _block_backward(model: Model, i: int, dout: np.ndarray, cache: dict, grads: dict) -> np.ndarray:
    P, p = model.params, f"block{i}."
    a = dout.shape[2]

    dq = dout.sum(axis=2, keepdims=True)
    dt = dq * (cache["t"] > 0)
    ds, grads[p + "broadcast_encoder.pw_weight"], grads[p + "broadcast_encoder.pw_bias"] = \
        _pointwise_backward(dt, cache["s"], P[p + "broadcast_encoder.pw_weight"])
    drn, grads[p + "broadcast_encoder.dw_weight"], grads[p + "broadcast_encoder.dw_bias"] = \
        _depthwise_backward(ds, cache["rn"], P[p + "broadcast_encoder.dw_weight"], axis=3)

    grads[p + "inorm.gamma"] = (drn * cache["rhat"]).sum(axis=(0, 2))
    grads[p + "inorm.beta"] = drn.sum(axis=(0, 2))
    dr = _normalize_backward(drn * P[p + "inorm.gamma"][None, :, None, :], cache["rhat"], cache["inv_r"], (1, 2, 3))

    dz = dout + dr / a
    dz *= cache["g"] > 0
    grads[p + "pool_encoder.bn_gamma"] = (dz * cache["vhat"]).sum(axis=(0, 2, 3))
    grads[p + "pool_encoder.bn_beta"] = dz.sum(axis=(0, 2, 3))
    dvhat = dz * P[p + "pool_encoder.bn_gamma"][None, :, None, None]
    dv = _normalize_backward(dvhat, cache["vhat"], cache["inv"], (0, 2, 3))

    du, grads[p + "pool_encoder.pw_weight"], grads[p + "pool_encoder.pw_bias"] = \
        _pointwise_backward(dv, cache["u"], P[p + "pool_encoder.pw_weight"])
    dh, grads[p + "pool_encoder.dw_weight"], grads[p + "pool_encoder.dw_bias"] = \
        _depthwise_backward(du, cache["h"], P[p + "pool_encoder.dw_weight"], axis=2)
    if cache["identity"]:
        dh = dh + dout
    return dh


# --- Forward / backward over a batch ---

def _orient(model: Model, X: np.ndarray) -> np.ndarray:
    """(N, F, T) feature stack -> (N, 1, A, B) activations."""
    cfg = model.cfg
    X = np.asarray(X, dtype=model.dtype)
    if X.ndim != 3 or X.shape[1:] != (cfg.input_F, cfg.input_T):
        raise ModelShapeError(f"expected inputs of shape (N, {cfg.input_F}, {cfg.input_T}), got {X.shape}")
    if cfg.broadcast_axis == BroadcastAxis.TEMPORAL:
        X = X.transpose(0, 2, 1)
    return X[:, None, :, :]


def _input_norm(model: Model, x: np.ndarray):
    xhat, _, _, inv = _normalize(x, (1, 2, 3), model.cfg.eps_norm)
    y = xhat * model.params["input_norm.gamma"][None, None] + model.params["input_norm.beta"][None, None]
    return y, xhat, inv


def _logits(model: Model, out: np.ndarray):
    pooled = out.mean(axis=(2, 3))
    return pooled @ model.params["head.weight"].T + model.params["head.bias"][None, :], pooled


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean of -log p[target]."""
    picked = probs[np.arange(len(targets)), targets]
    return float(-np.mean(np.log(np.maximum(picked, np.finfo(np.float64).tiny))))


def forward_batch(model: Model, X: np.ndarray, trace: list = None) -> np.ndarray:
    """Class probabilities for a stack of feature matrices, shape (N, n_classes).

    Train mode normalizes with batch statistics but leaves running statistics
    alone; only ``loss_and_grad`` updates them.
    """
    use_batch = model.mode == "train"
    h, _, _ = _input_norm(model, _orient(model, X))
    for i in range(len(model.cfg.block_channels)):
        out, cache = _block_forward(model, i, h, use_batch)
        if trace is not None:
            trace.append(BlockTrace(h if cache["identity"] else None, cache["g"], cache["r"],
                                    cache["rhat"], cache["q"], out))
        h = out
    logits, _ = _logits(model, h)
    return softmax(logits.astype(np.float64))


def predict_proba(model: Model, X: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Eval-mode probabilities in fixed-size chunks."""
    X = np.asarray(X)
    if X.shape[0] == 0:
        return np.zeros((0, model.cfg.n_classes))
    mode = model.mode
    model.eval()
    try:
        return np.concatenate([forward_batch(model, X[i:i + chunk]) for i in range(0, X.shape[0], chunk)])
    finally:
        model.mode = mode


def forward(model: Model, x) -> np.ndarray:
    values = getattr(x, "values", x)
    return forward_batch(model, np.asarray(values)[None])[0]


def loss_and_grad(model: Model, batch, update_running: bool = True, recompute: bool = None):
    """Mean cross-entropy over the batch and its exact gradient, batch statistics included.

    Args:
        model: Model to differentiate; its mode is ignored (batch norm always
            uses batch statistics here).
        batch: List of (FeatureMatrix or array, target class) pairs, or an
            (X, y) tuple of stacked arrays.
        update_running: Fold the batch statistics into the running averages.
        recompute: Recompute each block's intermediates during the backward pass
            instead of keeping them; by default only when they would exceed
            CACHE_LIMIT_BYTES.

    Returns:
        tuple: (loss, dict of gradients keyed like ``model.params``)
    """
    if isinstance(batch, tuple) and len(batch) == 2 and isinstance(batch[0], np.ndarray) and batch[0].ndim == 3:
        X, y = batch
    else:
        if not batch:
            raise ValueError("loss_and_grad needs a non-empty batch")
        X = np.stack([np.asarray(getattr(fm, "values", fm)) for fm, _ in batch])
        y = np.array([int(t) for _, t in batch])
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("loss_and_grad needs a non-empty batch")
    if np.any((y < 0) | (y >= model.cfg.n_classes)):
        raise ValueError("targets out of range")

    cfg, P = model.cfg, model.params
    x = _orient(model, X)
    h, xhat_in, _ = _input_norm(model, x)
    if recompute is None:
        recompute = cache_bytes(cfg, X.shape[0], model.dtype) > CACHE_LIMIT_BYTES

    inputs, caches, stats = [], [], []
    for i in range(len(cfg.block_channels)):
        inputs.append(h)
        h, cache = _block_forward(model, i, h, use_batch_stats=True)
        stats.append((cache["mu"], cache["var"], cache["vhat"].size // cache["vhat"].shape[1]))
        caches.append(None if recompute else cache)
        del cache
    logits, pooled = _logits(model, h)
    probs = softmax(logits.astype(np.float64))
    loss = cross_entropy(probs, y)

    n = X.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits = (dlogits / n).astype(model.dtype)
    grads = {"head.weight": dlogits.T @ pooled, "head.bias": dlogits.sum(axis=0)}
    plane = h.shape[2] * h.shape[3]
    dout = np.broadcast_to((dlogits @ P["head.weight"])[:, :, None, None] / plane, h.shape).copy()

    for i in reversed(range(len(cfg.block_channels))):
        cache = caches[i]
        if cache is None:
            _, cache = _block_forward(model, i, inputs[i], use_batch_stats=True)
        dout = _block_backward(model, i, dout, cache, grads)
        del cache
        caches[i] = inputs[i] = None

    grads["input_norm.gamma"] = (dout * xhat_in).sum(axis=(0, 1))
    grads["input_norm.beta"] = dout.sum(axis=(0, 1))

    if update_running:
        m = cfg.bn_momentum
        for i, (mu, var, count) in enumerate(stats):
            p = f"block{i}.pool_encoder."
            unbiased = var.reshape(-1) * (count / max(count - 1, 1))
            model.buffers[p + "bn_running_mean"] = ((1 - m) * model.buffers[p + "bn_running_mean"]
                                                    + m * mu.reshape(-1)).astype(model.dtype)
            model.buffers[p + "bn_running_var"] = ((1 - m) * model.buffers[p + "bn_running_var"]
                                                   + m * unbiased).astype(model.dtype)

    grads = {name: np.asarray(grads[name], dtype=model.dtype) for name in P}
    return loss, grads


# --- Optimizer ---

@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def apply_gradients(model: Model, grads: dict, opt_state: AdamState = None, lr: float = 1e-3,
                    beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam step, in place. Returns (model, opt_state)."""
    if set(grads) != set(model.params):
        raise ModelShapeError("gradient names do not match model parameters")
    for name, g in grads.items():
        if g.shape != model.params[name].shape:
            raise ModelShapeError(f"gradient for {name} has shape {g.shape}, expected {model.params[name].shape}")
    state = opt_state if opt_state is not None else AdamState()
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for name, param in model.params.items():
        g = grads[name].astype(np.float64)
        m = beta1 * state.m.get(name, 0.0) + (1.0 - beta1) * g
        v = beta2 * state.v.get(name, 0.0) + (1.0 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        model.params[name] = (param - step).astype(model.dtype)
    return model, state


# --- Checkpoints ---

_U32 = struct.Struct("<I")


def save_checkpoint(model: Model, path: str) -> str:
    cfg_blob = json.dumps(model.cfg.to_dict(), sort_keys=True).encode("utf-8")
    records = [(n, model.params[n]) for n, _ in parameter_shapes(model.cfg)]
    records += [(n, model.buffers[n]) for n, _ in buffer_shapes(model.cfg)]
    try:
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(_U32.pack(CHECKPOINT_VERSION))
            f.write(_U32.pack(len(cfg_blob)))
            f.write(cfg_blob)
            f.write(_U32.pack(len(records)))
            for name, arr in records:
                encoded = name.encode("utf-8")
                f.write(_U32.pack(len(encoded)))
                f.write(encoded)
                f.write(_U32.pack(arr.size))
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    except OSError as e:
        raise CorpusIOError(f"cannot write checkpoint: {e}", path) from e
    return path


def load_checkpoint(path: str) -> Model:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except FileNotFoundError as e:
        raise CorpusIOError("checkpoint not found", path) from e
    except OSError as e:
        raise CorpusIOError(f"cannot read checkpoint: {e}", path) from e

    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointFormatError("truncated checkpoint", path)
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("bad checkpoint magic", path)
    version = _U32.unpack(take(4))[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}", path)
    try:
        cfg = ModelConfig.from_dict(json.loads(take(_U32.unpack(take(4))[0]).decode("utf-8")))
    except (ValueError, TypeError) as e:
        raise CheckpointFormatError(f"invalid model config: {e}", path) from e

    expected = parameter_shapes(cfg) + buffer_shapes(cfg)
    n_records = _U32.unpack(take(4))[0]
    if n_records != len(expected):
        raise CheckpointFormatError(f"expected {len(expected)} arrays, found {n_records}", path)
    arrays = {}
    for name, shape in expected:
        found = take(_U32.unpack(take(4))[0]).decode("utf-8")
        count = _U32.unpack(take(4))[0]
        if found != name or count != int(np.prod(shape)):
            raise CheckpointFormatError(f"array {found!r} ({count}) does not match {name} {shape}", path)
        arrays[name] = np.frombuffer(take(4 * count), dtype="<f4").astype(np.float32).reshape(shape)
    if pos != len(blob):
        raise CheckpointFormatError("trailing bytes after last array", path)

    params = {n: arrays[n] for n, _ in parameter_shapes(cfg)}
    buffers = {n: arrays[n] for n, _ in buffer_shapes(cfg)}
    if not all(np.all(np.isfinite(b)) for b in buffers.values()):
        raise CheckpointFormatError("non-finite running statistics", path)
    return Model(cfg, params, buffers, np.float32)
