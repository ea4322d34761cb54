"""Fixed 3D convolutional classifier, trained from scratch.

The network maps a 16^3 binary image to probabilities over the four
shape classes through three conv/ReLU/average-pool blocks and a dense
softmax head. Everything runs in float64 numpy; convolutions are
im2col matrix products chunked to bound memory, and all gradients are
exact (verified against central finite differences in the tests).
"""

import copy
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, MalformedInputError
from .voxel import RESOLUTION, BinaryImage

CLASS_NAMES = ("tetrahedron", "prism", "cube", "other")
N_CLASSES = 4

_MAGIC = b"PRCNN1"
# Keep im2col buffers below ~128 MB.
_COL_BYTES_LIMIT = 128 * 2 ** 20


@dataclass
class ClassProbabilities:
    probs: np.ndarray                   # (4,), sums to 1

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64).reshape(N_CLASSES)
        if abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise MalformedInputError("class probabilities must sum to 1")

    @property
    def label(self) -> str:
        return CLASS_NAMES[int(np.argmax(self.probs))]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise MalformedInputError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise MalformedInputError("betas must lie in (0, 1)")


@dataclass
class ConvBlock:
    """Convolution (stride 1, zero 'same' padding) + ReLU + 2x average pool."""
    weights: np.ndarray                 # (cout, cin, k, k, k)
    bias: np.ndarray                    # (cout,)

    @property
    def k(self):
        return self.weights.shape[2]


@dataclass
class CnnModel:
    input_size: int
    blocks: list
    dense_w: np.ndarray                 # (n_classes, flat)
    dense_b: np.ndarray                 # (n_classes,)

    def parameters(self):
        out = []
        for b in self.blocks:
            out.append(b.weights)
            out.append(b.bias)
        out.append(self.dense_w)
        out.append(self.dense_b)
        return out

    def n_parameters(self):
        return sum(p.size for p in self.parameters())

    def copy(self) -> "CnnModel":
        return copy.deepcopy(self)


def _glorot(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def build_model(rng_seed: int = 0, input_size: int = RESOLUTION,
                conv_specs=((8, 8), (8, 4), (8, 2)),
                n_classes: int = N_CLASSES) -> CnnModel:
    """Model with initialized parameters.

    The default conv_specs (feature maps, filter size) give the fixed
    production stack; smaller specs build the reduced models used by
    the gradient checks.
    """
    rng = np.random.default_rng(rng_seed)
    blocks = []
    cin = 1
    size = input_size
    for cout, k in conv_specs:
        fan_in = cin * k ** 3
        fan_out = cout * k ** 3
        blocks.append(ConvBlock(
            weights=_glorot(rng, (cout, cin, k, k, k), fan_in, fan_out),
            bias=np.zeros(cout)))
        if size % 2 != 0:
            raise MalformedInputError("spatial size must halve cleanly")
        size //= 2
        cin = cout
    flat = cin * size ** 3
    dense_w = _glorot(rng, (n_classes, flat), flat, n_classes)
    dense_b = np.zeros(n_classes)
    return CnnModel(input_size, blocks, dense_w, dense_b)


# ---------------------------------------------------------------------------
# Layer maths


def _conv3d(x, w, pad_lo, pad_hi):
    """Cross-correlation of x (N,Cin,D,H,W) with w (Cout,Cin,k,k,k)."""
    n, cin, d, h, wd = x.shape
    cout, _, k, _, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0)) + ((pad_lo, pad_hi),) * 3)
    od, oh, ow = (s + pad_lo + pad_hi - k + 1 for s in (d, h, wd))
    wmat = w.reshape(cout, -1).T                       # (cin*k^3, cout)
    out = np.empty((n, cout, od, oh, ow))
    per_image = od * oh * ow * cin * k ** 3 * 8
    chunk = max(1, _COL_BYTES_LIMIT // max(per_image, 1))
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        win = np.lib.stride_tricks.sliding_window_view(
            xp[s:e], (k, k, k), axis=(2, 3, 4))        # (n,cin,od,oh,ow,k,k,k)
        cols = win.transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(
            (e - s) * od * oh * ow, cin * k ** 3)
        out[s:e] = (cols @ wmat).reshape(e - s, od, oh, ow, cout).transpose(
            0, 4, 1, 2, 3)
    return out


def _conv3d_weight_grad(x, gy, k, pad_lo, pad_hi):
    """Gradient of the convolution wrt its filter bank."""
    n, cin, *_ = x.shape
    cout = gy.shape[1]
    od, oh, ow = gy.shape[2:]
    xp = np.pad(x, ((0, 0), (0, 0)) + ((pad_lo, pad_hi),) * 3)
    gw = np.zeros((cout, cin * k ** 3))
    per_image = od * oh * ow * cin * k ** 3 * 8
    chunk = max(1, _COL_BYTES_LIMIT // max(per_image, 1))
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        win = np.lib.stride_tricks.sliding_window_view(
            xp[s:e], (k, k, k), axis=(2, 3, 4))
        cols = win.transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(
            (e - s) * od * oh * ow, cin * k ** 3)
        gmat = gy[s:e].transpose(0, 2, 3, 4, 1).reshape(-1, cout)
        gw += gmat.T @ cols
    return gw.reshape(cout, cin, k, k, k)


def _conv_block_forward(block, x):
    k = block.k
    pad_lo = (k - 1) // 2
    pad_hi = k - 1 - pad_lo
    z = _conv3d(x, block.weights, pad_lo, pad_hi)
    z += block.bias[None, :, None, None, None]
    a = np.maximum(z, 0.0)
    n, c, d, h, w = a.shape
    pooled = a.reshape(n, c, d // 2, 2, h // 2, 2, w // 2, 2).mean(
        axis=(3, 5, 7))
    return z, pooled


def _conv_block_backward(block, x, z, gp):
    # Undo the pool: each input of a 2x2x2 cell receives grad/8.
    g = np.repeat(np.repeat(np.repeat(gp, 2, axis=2), 2, axis=3), 2, axis=4)
    g = g / 8.0
    g = np.where(z > 0.0, g, 0.0)
    gb = g.sum(axis=(0, 2, 3, 4))
    k = block.k
    pad_lo = (k - 1) // 2
    pad_hi = k - 1 - pad_lo
    gw = _conv3d_weight_grad(x, g, k, pad_lo, pad_hi)
    # Input gradient: correlate with the flipped, channel-swapped filters.
    w_flip = block.weights[:, :, ::-1, ::-1, ::-1].transpose(1, 0, 2, 3, 4)
    gx = _conv3d(g, np.ascontiguousarray(w_flip), k - 1 - pad_lo,
                 k - 1 - pad_hi)
    return gx, gw, gb


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(images):
    """(N, 1, n, n, n) float64 from BinaryImages or arrays."""
    if isinstance(images, BinaryImage):
        images = [images]
    elif isinstance(images, np.ndarray):
        if images.ndim == 5:
            return np.asarray(images, dtype=np.float64)
        if images.ndim == 4:
            return np.asarray(images, dtype=np.float64)[:, None]
        images = [images]
    arrs = [
        np.asarray(im.voxels if isinstance(im, BinaryImage) else im,
                   dtype=np.float64)
        for im in images
    ]
    return np.stack(arrs)[:, None, :, :, :]


def forward_batch(model: CnnModel, x: np.ndarray) -> np.ndarray:
    """Class probabilities (N, n_classes) for a prepared batch."""
    if x.shape[2] != model.input_size:
        raise MalformedInputError(
            f"expected {model.input_size}^3 input, got {x.shape[2:]}")
    for block in model.blocks:
        _, x = _conv_block_forward(block, x)
    flat = x.reshape(x.shape[0], -1)
    logits = flat @ model.dense_w.T + model.dense_b
    return _softmax(logits)


def forward(model: CnnModel, image) -> ClassProbabilities:
    """Probabilities of the four shape classes for one image."""
    return ClassProbabilities(forward_batch(model, _as_batch(image))[0])


def loss(probs, label) -> float:
    """Cross entropy, -sum_j y_j log p_j."""
    p = probs.probs if isinstance(probs, ClassProbabilities) else np.asarray(probs)
    y = np.asarray(label, dtype=np.float64).reshape(p.shape)
    return float(-(y * np.log(np.maximum(p, 1e-300))).sum())


def one_hot(label_index: int) -> np.ndarray:
    y = np.zeros(N_CLASSES)
    y[label_index] = 1.0
    return y


def gradients(model: CnnModel, x: np.ndarray, y: np.ndarray):
    """(total loss, gradient list) summed over the batch.

    The gradient list matches model.parameters() order.
    """
    acts = [x]
    pre = []
    cur = x
    for block in model.blocks:
        z, cur = _conv_block_forward(block, cur)
        pre.append(z)
        acts.append(cur)
    flat = cur.reshape(cur.shape[0], -1)
    logits = flat @ model.dense_w.T + model.dense_b
    probs = _softmax(logits)
    total = float(-(np.log(np.maximum(
        probs[np.arange(len(y)), y], 1e-300))).sum())

    g_logits = probs.copy()
    g_logits[np.arange(len(y)), y] -= 1.0
    g_dense_w = g_logits.T @ flat
    g_dense_b = g_logits.sum(axis=0)
    g_flat = g_logits @ model.dense_w
    g = g_flat.reshape(acts[-1].shape)

    grads_blocks = []
    for i in range(len(model.blocks) - 1, -1, -1):
        g, gw, gb = _conv_block_backward(model.blocks[i], acts[i], pre[i], g)
        grads_blocks.append((gw, gb))
    out = []
    for gw, gb in reversed(grads_blocks):
        out.append(gw)
        out.append(gb)
    out.append(g_dense_w)
    out.append(g_dense_b)
    return total, out


def backward(model: CnnModel, image, label):
    """Exact gradient of loss(forward(image), label) for one sample."""
    x = _as_batch(image)
    y = np.asarray([int(np.argmax(label)) if np.ndim(label) else int(label)])
    _, grads = gradients(model, x, y)
    return grads


def predict(model: CnnModel, image) -> str:
    """Label with the highest probability; ties go to the lowest index."""
    return forward(model, image).label


def evaluate(model: CnnModel, images, labels):
    """(row-normalized 4x4 confusion matrix, accuracy) on a labeled set."""
    x = images if isinstance(images, np.ndarray) else _as_batch(images)
    y = np.asarray(labels, dtype=np.int64)
    counts = np.zeros((N_CLASSES, N_CLASSES))
    pred = []
    for s in range(0, len(x), 256):
        probs = forward_batch(model, x[s:s + 256])
        pred.append(np.argmax(probs, axis=1))
    pred = np.concatenate(pred) if pred else np.zeros(0, dtype=np.int64)
    for t, q in zip(y, pred):
        counts[t, q] += 1
    rows = counts.sum(axis=1, keepdims=True)
    confusion = np.divide(counts, rows, out=np.zeros_like(counts),
                          where=rows > 0)
    accuracy = float((pred == y).mean()) if len(y) else 0.0
    return confusion, accuracy


# ---------------------------------------------------------------------------
# Training


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainTensors:
    """Pre-split dataset as arrays ready for the optimizer."""
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray = field(default=None)
    y_test: np.ndarray = field(default=None)


def _mean_loss(model, x, y, batch=256):
    total = 0.0
    for s in range(0, len(x), batch):
        probs = forward_batch(model, x[s:s + batch])
        sel = probs[np.arange(len(probs)), y[s:s + batch]]
        total += float(-np.log(np.maximum(sel, 1e-300)).sum())
    return total / max(len(x), 1)


def train(model: CnnModel, data: TrainTensors, cfg: TrainConfig):
    """Minibatch Adam with early stopping on the validation loss.

    Returns (model at the best validation loss, per-epoch history).
    """
    if len(data.x_train) == 0 or len(data.x_val) == 0:
        raise MalformedInputError("empty training or validation split")
    rng = np.random.default_rng(cfg.rng_seed)
    params = model.parameters()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0

    best = model.copy()
    best_val = np.inf
    since_best = 0
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(data.x_train))
        running = 0.0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            xb = data.x_train[idx]
            yb = data.y_train[idx]
            total, grads = gradients(model, xb, yb)
            running += total
            step += 1
            for p, g, mk, vk in zip(params, grads, m, v):
                g = g / len(idx)
                mk *= cfg.beta1
                mk += (1 - cfg.beta1) * g
                vk *= cfg.beta2
                vk += (1 - cfg.beta2) * g * g
                mhat = mk / (1 - cfg.beta1 ** step)
                vhat = vk / (1 - cfg.beta2 ** step)
                p -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.epsilon)
        train_loss = running / len(order)
        val_loss = _mean_loss(model, data.x_val, data.y_val)
        _, val_acc = evaluate(model, data.x_val, data.y_val)
        history.append(EpochStats(epoch, train_loss, val_loss, val_acc))
        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best = model.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    return best, history


def history_to_csv(history, path):
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,val_loss,val_accuracy\n")
        for h in history:
            fh.write(f"{h.epoch},{h.train_loss:.10g},{h.val_loss:.10g},"
                     f"{h.val_accuracy:.10g}\n")


# ---------------------------------------------------------------------------
# Serialization: magic, dims header, parameters as little-endian float64


def save_model(model: CnnModel, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        head = [model.input_size, len(model.blocks)]
        for b in model.blocks:
            head.extend(b.weights.shape[:2])
            head.append(b.k)
        head.extend(model.dense_w.shape)
        fh.write(struct.pack("<I", len(head)))
        fh.write(struct.pack(f"<{len(head)}I", *head))
        for p in model.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(path) -> CnnModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:len(_MAGIC)] != _MAGIC:
        raise FormatError("not a model file (bad magic)")
    off = len(_MAGIC)
    try:
        (hlen,) = struct.unpack_from("<I", raw, off)
        off += 4
        head = list(struct.unpack_from(f"<{hlen}I", raw, off))
        off += 4 * hlen
    except struct.error as exc:
        raise FormatError("truncated header") from exc
    input_size, n_blocks = head[0], head[1]
    pos = 2
    blocks = []
    shapes = []
    for _ in range(n_blocks):
        cout, cin, k = head[pos:pos + 3]
        pos += 3
        shapes.append(((cout, cin, k, k, k), (cout,)))
    dense_out, dense_in = head[pos:pos + 2]

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        end = off + 8 * count
        if end > len(raw):
            raise FormatError("truncated parameter data")
        arr = np.frombuffer(raw[off:end], dtype="<f8").reshape(shape).copy()
        off = end
        return arr

    for wshape, bshape in shapes:
        blocks.append(ConvBlock(take(wshape), take(bshape)))
    model = CnnModel(input_size, blocks, take((dense_out, dense_in)),
                     take((dense_out,)))
    if off != len(raw):
        raise FormatError("trailing bytes after parameters")
    return model
