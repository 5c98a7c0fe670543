"""Recurrent sequence classifier in plain numpy (float64).

Pipeline per sequence ``X`` of shape (T, D):

    affine embedder -> stacked LSTM -> last top-layer h -> FC(+ReLU, dropout)* -> logits

Parameters live in a flat ``dict[str, ndarray]``:

    embed.W (E, D), embed.b (E,)
    lstm{l}.W (4H, H + I), lstm{l}.b (4H,)   gate rows ordered f, i, C, o;
                                              columns act on [h_{t-1}, x_t]
    fc{k}.W, fc{k}.b                          hidden FC layers of the head
    out.W (K, *), out.b (K,)                  class logits
"""

from __future__ import annotations

import struct
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

GATES = ("f", "i", "C", "o")


class ShapeError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    embed_dim: int = 32
    hidden_dim: int = 32
    num_lstm_layers: int = 1
    head_dims: tuple[int, ...] = (32,)
    num_classes: int = 2
    dropout_rate: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "head_dims", tuple(int(w) for w in self.head_dims))
        for name in ("input_dim", "embed_dim", "hidden_dim", "num_lstm_layers", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if any(w < 1 for w in self.head_dims):
            raise ValueError("head widths must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    @classmethod
    def paper_reference(cls, input_dim: int = 512, num_classes: int = 101) -> "ModelSpec":
        """The full-size configuration: 512-wide, 3 LSTM layers, 256-wide head."""
        return cls(input_dim, 512, 512, 3, (256,), num_classes, 0.3)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        H = self.hidden_dim
        shapes = {"embed.W": (self.embed_dim, self.input_dim), "embed.b": (self.embed_dim,)}
        fan = self.embed_dim
        for l in range(self.num_lstm_layers):
            shapes[f"lstm{l}.W"] = (4 * H, H + fan)
            shapes[f"lstm{l}.b"] = (4 * H,)
            fan = H
        for k, w in enumerate(self.head_dims):
            shapes[f"fc{k}.W"] = (w, fan)
            shapes[f"fc{k}.b"] = (w,)
            fan = w
        shapes["out.W"] = (self.num_classes, fan)
        shapes["out.b"] = (self.num_classes,)
        return shapes


def sigmoid(z):
    # tanh form: never overflows, one ufunc call
    return 0.5 * (np.tanh(0.5 * np.asarray(z, dtype=np.float64)) + 1.0)


def gate_weights(W: np.ndarray, b: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Views of the stacked layer weights as the per-gate ``(W_g, b_g)`` pairs."""
    H = W.shape[0] // 4
    return {g: (W[k * H : (k + 1) * H], b[k * H : (k + 1) * H]) for k, g in enumerate(GATES)}


def rnn_cell(x, h_prev, W_x, W_h, b):
    """Vanilla recurrent step ``h = sigmoid(x W_x + h_prev W_h + b)``."""
    x, h_prev = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(h_prev, float))
    W_x, W_h = np.atleast_2d(W_x), np.atleast_2d(W_h)
    if W_x.shape[0] != x.shape[0] or W_h.shape != (h_prev.shape[0], h_prev.shape[0]):
        raise ShapeError(f"rnn_cell shapes: x {x.shape}, W_x {W_x.shape}, W_h {W_h.shape}")
    if np.shape(b) not in ((), (W_x.shape[1],), (1,)) or W_x.shape[1] != h_prev.shape[0]:
        raise ShapeError("rnn_cell bias/hidden shape mismatch")
    return sigmoid(x @ W_x + h_prev @ W_h + b)


def lstm_cell(x, h_prev, c_prev, W, b):
    """One LSTM step. Returns ``(h, c)``.

    ``W`` is the stacked (4H, H + I) gate matrix acting on ``[h_prev, x]``.
    """
    x = np.atleast_1d(np.asarray(x, float))
    h_prev = np.atleast_1d(np.asarray(h_prev, float))
    c_prev = np.atleast_1d(np.asarray(c_prev, float))
    W, b = np.atleast_2d(W), np.atleast_1d(b)
    H = h_prev.shape[0]
    if W.shape != (4 * H, H + x.shape[0]) or b.shape != (4 * H,) or c_prev.shape != (H,):
        raise ShapeError(
            f"lstm_cell shapes: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}, "
            f"W {W.shape}, b {b.shape}"
        )
    if not (np.isfinite(x).all() and np.isfinite(h_prev).all() and np.isfinite(c_prev).all()):
        raise ValueError("non_finite_input")
    z = W @ np.concatenate([h_prev, x]) + b
    f = sigmoid(z[:H])
    i = sigmoid(z[H : 2 * H])
    g = np.tanh(z[2 * H : 3 * H])
    o = sigmoid(z[3 * H :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def init_params(spec: ModelSpec, seed: int) -> dict[str, np.ndarray]:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, forget-gate bias 1."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in spec.param_shapes().items():
        if name.endswith(".W"):
            bound = 1.0 / np.sqrt(shape[1])
            params[name] = rng.uniform(-bound, bound, size=shape)
        else:
            params[name] = np.zeros(shape)
    H = spec.hidden_dim
    for l in range(spec.num_lstm_layers):
        params[f"lstm{l}.b"][:H] = 1.0
    return params


def check_params(spec: ModelSpec, params: dict[str, np.ndarray]) -> None:
    shapes = spec.param_shapes()
    if set(params) != set(shapes):
        raise ShapeError(f"parameter names {sorted(params)} != {sorted(shapes)}")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ShapeError(f"{name}: shape {params[name].shape}, expected {shape}")
        if not np.isfinite(params[name]).all():
            raise ValueError(f"{name} has non-finite entries")


@dataclass
class _LayerCache:
    inp: np.ndarray  # (T, I)
    acts: np.ndarray  # (T, 4H) activated gates f, i, C~, o
    c: np.ndarray  # (T + 1, H), row 0 is the initial state
    h: np.ndarray  # (T + 1, H)
    tanh_c: np.ndarray  # (T, H)


@dataclass
class ForwardCache:
    spec: ModelSpec
    params: dict
    versions: dict
    x: np.ndarray
    layers: list = field(default_factory=list)
    head_in: list = field(default_factory=list)  # input to each FC layer
    head_pre: list = field(default_factory=list)  # pre-activation of each FC layer
    masks: list = field(default_factory=list)  # scaled dropout masks or None
    logits: np.ndarray | None = None


def _fingerprint(params):
    # cheap staleness check: identity plus a content sample of each array
    return {k: (id(v), float(v.flat[0]), float(v.flat[-1])) for k, v in params.items()}


# sigmoid(z) = 0.5 * tanh(z / 2) + 0.5, so one tanh over all 4H pre-activations
# serves every gate once the sigmoid rows are pre-scaled by 1/2.
def _gate_affine(H):
    scale = np.full(4 * H, 0.5)
    scale[2 * H : 3 * H] = 1.0
    shift = np.full(4 * H, 0.5)
    shift[2 * H : 3 * H] = 0.0
    return scale, shift


def _lstm_layer_forward(inp, W, b, H):
    T = inp.shape[0]
    scale, shift = _gate_affine(H)
    Wh = W[:, :H] * scale[:, None]
    zx = (inp @ W[:, H:].T + b) * scale
    acts = np.empty((T, 4 * H))
    c = np.zeros((T + 1, H))
    h = np.zeros((T + 1, H))
    tanh_c = np.empty((T, H))
    for t in range(T):
        a = acts[t]
        np.tanh(zx[t] + Wh @ h[t], out=a)
        a *= scale
        a += shift
        c[t + 1] = a[:H] * c[t] + a[H : 2 * H] * a[2 * H : 3 * H]
        np.tanh(c[t + 1], out=tanh_c[t])
        np.multiply(a[3 * H :], tanh_c[t], out=h[t + 1])
    return _LayerCache(inp, acts, c, h, tanh_c)


def _lstm_layer_backward(cache: _LayerCache, W, dh_out):
    """Backprop through one layer. ``dh_out`` is dL/dh_t from above, shape (T, H)."""
    T, H = dh_out.shape
    Wh_T = np.ascontiguousarray(W[:, :H].T)
    acts, c, tanh_c = cache.acts, cache.c, cache.tanh_c
    f, i, g, o = acts[:, :H], acts[:, H : 2 * H], acts[:, 2 * H : 3 * H], acts[:, 3 * H :]
    # local derivatives of the pre-activations, vectorized over time
    dc_scale = o * (1.0 - tanh_c * tanh_c)  # dc/dh through h = o tanh(c)
    k_cell = np.empty((T, 3, H))  # dz_{f,i,C} = dc * k_cell
    k_cell[:, 0] = c[:-1] * f * (1.0 - f)
    k_cell[:, 1] = g * i * (1.0 - i)
    k_cell[:, 2] = i * (1.0 - g * g)
    k_out = tanh_c * o * (1.0 - o)  # dz_o = dh * k_out
    dz = np.empty((T, 4 * H))
    dz_cell = dz[:, : 3 * H].reshape(T, 3, H)
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        dh = dh_out[t] + dh_next
        dc = dc_next + dh * dc_scale[t]
        np.multiply(k_cell[t], dc, out=dz_cell[t])
        np.multiply(k_out[t], dh, out=dz[t, 3 * H :])
        dc_next = dc * f[t]
        dh_next = Wh_T @ dz[t]
    dW = np.empty_like(W)
    dW[:, :H] = dz.T @ cache.h[:-1]
    dW[:, H:] = dz.T @ cache.inp
    return dW, dz.sum(axis=0), dz @ W[:, H:]


def forward(x, spec: ModelSpec, params, rng: np.random.Generator | None = None):
    """Logits for one sequence plus the cache ``backward`` needs.

    Passing ``rng`` switches on training mode (inverted dropout in the head).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"sequence must be (T, D), got shape {x.shape}")
    if x.shape[0] < 1:
        raise ValueError("empty_sequence")
    if x.shape[1] != spec.input_dim:
        raise ShapeError(f"feature dim {x.shape[1]} != input_dim {spec.input_dim}")
    cache = ForwardCache(spec, params, _fingerprint(params), x)
    H = spec.hidden_dim
    inp = x @ params["embed.W"].T + params["embed.b"]
    for l in range(spec.num_lstm_layers):
        lc = _lstm_layer_forward(inp, params[f"lstm{l}.W"], params[f"lstm{l}.b"], H)
        cache.layers.append(lc)
        inp = lc.h[1:]
    r = inp[-1]
    p = spec.dropout_rate
    for k in range(len(spec.head_dims)):
        cache.head_in.append(r)
        a = params[f"fc{k}.W"] @ r + params[f"fc{k}.b"]
        cache.head_pre.append(a)
        r = np.maximum(a, 0.0)
        if rng is not None and p > 0:
            mask = (rng.random(r.shape) >= p) / (1.0 - p)
            r = r * mask
        else:
            mask = None
        cache.masks.append(mask)
    cache.head_in.append(r)
    logits = params["out.W"] @ r + params["out.b"]
    cache.logits = logits
    return logits, cache


def softmax(logits):
    z = np.asarray(logits, float)
    e = np.exp(z - z.max())
    return e / e.sum()


def cross_entropy(logits, label: int) -> float:
    z = np.asarray(logits, float)
    if not 0 <= label < z.shape[0]:
        raise IndexError(f"label_out_of_range: {label} for {z.shape[0]} classes")
    shifted = z - z.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def backward(cache: ForwardCache, label: int) -> dict[str, np.ndarray]:
    """Exact gradient of ``cross_entropy(logits, label)`` for every parameter."""
    spec, params = cache.spec, cache.params
    if cache.logits is None or _fingerprint(params) != cache.versions:
        raise StaleCacheError("parameters changed since forward; rerun forward")
    if not 0 <= label < spec.num_classes:
        raise IndexError(f"label_out_of_range: {label}")
    grads: dict[str, np.ndarray] = {}
    dlogits = softmax(cache.logits)
    dlogits[label] -= 1.0
    r = cache.head_in[-1]
    grads["out.W"] = np.outer(dlogits, r)
    grads["out.b"] = dlogits
    dr = params["out.W"].T @ dlogits
    for k in range(len(spec.head_dims) - 1, -1, -1):
        if cache.masks[k] is not None:
            dr = dr * cache.masks[k]
        da = dr * (cache.head_pre[k] > 0)
        grads[f"fc{k}.W"] = np.outer(da, cache.head_in[k])
        grads[f"fc{k}.b"] = da
        dr = params[f"fc{k}.W"].T @ da
    T = cache.x.shape[0]
    dh = np.zeros((T, spec.hidden_dim))
    dh[-1] = dr
    for l in range(spec.num_lstm_layers - 1, -1, -1):
        dW, db, dh = _lstm_layer_backward(cache.layers[l], params[f"lstm{l}.W"], dh)
        grads[f"lstm{l}.W"] = dW
        grads[f"lstm{l}.b"] = db
    grads["embed.W"] = dh.T @ cache.x
    grads["embed.b"] = dh.sum(axis=0)
    return grads


def loss_and_grads(x, label, spec, params, rng=None):
    logits, cache = forward(x, spec, params, rng)
    return cross_entropy(logits, label), backward(cache, label)


def predict(x, spec, params) -> int:
    logits, _ = forward(x, spec, params)
    return int(np.argmax(logits))


# -- checkpoints --------------------------------------------------------------
#
# line 1:  b"STEPSEQ-CKPT v1\n"
# line 2:  JSON header {"spec": {...}, "arrays": [{"name", "shape"}...], "dtype": "<f8"}
# rest:    every array's float64 little-endian payload, row-major, header order

CKPT_MAGIC = b"STEPSEQ-CKPT v1\n"


def save_checkpoint(path, spec: ModelSpec, params) -> None:
    names = list(spec.param_shapes())
    header = {
        "spec": asdict(spec),
        "dtype": "<f8",
        "arrays": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelSpec, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    if not blob.startswith(CKPT_MAGIC):
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    rest = blob[len(CKPT_MAGIC) :]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl])
    payload = memoryview(rest[nl + 1 :])
    spec_d = header["spec"]
    spec_d["head_dims"] = tuple(spec_d["head_dims"])
    spec = ModelSpec(**spec_d)
    params, off = {}, 0
    for a in header["arrays"]:
        shape = tuple(a["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * struct.calcsize("<d")
        params[a["name"]] = np.frombuffer(payload[off : off + nbytes], dtype="<f8").reshape(shape).astype(np.float64)
        off += nbytes
    if off != len(payload):
        raise ValueError(f"{path}: payload size {len(payload)} != expected {off}")
    check_params(spec, params)
    return spec, params
