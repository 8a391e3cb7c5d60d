"""Per-mode neural predictors, their FLOPs, the NMIP file format and the registry.

FC network (n = 4, 8): (4n+8)*8 -> W -> W -> W -> n*n with PReLU between the
affine layers. CNN network (n = 16, 32): two strided convolution paths over
the above (n x 3n) and left (2n x n) regions, a merge layer shrinking the
concatenation to 1/5 of its width, then transposed convolutions back to n x n.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import layers as L
from .context import CNN_SIZES, FC_SIZES, NORM_TAG, CnnContext, FcContext, denormalize, fc_context_len
from .core import BLOCK_SIZES
from .errors import FormatError, ModelError, ShapeError

FC_WIDTH = 128
CNN_FILTERS = 16
PRELU_INIT = 0.25
BASELINE = 255
NUM_MODES = 35

ARCH_FC, ARCH_CNN = 0, 1
DENSE, CONV, DECONV, PRELU = 0, 1, 2, 3

# (kernel, filter multiplier, stride) per convolution path layer
CONV_PLAN = {
    16: ((5, 1, 2), (3, 1, 1), (5, 2, 2), (3, 2, 1)),
    32: ((5, 1, 2), (5, 2, 2), (5, 4, 2), (5, 8, 2), (3, 8, 1)),
}
DECONV_KERNEL = 5


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: int
    shape: tuple  # internal parameter shape
    stride: int = 1
    in_hw: tuple = ()  # spatial input size, conv-type layers only


def fc_layers(n: int, width: int = FC_WIDTH) -> list[LayerSpec]:
    dims = [fc_context_len(n), width, width, width, n * n]
    specs = []
    for i in range(4):
        specs.append(LayerSpec(f"fc{i + 1}", DENSE, (dims[i], dims[i + 1])))
        if i < 3:
            specs.append(LayerSpec(f"act{i + 1}", PRELU, (1,)))
    return specs


def _path_layers(prefix: str, hw: tuple, n: int, filters: int) -> tuple[list[LayerSpec], tuple]:
    specs, cin = [], 1
    for i, (k, mult, s) in enumerate(CONV_PLAN[n]):
        cout = mult * filters
        specs.append(LayerSpec(f"{prefix}.conv{i + 1}", CONV, (k, k, cin, cout), s, hw))
        specs.append(LayerSpec(f"{prefix}.act{i + 1}", PRELU, (cout,)))
        hw = (-(-hw[0] // s), -(-hw[1] // s))
        cin = cout
    return specs, hw + (cin,)


def cnn_layers(n: int, filters: int = CNN_FILTERS) -> list[LayerSpec]:
    above, (ah, aw, c) = _path_layers("above", (n, 3 * n), n, filters)
    left, (lh, lw, _) = _path_layers("left", (2 * n, n), n, filters)
    concat = (ah * aw + lh * lw) * c
    if concat % 5:
        raise ShapeError(f"concatenation width {concat} not divisible by 5")
    specs = above + left
    specs.append(LayerSpec("merge", DENSE, (concat, concat // 5)))
    specs.append(LayerSpec("merge.act", PRELU, (1,)))
    side = int(round((concat // 5 // c) ** 0.5))
    cin = c
    i = 0
    while side < n:
        i += 1
        cout = 1 if side * 2 == n else cin // 2
        specs.append(LayerSpec(f"deconv{i}", DECONV, (DECONV_KERNEL, DECONV_KERNEL, cout, cin), 2, (side, side)))
        if cout != 1:
            specs.append(LayerSpec(f"deconv.act{i}", PRELU, (cout,)))
        side *= 2
        cin = cout
    return specs


def seed_shape(n: int, filters: int) -> tuple:
    """Spatial grid the merge output is reshaped to before upsampling."""
    first = next(s for s in cnn_layers(n, filters) if s.kind == DECONV)
    return first.in_hw + (first.shape[3],)


def _param_keys(spec: LayerSpec) -> list[str]:
    if spec.kind == PRELU:
        return [f"{spec.name}.a"]
    return [f"{spec.name}.w", f"{spec.name}.b"]


def _bias_len(spec: LayerSpec) -> int:
    return spec.shape[2] if spec.kind == DECONV else spec.shape[-1]


def _fan_in(spec: LayerSpec) -> float:
    if spec.kind == DENSE:
        return spec.shape[0]
    k = spec.shape[0]
    if spec.kind == CONV:
        return k * k * spec.shape[2]
    return k * k * spec.shape[3] / (spec.stride**2)


def init_params(specs: list[LayerSpec], seed: int, dtype=np.float32) -> dict[str, np.ndarray]:
    """Uniform fan-in (Kaiming-style) weights, zero biases, slopes 0.25."""
    rng = np.random.default_rng(seed)
    params = {}
    for spec in specs:
        if spec.kind == PRELU:
            params[f"{spec.name}.a"] = np.full(spec.shape, PRELU_INIT, dtype=dtype)
            continue
        bound = np.sqrt(6.0 / _fan_in(spec))
        params[f"{spec.name}.w"] = rng.uniform(-bound, bound, spec.shape).astype(dtype)
        params[f"{spec.name}.b"] = np.zeros(_bias_len(spec), dtype=dtype)
    return params


class _Model:
    arch: int

    def __init__(self, n: int, mode: int, params: dict[str, np.ndarray]):
        self.n = n
        self.mode = mode
        self.params = params
        expected = {k: self._shape_of(k) for k in self.param_keys()}
        for key, shape in expected.items():
            if key not in params:
                raise ShapeError(f"missing parameter {key}")
            if params[key].shape != shape:
                raise ShapeError(f"{key}: shape {params[key].shape}, expected {shape}")

    def _shape_of(self, key: str) -> tuple:
        name, kind = key.rsplit(".", 1)
        spec = next(s for s in self.specs if s.name == name)
        return spec.shape if kind in ("w", "a") else (_bias_len(spec),)

    def param_keys(self) -> list[str]:
        return [k for s in self.specs for k in _param_keys(s)]

    def weight_keys(self) -> list[str]:
        """Keys entering the weight-decay term (no biases, no slopes)."""
        return [k for k in self.param_keys() if k.endswith(".w")]

    def clone(self, mode: int | None = None):
        return type(self)(self.n, self.mode if mode is None else mode, {k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype):
        return type(self)(self.n, self.mode, {k: v.astype(dtype) for k, v in self.params.items()})

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def predict(self, ctx) -> np.ndarray:
        """Denormalized, clipped n x n prediction for one context."""
        out, _ = self.forward(self.batch_inputs([ctx]))
        return denormalize(out[0]).reshape(self.n, self.n)


class FcModel(_Model):
    arch = ARCH_FC

    def __init__(self, n: int, mode: int, params: dict[str, np.ndarray]):
        if n not in FC_SIZES:
            raise ShapeError(f"FC model needs n in {FC_SIZES}, got {n}")
        w1 = params.get("fc1.w")
        if w1 is None or w1.ndim != 2:
            raise ShapeError("missing fc1.w")
        if w1.shape[0] != fc_context_len(n):
            raise ShapeError(f"FC input width {w1.shape[0]} != {fc_context_len(n)} for n={n}")
        self.width = w1.shape[1]
        self.specs = fc_layers(n, self.width)
        super().__init__(n, mode, params)

    @classmethod
    def create(cls, n: int, mode: int = BASELINE, seed: int = 0, width: int = FC_WIDTH, dtype=np.float32):
        return cls(n, mode, init_params(fc_layers(n, width), seed, dtype))

    def batch_inputs(self, ctxs) -> np.ndarray:
        for c in ctxs:
            if not isinstance(c, FcContext) or c.n != self.n:
                raise ValueError(f"context does not match FC model n={self.n}")
        return np.stack([c.values for c in ctxs]).astype(self.dtype)

    def forward(self, x):
        """Normalized output (N, n*n) and the cache needed by ``backward``."""
        p = self.params
        caches = []
        h = x
        for i in range(1, 4):
            h, c1 = L.affine_forward(h, p[f"fc{i}.w"], p[f"fc{i}.b"])
            h, c2 = L.prelu_forward(h, p[f"act{i}.a"])
            caches.append((c1, c2))
        out, c4 = L.affine_forward(h, p["fc4.w"], p["fc4.b"])
        caches.append(c4)
        return out, caches

    def backward(self, dout, caches) -> dict[str, np.ndarray]:
        grads = {}
        dh, grads["fc4.w"], grads["fc4.b"] = L.affine_backward(dout, caches[3])
        for i in range(3, 0, -1):
            c1, c2 = caches[i - 1]
            dh, grads[f"act{i}.a"] = L.prelu_backward(dh, c2)
            dh, grads[f"fc{i}.w"], grads[f"fc{i}.b"] = L.affine_backward(dh, c1)
        return grads


class CnnModel(_Model):
    arch = ARCH_CNN

    def __init__(self, n: int, mode: int, params: dict[str, np.ndarray]):
        if n not in CNN_SIZES:
            raise ShapeError(f"CNN model needs n in {CNN_SIZES}, got {n}")
        w1 = params.get("above.conv1.w")
        if w1 is None or w1.ndim != 4:
            raise ShapeError("missing above.conv1.w")
        self.filters = w1.shape[3]
        self.specs = cnn_layers(n, self.filters)
        self._seed = seed_shape(n, self.filters)
        super().__init__(n, mode, params)

    @classmethod
    def create(cls, n: int, mode: int = BASELINE, seed: int = 0, filters: int = CNN_FILTERS, dtype=np.float32):
        return cls(n, mode, init_params(cnn_layers(n, filters), seed, dtype))

    def batch_inputs(self, ctxs):
        for c in ctxs:
            if not isinstance(c, CnnContext) or c.n != self.n:
                raise ValueError(f"context does not match CNN model n={self.n}")
        above = np.stack([c.above for c in ctxs])[..., None].astype(self.dtype)
        left = np.stack([c.left for c in ctxs])[..., None].astype(self.dtype)
        return above, left

    def _path(self, prefix, x):
        p = self.params
        caches = []
        for spec in self.specs:
            if not spec.name.startswith(prefix + "."):
                continue
            if spec.kind == CONV:
                x, c = L.conv_forward(x, p[f"{spec.name}.w"], p[f"{spec.name}.b"], spec.stride)
            else:
                x, c = L.prelu_forward(x, p[f"{spec.name}.a"])
            caches.append((spec, c))
        return x, caches

    def forward(self, x):
        above, left = x
        p = self.params
        fa, above_caches = self._path("above", above)
        fl, left_caches = self._path("left", left)
        nb = fa.shape[0]
        cat = np.concatenate([fa.reshape(nb, -1), fl.reshape(nb, -1)], axis=1)
        h, merge_cache = L.affine_forward(cat, p["merge.w"], p["merge.b"])
        h, act_cache = L.prelu_forward(h, p["merge.act.a"])
        h = h.reshape(nb, *self._seed)
        head = []
        for spec in self.specs:
            if spec.kind == DECONV:
                h, c = L.deconv_forward(h, p[f"{spec.name}.w"], p[f"{spec.name}.b"], spec.stride)
            elif spec.name.startswith("deconv.act"):
                h, c = L.prelu_forward(h, p[f"{spec.name}.a"])
            else:
                continue
            head.append((spec, c))
        state = (above_caches, left_caches, merge_cache, act_cache, head, fa.shape, fl.shape)
        return h.reshape(nb, -1), state

    @staticmethod
    def _backprop(d, caches, grads):
        for spec, c in reversed(caches):
            if spec.kind == PRELU:
                d, grads[f"{spec.name}.a"] = L.prelu_backward(d, c)
            elif spec.kind == CONV:
                d, grads[f"{spec.name}.w"], grads[f"{spec.name}.b"] = L.conv_backward(d, c)
            else:
                d, grads[f"{spec.name}.w"], grads[f"{spec.name}.b"] = L.deconv_backward(d, c)
        return d

    def backward(self, dout, state) -> dict[str, np.ndarray]:
        above_caches, left_caches, merge_cache, act_cache, head, a_shape, l_shape = state
        grads = {}
        nb = dout.shape[0]
        d = self._backprop(dout.reshape(nb, self.n, self.n, 1), head, grads)
        d, grads["merge.act.a"] = L.prelu_backward(d.reshape(nb, -1), act_cache)
        dcat, grads["merge.w"], grads["merge.b"] = L.affine_backward(d, merge_cache)
        a_len = int(np.prod(a_shape[1:]))
        self._backprop(dcat[:, :a_len].reshape(a_shape), above_caches, grads)
        self._backprop(dcat[:, a_len:].reshape(l_shape), left_caches, grads)
        return grads


def make_model(n: int, mode: int = BASELINE, seed: int = 0, dtype=np.float32, **kw):
    if n in FC_SIZES:
        return FcModel.create(n, mode, seed, dtype=dtype, **kw)
    return CnnModel.create(n, mode, seed, dtype=dtype, **kw)


class ModelBank:
    """Inference over several same-architecture models of one size at once.

    Parameters are stacked along a leading model axis so a single set of
    batched matmuls evaluates every model; the encoder scores all modes with
    one call and the decoder evaluates one mode through the same code path,
    which keeps both reconstructions bit-identical.
    """

    def __init__(self, models):
        models = list(models)
        if not models:
            raise ValueError("empty model bank")
        first = models[0]
        for m in models[1:]:
            if type(m) is not type(first) or m.n != first.n or m.specs != first.specs or m.dtype != first.dtype:
                raise ShapeError("model bank needs models of one size and architecture")
        self.template = first
        self.n = first.n
        self.modes = [m.mode for m in models]
        self.params = {k: np.stack([m.params[k] for m in models]) for k in first.param_keys()}

    def __len__(self) -> int:
        return len(self.modes)

    def predict(self, ctx, index: slice | None = None) -> np.ndarray:
        """Denormalized (K, n, n) predictions of the selected models for one context."""
        sel = slice(None) if index is None else index
        p = {k: v[sel] for k, v in self.params.items()}
        x = self.template.batch_inputs([ctx])
        out = self._fc(p, x) if isinstance(self.template, FcModel) else self._cnn(p, x)
        return denormalize(out).reshape(-1, self.n, self.n)

    @staticmethod
    def _affine(h, w, b):
        return h @ w + b[:, None, :]

    @staticmethod
    def _prelu(h, a):
        a = a.reshape(a.shape[0], *([1] * (h.ndim - 2)), a.shape[-1])
        return np.where(h >= 0, h, a * h)

    def _fc(self, p, x):
        h = x[None]
        for i in range(1, 4):
            h = self._prelu(self._affine(h, p[f"fc{i}.w"], p[f"fc{i}.b"]), p[f"act{i}.a"])
        return self._affine(h, p["fc4.w"], p["fc4.b"])[:, 0]

    @staticmethod
    def _conv(x, w, b, stride):
        kb, nb, h, wd, c = x.shape
        k = w.shape[1]
        (pt, pb), (pl, pr) = L.same_pads(h, k, stride), L.same_pads(wd, k, stride)
        xp = np.pad(x.reshape(kb * nb, h, wd, c), ((0, 0), (pt, pb), (pl, pr), (0, 0)))
        oh, ow = -(-h // stride), -(-wd // stride)
        cols = L._im2col(xp, k, stride, oh, ow).reshape(kb, nb * oh * ow, -1)
        out = cols @ w.reshape(w.shape[0], -1, w.shape[-1]) + b[:, None, :]
        return out.reshape(-1, nb, oh, ow, w.shape[-1])

    @staticmethod
    def _deconv(x, w, b, stride):
        kb, nb, h, wd, cin = x.shape
        k, cout = w.shape[1], w.shape[3]
        oh, ow = h * stride, wd * stride
        (pt, pb), (pl, pr) = L.same_pads(oh, k, stride), L.same_pads(ow, k, stride)
        w2 = w.reshape(kb, -1, cin).transpose(0, 2, 1)  # (K, Cin, k*k*Cout)
        cols = x.reshape(kb, -1, cin) @ w2
        padded = (kb * nb, oh + pt + pb, ow + pl + pr, cout)
        outp = L._col2im(cols.reshape(-1, cols.shape[-1]), padded, k, stride, h, wd)
        out = outp[:, pt : pt + oh, pl : pl + ow].reshape(kb, nb, oh, ow, cout)
        return out + b[:, None, None, None, :]

    def _path(self, p, prefix, x):
        for spec in self.template.specs:
            if not spec.name.startswith(prefix + "."):
                continue
            if spec.kind == CONV:
                x = self._conv(x, p[f"{spec.name}.w"], p[f"{spec.name}.b"], spec.stride)
            else:
                x = self._prelu(x, p[f"{spec.name}.a"])
        return x

    def _cnn(self, p, x):
        above, left = x
        kb = p["merge.w"].shape[0]
        # the first convolution sees the same context for every model
        fa = self._path(p, "above", np.broadcast_to(above[None], (kb, *above.shape)))
        fl = self._path(p, "left", np.broadcast_to(left[None], (kb, *left.shape)))
        nb = fa.shape[1]
        cat = np.concatenate([fa.reshape(kb, nb, -1), fl.reshape(kb, nb, -1)], axis=2)
        h = self._prelu(self._affine(cat, p["merge.w"], p["merge.b"]), p["merge.act.a"])
        h = h.reshape(kb, nb, *self.template._seed)
        for spec in self.template.specs:
            if spec.kind == DECONV:
                h = self._deconv(h, p[f"{spec.name}.w"], p[f"{spec.name}.b"], spec.stride)
            elif spec.name.startswith("deconv.act"):
                h = self._prelu(h, p[f"{spec.name}.a"])
        return h.reshape(kb, -1)


def count_flops(model) -> int:
    """Multiplies and adds counted separately; PReLU costs one op per activation."""
    total = 0
    specs = model.specs
    for spec in specs:
        if spec.kind == DENSE:
            total += 2 * spec.shape[0] * spec.shape[1]
        elif spec.kind == CONV:
            k, _, cin, cout = spec.shape
            oh, ow = (-(-spec.in_hw[0] // spec.stride), -(-spec.in_hw[1] // spec.stride))
            total += 2 * oh * ow * k * k * cin * cout
        elif spec.kind == DECONV:
            k, _, cout, cin = spec.shape
            total += 2 * spec.in_hw[0] * spec.in_hw[1] * k * k * cin * cout
    total += _prelu_activations(model)
    return total


def _prelu_activations(model) -> int:
    count = 0
    prev_out = None
    for spec in model.specs:
        if spec.kind == DENSE:
            prev_out = spec.shape[1]
        elif spec.kind == CONV:
            oh, ow = (-(-spec.in_hw[0] // spec.stride), -(-spec.in_hw[1] // spec.stride))
            prev_out = oh * ow * spec.shape[3]
        elif spec.kind == DECONV:
            prev_out = spec.in_hw[0] * spec.stride * spec.in_hw[1] * spec.stride * spec.shape[2]
        else:
            count += prev_out
    return count


# --- NMIP model files -------------------------------------------------------

MAGIC = b"NMIP"
FORMAT_VERSION = 1


def _to_file_layout(spec: LayerSpec, w: np.ndarray) -> np.ndarray:
    if spec.kind == CONV:
        return w.transpose(3, 2, 0, 1)  # (outC, inC, kH, kW)
    if spec.kind == DECONV:
        return w.transpose(2, 3, 0, 1)
    return w.T  # dense: (out, in)


def _from_file_layout(kind: int, w: np.ndarray) -> np.ndarray:
    if kind == CONV:
        return w.transpose(2, 3, 1, 0)
    if kind == DECONV:
        return w.transpose(2, 3, 0, 1)
    if kind == DENSE:
        return w.T
    return w


def model_to_bytes(model) -> bytes:
    out = [MAGIC, struct.pack("<BBBBB", FORMAT_VERSION, model.arch, model.n, model.mode, NORM_TAG)]
    out.append(struct.pack("<H", len(model.specs)))
    for spec in model.specs:
        if spec.kind == PRELU:
            a = model.params[f"{spec.name}.a"]
            out.append(struct.pack("<BBB", PRELU, 1, 1) + struct.pack("<H", a.shape[0]))
            out.append(a.astype("<f4").tobytes())
            continue
        w = _to_file_layout(spec, model.params[f"{spec.name}.w"])
        out.append(struct.pack("<BBB", spec.kind, spec.stride, w.ndim) + struct.pack(f"<{w.ndim}H", *w.shape))
        out.append(np.ascontiguousarray(w).astype("<f4").tobytes())
        out.append(model.params[f"{spec.name}.b"].astype("<f4").tobytes())
    return b"".join(out)


class _Cursor:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise FormatError("truncated model file")
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<f4").astype(np.float32)


def model_from_bytes(data: bytes):
    cur = _Cursor(data)
    if cur.take(4) != MAGIC:
        raise FormatError("bad magic, not an NMIP model file")
    version, arch, n, mode, norm = cur.unpack("<BBBBB")
    if version != FORMAT_VERSION:
        raise FormatError(f"model format version {version} != {FORMAT_VERSION}")
    if norm != NORM_TAG:
        raise FormatError(f"unknown normalization tag {norm}")
    if arch not in (ARCH_FC, ARCH_CNN):
        raise FormatError(f"unknown architecture tag {arch}")
    if mode >= NUM_MODES and mode != BASELINE:
        raise FormatError(f"invalid mode {mode}")
    (count,) = cur.unpack("<H")
    raw = []
    for _ in range(count):
        kind, stride, ndim = cur.unpack("<BBB")
        if kind > PRELU or ndim not in (1, 2, 4):
            raise FormatError(f"bad layer record (type {kind}, ndim {ndim})")
        shape = cur.unpack(f"<{ndim}H")
        size = int(np.prod(shape))
        w = cur.floats(size).reshape(shape)
        b = None if kind == PRELU else cur.floats(shape[0])
        raw.append((kind, stride, w, b))
    if cur.pos != len(data):
        raise FormatError("trailing bytes after model payload")
    cls = FcModel if arch == ARCH_FC else CnnModel
    if (arch == ARCH_FC) != (n in FC_SIZES) or n not in BLOCK_SIZES:
        raise ShapeError(f"architecture tag {arch} incompatible with n={n}")
    if not raw or raw[0][0] not in (DENSE, CONV):
        raise ShapeError("first layer must be dense or convolutional")
    first = _from_file_layout(raw[0][0], raw[0][2])
    if arch == ARCH_FC:
        if first.shape[0] != fc_context_len(n):
            raise ShapeError(f"FC input width {first.shape[0]} != {fc_context_len(n)} for n={n}")
        specs = fc_layers(n, first.shape[1])
    else:
        specs = cnn_layers(n, first.shape[3])
    if len(specs) != len(raw):
        raise ShapeError(f"{len(raw)} layers, architecture needs {len(specs)}")
    params = {}
    for spec, (kind, stride, w, b) in zip(specs, raw):
        if kind != spec.kind or (kind != PRELU and stride != spec.stride):
            raise ShapeError(f"layer {spec.name}: type/stride mismatch")
        if kind == PRELU:
            params[f"{spec.name}.a"] = w
            continue
        params[f"{spec.name}.w"] = _from_file_layout(kind, w).copy()
        params[f"{spec.name}.b"] = b
    return cls(n, mode, params)


def save_model(model, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path):
    return model_from_bytes(Path(path).read_bytes())


# --- registry ---------------------------------------------------------------

MANIFEST = "manifest.txt"


class ModelRegistry:
    """(size, mode) -> model for the 35 modes of each block size, plus baselines."""

    def __init__(self, models=None, baselines=None):
        self.models: dict[tuple[int, int], object] = dict(models or {})
        self.baselines: dict[int, object] = dict(baselines or {})
        self._digest = None

    def add(self, model) -> None:
        if model.mode == BASELINE:
            self.baselines[model.n] = model
        else:
            self.models[(model.n, model.mode)] = model
        self._digest = None

    def get(self, n: int, mode: int):
        try:
            return self.models[(n, mode)]
        except KeyError:
            raise ModelError(f"registry has no model for size {n}, mode {mode}") from None

    def sizes(self) -> list[int]:
        return sorted({n for n, _ in self.models})

    def missing(self, sizes=BLOCK_SIZES) -> list[tuple[int, int]]:
        return [(n, m) for n in sizes for m in range(NUM_MODES) if (n, m) not in self.models]

    def check_complete(self, sizes=BLOCK_SIZES) -> None:
        miss = self.missing(sizes)
        if miss:
            raise ModelError(f"registry incomplete: {len(miss)} entries missing, first {miss[0]}")
        for (n, m), model in self.models.items():
            if model.n != n or model.mode != m:
                raise ModelError(f"entry ({n}, {m}) holds model for ({model.n}, {model.mode})")

    def digest(self) -> int:
        """64-bit content digest carried in bitstream headers."""
        if self._digest is None:
            h = hashlib.sha256()
            for key in sorted(self.models):
                h.update(struct.pack("<BB", *key))
                h.update(model_to_bytes(self.models[key]))
            self._digest = int.from_bytes(h.digest()[:8], "big") or 1
        return self._digest

    def _entries(self):
        for n in sorted(self.baselines):
            yield n, BASELINE, self.baselines[n], f"n{n:02d}_base.nmip"
        for (n, m) in sorted(self.models):
            yield n, m, self.models[(n, m)], f"n{n:02d}_m{m:02d}.nmip"

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        lines = []
        for n, m, model, name in self._entries():
            save_model(model, directory / name)
            lines.append(f"{n} {m} {name}\n")
        (directory / MANIFEST).write_text("".join(lines))

    @classmethod
    def load(cls, directory) -> ModelRegistry:
        directory = Path(directory)
        manifest = directory / MANIFEST
        if not manifest.exists():
            raise ModelError(f"no {MANIFEST} in {directory}")
        reg = cls()
        for line in manifest.read_text().splitlines():
            if not line.strip():
                continue
            try:
                n_s, m_s, rel = line.split()
                n, m = int(n_s), int(m_s)
            except ValueError:
                raise FormatError(f"bad manifest line: {line!r}") from None
            model = load_model(directory / rel)
            if model.n != n or model.mode != m:
                raise ModelError(f"{rel}: file declares ({model.n}, {model.mode}), manifest says ({n}, {m})")
            reg.add(model)
        return reg
