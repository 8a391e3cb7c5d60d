"""Training-set extraction, loss/gradients, ADAM and the baseline + per-mode schedule."""

from __future__ import annotations

import logging
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coder import TmPredictor, encode_frame
from .context import (
    CnnContext,
    FcContext,
    TmReferenceLine,
    extract_context,
    extract_tm_refline,
    fc_context_len,
    normalize,
)
from .core import BLOCK_SIZES, BlockRect, Plane, ReconBuffer, pad_to_grid
from .errors import FormatError
from .intra_nm import ARCH_FC, BASELINE, NUM_MODES, ModelRegistry, make_model

log = logging.getLogger(__name__)

DEFAULT_QPS = (22, 27, 32, 37)


@dataclass
class TrainingSample:
    n: int
    mode: int
    qp: int
    context: FcContext | CnnContext
    target: np.ndarray  # (n, n) original samples, normalized
    refs: TmReferenceLine


@dataclass
class TrainConfig:
    reg_lambda: float = 0.0005
    batch_size: int = 16
    lr_fc: float = 0.0001
    lr_cnn: float = 0.0004
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs_baseline: int = 1
    epochs_finetune: int = 1
    seed: int = 0
    norm: str = "l2"  # "l2": per-sample Euclidean norm; "mse": mean squared error
    fc_width: int = 128
    cnn_filters: int = 16

    def __post_init__(self):
        if min(self.reg_lambda, self.lr_fc, self.lr_cnn, self.eps) < 0 or self.batch_size < 1:
            raise ValueError("training hyper-parameters must be positive")
        if self.epochs_baseline < 1 or self.epochs_finetune < 0:
            raise ValueError("epoch counts must be positive")
        if self.norm not in ("l2", "mse"):
            raise ValueError(f"unknown loss convention {self.norm!r}")

    def lr(self, arch: int) -> float:
        return self.lr_fc if arch == ARCH_FC else self.lr_cnn


# --- dataset ------------------------------------------------------------------


def samples_from_encode(plane: Plane, result, qp: int) -> list[TrainingSample]:
    """Replay an encode in coding order so every context sees coding-time availability."""
    padded = pad_to_grid(plane)
    final = result.padded_recon.samples.astype(np.int32)
    recon = ReconBuffer.empty(padded.height, padded.width)
    out = []
    for st in result.stats:
        rect = BlockRect(st.x, st.y, st.n)
        ys, xs = rect.slices
        out.append(
            TrainingSample(
                n=st.n,
                mode=st.mode,
                qp=qp,
                context=extract_context(recon, rect),
                target=normalize(padded.samples[ys, xs]),
                refs=extract_tm_refline(recon, rect),
            )
        )
        recon.commit(rect, final[ys, xs])
    return out


def _searched_recorder(padded: Plane, qp: int, out: list):
    def observe(rect, recon, decision):
        ys, xs = rect.slices
        out.append(
            TrainingSample(
                n=rect.n,
                mode=decision.mode,
                qp=qp,
                context=extract_context(recon, rect),
                target=normalize(padded.samples[ys, xs]),
                refs=extract_tm_refline(recon, rect),
            )
        )

    return observe


def extract_dataset(corpus, qps=DEFAULT_QPS, blocks: str = "leaves") -> dict[int, list[TrainingSample]]:
    """Encode every plane with the TM codec at each QP; label blocks by their chosen mode.

    ``blocks="leaves"`` keeps the blocks of the final quadtree; ``"searched"``
    keeps every block the R-D search coded, including the alternatives it
    discarded, each with the reconstruction available when it was coded.
    """
    if blocks not in ("leaves", "searched"):
        raise ValueError(f"unknown block selection {blocks!r}")
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty corpus")
    data: dict[int, list[TrainingSample]] = {n: [] for n in BLOCK_SIZES}
    tm = TmPredictor()
    for i, plane in enumerate(corpus):
        for qp in qps:
            if blocks == "leaves":
                samples = samples_from_encode(plane, encode_frame(plane, qp, tm), qp)
            else:
                samples = []
                encode_frame(plane, qp, tm, observer=_searched_recorder(pad_to_grid(plane), qp, samples))
            for s in samples:
                data[s.n].append(s)
        log.info("extracted plane %d/%d", i + 1, len(corpus))
    return data


def partition(samples) -> dict[int, list[TrainingSample]]:
    parts = defaultdict(list)
    for s in samples:
        parts[s.mode].append(s)
    return {m: parts.get(m, []) for m in range(NUM_MODES)}


DATASET_MAGIC = b"NMDS"


def _context_floats(ctx) -> np.ndarray:
    if isinstance(ctx, FcContext):
        return ctx.values
    return np.concatenate([ctx.above.ravel(), ctx.left.ravel()])


def save_dataset(data: dict[int, list[TrainingSample]], path) -> None:
    """Record: size u8, mode u8, qp u8, context f32s, target f32s, TM reference line u8s."""
    chunks = [DATASET_MAGIC]
    for n in sorted(data):
        for s in data[n]:
            chunks.append(struct.pack("<BBB", s.n, s.mode, s.qp))
            chunks.append(_context_floats(s.context).astype("<f4").tobytes())
            chunks.append(s.target.astype("<f4").tobytes())
            chunks.append(np.concatenate([s.refs.top, s.refs.left]).astype(np.uint8).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_dataset(path) -> dict[int, list[TrainingSample]]:
    raw = Path(path).read_bytes()
    if raw[:4] != DATASET_MAGIC:
        raise FormatError("bad magic, not an NMDS dataset")
    data: dict[int, list[TrainingSample]] = {n: [] for n in BLOCK_SIZES}
    pos = 4
    while pos < len(raw):
        if pos + 3 > len(raw):
            raise FormatError("truncated dataset record")
        n, mode, qp = struct.unpack_from("<BBB", raw, pos)
        pos += 3
        if n not in BLOCK_SIZES or mode >= NUM_MODES:
            raise FormatError(f"bad dataset record header ({n}, {mode})")
        clen = fc_context_len(n) if n <= 8 else 5 * n * n
        need = 4 * clen + 4 * n * n + 4 * n + 1
        if pos + need > len(raw):
            raise FormatError("truncated dataset record")
        ctx = np.frombuffer(raw, "<f4", clen, pos).astype(np.float32)
        pos += 4 * clen
        target = np.frombuffer(raw, "<f4", n * n, pos).astype(np.float32).reshape(n, n)
        pos += 4 * n * n
        line = np.frombuffer(raw, np.uint8, 4 * n + 1, pos).astype(np.int32)
        pos += 4 * n + 1
        if n <= 8:
            context = FcContext(n, ctx)
        else:
            context = CnnContext(n, ctx[: 3 * n * n].reshape(n, 3 * n), ctx[3 * n * n :].reshape(2 * n, n))
        refs = TmReferenceLine(top=line[: 2 * n + 1], left=line[2 * n + 1 :])
        data[n].append(TrainingSample(n, mode, qp, context, target, refs))
    return data


# --- loss and gradients ---------------------------------------------------------


def batch_arrays(model, samples):
    x = model.batch_inputs([s.context for s in samples])
    y = np.stack([s.target.ravel() for s in samples]).astype(model.dtype)
    return x, y


def _check_batch(model, samples) -> None:
    if not samples:
        raise ValueError("empty batch")
    if any(s.n != model.n for s in samples):
        raise ValueError("mixed batch: sample size differs from model size")


def _data_term(err: np.ndarray, norm: str):
    """Mean data loss and its gradient w.r.t. the network output."""
    m = err.shape[0]
    if norm == "mse":
        return float((err**2).mean()), 2.0 * err / err.size
    dist = np.sqrt((err.astype(np.float64) ** 2).sum(axis=1))
    safe = np.where(dist > 0, dist, 1.0)
    grad = np.where(dist[:, None] > 0, err / safe[:, None], 0.0) / m
    return float(dist.mean()), grad.astype(err.dtype)


def _reg_term(model, lam: float) -> float:
    return lam * float(sum((model.params[k].astype(np.float64) ** 2).sum() for k in model.weight_keys()))


def loss_arrays(model, x, y, lam: float = 0.0005, norm: str = "l2") -> float:
    out, _ = model.forward(x)
    return _data_term(out - y, norm)[0] + _reg_term(model, lam)


def loss(model, samples, lam: float = 0.0005, norm: str = "l2") -> float:
    """J = (1/M) sum ||F(R) - Y||_2 + lam * ||theta_w||^2 over one homogeneous batch."""
    _check_batch(model, samples)
    return loss_arrays(model, *batch_arrays(model, samples), lam=lam, norm=norm)


def backward_arrays(model, x, y, lam: float = 0.0005, norm: str = "l2"):
    out, cache = model.forward(x)
    data, dout = _data_term(out - y, norm)
    grads = model.backward(dout, cache)
    for k in model.weight_keys():
        grads[k] = grads[k] + 2.0 * lam * model.params[k]
    return data + _reg_term(model, lam), grads


def backward(model, samples, lam: float = 0.0005, norm: str = "l2") -> dict[str, np.ndarray]:
    """Exact reverse-mode gradient of ``loss`` for every weight, bias and PReLU slope."""
    _check_batch(model, samples)
    return backward_arrays(model, *batch_arrays(model, samples), lam=lam, norm=norm)[1]


# --- optimizer ------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> AdamState:
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params, grads, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
    """In-place bias-corrected ADAM update of ``params`` and ``state``."""
    if grads.keys() != params.keys():
        raise ValueError("gradient keys do not match parameters")
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"{k}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)


# --- schedule ---------------------------------------------------------------------


@dataclass
class TrainReport:
    n: int
    baseline_iterations: int = 0
    finetune_iterations: dict[int, int] = field(default_factory=dict)
    rows: list[tuple[str, int, int, float]] = field(default_factory=list)  # phase, mode, iter, loss

    def csv(self) -> str:
        return "phase,mode,iter,loss\n" + "".join(f"{p},{m},{i},{l:.6g}\n" for p, m, i, l in self.rows)


def run_iterations(model, samples, cfg: TrainConfig, epochs: int, rng, report: TrainReport, phase: str, mode: int) -> int:
    """floor(card / M) ADAM updates per epoch over reshuffled ``samples``."""
    m = cfg.batch_size
    per_epoch = len(samples) // m
    if per_epoch == 0:
        return 0
    x_all, y_all = batch_arrays(model, samples)
    state = AdamState.zeros_like(model.params)
    lr = cfg.lr(model.arch)
    done = 0
    for _ in range(epochs):
        perm = rng.permutation(len(samples))
        for it in range(per_epoch):
            idx = perm[it * m : (it + 1) * m]
            xb = tuple(a[idx] for a in x_all) if isinstance(x_all, tuple) else x_all[idx]
            j, grads = backward_arrays(model, xb, y_all[idx], cfg.reg_lambda, cfg.norm)
            adam_step(model.params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.eps)
            report.rows.append((phase, mode, done, j))
            done += 1
    return done


def train_size(samples, n: int, cfg: TrainConfig):
    """Baseline on all of one size's samples, then one fine-tuned clone per mode.

    Returns ``(baseline, {mode: model}, report)``.
    """
    samples = [s for s in samples if s.n == n]
    if not samples:
        raise ValueError(f"no training samples for size {n}")
    kw = {"width": cfg.fc_width} if n <= 8 else {"filters": cfg.cnn_filters}
    baseline = make_model(n, BASELINE, seed=cfg.seed * 1000 + n, **kw)
    report = TrainReport(n)
    rng = np.random.default_rng([cfg.seed, n, BASELINE])
    report.baseline_iterations = run_iterations(baseline, samples, cfg, cfg.epochs_baseline, rng, report, "baseline", BASELINE)
    models = {}
    for mode, part in partition(samples).items():
        model = baseline.clone(mode)
        rng = np.random.default_rng([cfg.seed, n, mode])
        report.finetune_iterations[mode] = run_iterations(model, part, cfg, cfg.epochs_finetune, rng, report, "finetune", mode)
        models[mode] = model
    log.info("size %d: %d baseline iterations, %d fine-tune iterations", n,
             report.baseline_iterations, sum(report.finetune_iterations.values()))
    return baseline, models, report


def train_all(dataset: dict[int, list[TrainingSample]], cfg: TrainConfig, sizes=BLOCK_SIZES):
    """Train every requested size; returns ``(registry, {size: report})``."""
    registry = ModelRegistry()
    reports = {}
    for n in sizes:
        baseline, models, reports[n] = train_size(dataset.get(n, []), n, cfg)
        registry.add(baseline)
        for model in models.values():
            registry.add(model)
    return registry, reports
