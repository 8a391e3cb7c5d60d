"""PSNR, Bjontegaard delta rate, best-mode statistics and per-mode predictor quality."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .context import denormalize
from .core import MAX_SAMPLE, Plane
from .intra_nm import NUM_MODES, count_flops
from .intra_tm import predict_tm

SLOT_NAMES = ("mpm0", "mpm1", "mpm2", "non_mpm")

# Best-mode probability (%) by MPM slot reported for one sequence at QP 32.
REFERENCE_SLOT_PERCENT = {
    "origin_tm": (29.5, 18.7, 14.9, 36.9),
    "proposal_nm": (29.2, 16.7, 14.0, 40.1),
}
# Reference FLOPs per predictor: FC in thousands, CNN in millions.
REFERENCE_FLOPS = {4: 121e3, 8: 167e3, 16: 6.4e6, 32: 35.4e6}


@dataclass(frozen=True)
class RdPoint:
    bitrate: float
    psnr: float

    def __post_init__(self):
        if not self.bitrate > 0:
            raise ValueError("bitrate must be positive")


def psnr(a: Plane | np.ndarray, b: Plane | np.ndarray) -> float:
    """10 log10(255^2 / MSE); ``inf`` for identical inputs."""
    a = a.samples if isinstance(a, Plane) else np.asarray(a)
    b = b.samples if isinstance(b, Plane) else np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    mse = float(((a.astype(np.float64) - b.astype(np.float64)) ** 2).mean())
    return psnr_from_mse(mse)


def psnr_from_mse(mse: float) -> float:
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(MAX_SAMPLE**2 / mse)


def bd_rate(anchor, test) -> float:
    """Average rate difference (%) at equal PSNR; negative means ``test`` saves bits.

    Classic cubic fit of log-rate against PSNR, integrated over the PSNR
    range both curves cover.
    """
    anchor = [p if isinstance(p, RdPoint) else RdPoint(*p) for p in anchor]
    test = [p if isinstance(p, RdPoint) else RdPoint(*p) for p in test]
    if len(anchor) < 4 or len(test) < 4:
        raise ValueError("need at least 4 R-D points per curve")
    q1 = np.array([p.psnr for p in anchor])
    q2 = np.array([p.psnr for p in test])
    if len(set(q1)) != len(q1) or len(set(q2)) != len(q2):
        raise ValueError("PSNR values within a curve must be distinct")
    r1 = np.log([p.bitrate for p in anchor])
    r2 = np.log([p.bitrate for p in test])
    lo = max(q1.min(), q2.min())
    hi = min(q1.max(), q2.max())
    if not hi > lo:
        raise ValueError("curves have no PSNR overlap")
    p1 = np.polyint(np.polyfit(q1, r1, 3))
    p2 = np.polyint(np.polyfit(q2, r2, 3))
    int1 = np.polyval(p1, hi) - np.polyval(p1, lo)
    int2 = np.polyval(p2, hi) - np.polyval(p2, lo)
    avg = (int2 - int1) / (hi - lo)
    return float((math.exp(avg) - 1.0) * 100.0)


@dataclass
class ModeStats:
    """Best-mode counts per block size, by mode index and by MPM slot."""

    modes: dict[int, Counter] = field(default_factory=dict)
    slots: dict[int, Counter] = field(default_factory=dict)

    def add(self, n: int, mode: int, slot: int) -> None:
        self.modes.setdefault(n, Counter())[mode] += 1
        self.slots.setdefault(n, Counter())[slot] += 1

    @classmethod
    def from_blocks(cls, blocks) -> ModeStats:
        st = cls()
        for b in blocks:
            st.add(b.n, b.mode, b.mpm_slot)
        return st

    def merge(self, other: ModeStats) -> ModeStats:
        out = ModeStats()
        for src in (self, other):
            for n, c in src.modes.items():
                out.modes.setdefault(n, Counter()).update(c)
            for n, c in src.slots.items():
                out.slots.setdefault(n, Counter()).update(c)
        return out

    def total(self, n: int | None = None) -> int:
        sizes = [n] if n is not None else list(self.slots)
        return sum(sum(self.slots.get(s, Counter()).values()) for s in sizes)

    def slot_counts(self, n: int | None = None) -> list[int]:
        sizes = [n] if n is not None else list(self.slots)
        return [sum(self.slots.get(s, Counter())[k] for s in sizes) for k in range(4)]

    def mode_counts(self, n: int | None = None) -> list[int]:
        sizes = [n] if n is not None else list(self.modes)
        return [sum(self.modes.get(s, Counter())[m] for s in sizes) for m in range(NUM_MODES)]


def mode_probability_report(stats: ModeStats) -> dict:
    """Slot and per-mode percentages (overall and per size) plus the two ordering checks.

    ``per_mode_mpm`` is the chance a given MPM entry is the best mode
    (hits / (3 * blocks)); ``per_mode_non_mpm`` likewise over the 32 others.
    """
    total = stats.total()
    if total == 0:
        raise ValueError("empty mode statistics")
    report = {"total": total, "slots": {}, "modes": {}, "raw": {}}
    for key in [None] + sorted(stats.slots):
        t = stats.total(key)
        label = "all" if key is None else key
        report["slots"][label] = [100.0 * c / t for c in stats.slot_counts(key)]
        report["modes"][label] = [100.0 * c / t for c in stats.mode_counts(key)]
        report["raw"][label] = [c / t for c in stats.mode_counts(key)]
    s0, s1, s2, non = stats.slot_counts()
    report["per_mode_mpm"] = (s0 + s1 + s2) / (3 * total)
    report["per_mode_non_mpm"] = non / (32 * total)
    report["p_mpm0"] = s0 / total
    report["p_mpm12_per_mode"] = (s1 + s2) / (2 * total)
    report["mpm_beats_non_mpm"] = report["per_mode_mpm"] > report["per_mode_non_mpm"]
    report["mpm0_beats_mpm12"] = report["p_mpm0"] > report["p_mpm12_per_mode"]
    report["slot_order_holds"] = s0 > s1 > s2
    return report


def write_slot_report(report: dict, path, provenance: str = "") -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["size", *SLOT_NAMES, "provenance"])
        for size, row in report["slots"].items():
            w.writerow([size, *(f"{v:.3f}" for v in row), provenance])
        for name, row in REFERENCE_SLOT_PERCENT.items():
            w.writerow([f"reference_{name}", *row, "published, one sequence at QP 32"])


def write_mode_series(report: dict, path) -> None:
    """Per-mode best-mode probability series, one column per block size."""
    labels = list(report["raw"])
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["mode", *(f"p_{lab}" for lab in labels)])
        for m in range(NUM_MODES):
            w.writerow([m, *(f"{report['raw'][lab][m]:.6g}" for lab in labels)])


@dataclass
class ModePsnr:
    mode: int
    count: int
    nm: float | None
    tm: float | None


def per_mode_psnr(registry, samples, n: int) -> list[ModePsnr]:
    """Pooled-MSE prediction PSNR per labelled mode, NM model i vs TM mode i.

    Modes without held-out blocks get ``count == 0`` and ``None`` values.
    """
    parts: dict[int, list] = {m: [] for m in range(NUM_MODES)}
    for s in samples:
        if s.n == n:
            parts[s.mode].append(s)
    out = []
    for mode, part in parts.items():
        if not part:
            out.append(ModePsnr(mode, 0, None, None))
            continue
        orig = np.stack([denormalize(s.target) for s in part]).astype(np.float64)
        model = registry.get(n, mode)
        raw, _ = model.forward(model.batch_inputs([s.context for s in part]))
        nm_pred = denormalize(raw).reshape(orig.shape)
        tm_pred = np.stack([predict_tm(mode, s.refs, n) for s in part])
        out.append(
            ModePsnr(
                mode,
                len(part),
                psnr_from_mse(float(((nm_pred - orig) ** 2).mean())),
                psnr_from_mse(float(((tm_pred - orig) ** 2).mean())),
            )
        )
    return out


def write_mode_psnr(rows: list[ModePsnr], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["mode", "count", "nm_psnr", "tm_psnr"])
        for r in rows:
            w.writerow([r.mode, r.count, "" if r.nm is None else f"{r.nm:.4f}", "" if r.tm is None else f"{r.tm:.4f}"])


def flops_report(models) -> list[dict]:
    """One row per model: size, FLOPs, published reference, ratio."""
    rows = []
    for m in models:
        f = count_flops(m)
        rows.append({"n": m.n, "flops": f, "reference": REFERENCE_FLOPS[m.n], "ratio": f / REFERENCE_FLOPS[m.n]})
    return rows


def write_rd_points(points, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bitrate", "psnr"])
        for p in points:
            w.writerow([p.bitrate, "inf" if math.isinf(p.psnr) else f"{p.psnr:.6f}"])


def read_rd_points(path) -> list[RdPoint]:
    with open(Path(path), newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows or "bitrate" not in rows[0] or "psnr" not in rows[0]:
        raise ValueError(f"{path}: expected CSV columns bitrate,psnr")
    return [RdPoint(float(r["bitrate"]), float(r["psnr"])) for r in rows]
