"""Reference-sample extraction for the neural and traditional predictors.

Neural contexts substitute every unavailable sample with 128 and then map
samples to ``x / 255 - 0.5``. Traditional reference lines use the HEVC
bottom-left to top-right substitution scan on raw samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MAX_SAMPLE, UNAVAILABLE_FILL, BlockRect, ReconBuffer

FC_SIZES = (4, 8)
CNN_SIZES = (16, 32)
FC_THICKNESS = 8

# Stored in model files so a model cannot be paired with a different scaling.
NORM_TAG = 0


def normalize(samples) -> np.ndarray:
    return np.asarray(samples, dtype=np.float32) / np.float32(MAX_SAMPLE) - np.float32(0.5)


def denormalize(values) -> np.ndarray:
    """Network output back to 8-bit samples: clip(round((v + 0.5) * 255))."""
    v = (np.asarray(values, dtype=np.float64) + 0.5) * MAX_SAMPLE
    return np.clip(np.floor(v + 0.5), 0, MAX_SAMPLE).astype(np.int32)


def fc_context_len(n: int) -> int:
    return (4 * n + 8) * FC_THICKNESS


@dataclass(frozen=True)
class FcContext:
    n: int
    values: np.ndarray  # ((4n + 8) * 8,) float32


@dataclass(frozen=True)
class CnnContext:
    n: int
    above: np.ndarray  # (n, 3n): rows -n..-1, cols -n..2n-1
    left: np.ndarray  # (2n, n): rows 0..2n-1, cols -n..-1


@dataclass(frozen=True)
class TmReferenceLine:
    top: np.ndarray  # 2n+1: corner, then p[0..2n-1][-1]
    left: np.ndarray  # 2n: p[-1][0..2n-1]

    @property
    def n(self) -> int:
        return len(self.left) // 2


def _region(recon: ReconBuffer, y0: int, x0: int, h: int, w: int):
    """Samples and availability of a rectangle that may leave the frame."""
    vals = np.full((h, w), UNAVAILABLE_FILL, dtype=np.int32)
    avail = np.zeros((h, w), dtype=bool)
    ya, yb = max(y0, 0), min(y0 + h, recon.height)
    xa, xb = max(x0, 0), min(x0 + w, recon.width)
    if ya < yb and xa < xb:
        inner = (slice(ya - y0, yb - y0), slice(xa - x0, xb - x0))
        avail[inner] = recon.decoded[ya:yb, xa:xb]
        vals[inner] = np.where(avail[inner], recon.samples[ya:yb, xa:xb], UNAVAILABLE_FILL)
    return vals, avail


def extract_fc_context(recon: ReconBuffer, b: BlockRect) -> FcContext:
    """Flattened L-shape: top strip (8 x (3n+8)) then left strip (n x 8), row-major."""
    if b.n not in FC_SIZES:
        raise ValueError(f"FC context needs n in {FC_SIZES}, got {b.n}")
    t = FC_THICKNESS
    top, _ = _region(recon, b.y - t, b.x - t, t, 3 * b.n + t)
    left, _ = _region(recon, b.y, b.x - t, b.n, t)
    values = normalize(np.concatenate([top.ravel(), left.ravel()]))
    return FcContext(b.n, values)


def extract_cnn_context(recon: ReconBuffer, b: BlockRect) -> CnnContext:
    if b.n not in CNN_SIZES:
        raise ValueError(f"CNN context needs n in {CNN_SIZES}, got {b.n}")
    n = b.n
    above, _ = _region(recon, b.y - n, b.x - n, n, 3 * n)
    left, _ = _region(recon, b.y, b.x - n, 2 * n, n)
    return CnnContext(n, normalize(above), normalize(left))


def extract_context(recon: ReconBuffer, b: BlockRect) -> FcContext | CnnContext:
    if b.n in FC_SIZES:
        return extract_fc_context(recon, b)
    return extract_cnn_context(recon, b)


def substitute_references(samples: np.ndarray, avail: np.ndarray) -> np.ndarray:
    """HEVC reference substitution over a line ordered bottom-left to top-right."""
    out = np.asarray(samples, dtype=np.int32).copy()
    if not avail.any():
        out[:] = UNAVAILABLE_FILL
        return out
    first = int(np.argmax(avail))
    out[:first] = out[first]
    for i in range(first + 1, len(out)):
        if not avail[i]:
            out[i] = out[i - 1]
    return out


def extract_tm_refline(recon: ReconBuffer, b: BlockRect) -> TmReferenceLine:
    n = b.n
    top, top_ok = _region(recon, b.y - 1, b.x - 1, 1, 2 * n + 1)
    left, left_ok = _region(recon, b.y, b.x - 1, 2 * n, 1)
    line = np.concatenate([left[::-1, 0], top[0]])
    ok = np.concatenate([left_ok[::-1, 0], top_ok[0]])
    line = substitute_references(line, ok)
    return TmReferenceLine(top=line[2 * n :].copy(), left=line[: 2 * n][::-1].copy())
