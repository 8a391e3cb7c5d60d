"""The 35 HEVC intra modes (Planar, DC, 33 angular) without post-filters.

``predict_tm`` is the plain per-mode reference; ``predict_all_tm`` evaluates
all 35 modes at once from precomputed gather tables and is what the encoder
uses. Both must agree bit for bit.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .context import TmReferenceLine

NUM_MODES = 35
PLANAR, DC, HORIZONTAL, DIAGONAL, VERTICAL = 0, 1, 10, 18, 26

# intraPredAngle for modes 2..34
PRED_ANGLE = (
    32, 26, 21, 17, 13, 9, 5, 2, 0, -2, -5, -9, -13, -17, -21, -26,
    -32, -26, -21, -17, -13, -9, -5, -2, 0, 2, 5, 9, 13, 17, 21, 26, 32,
)
INV_ANGLE = {-2: -4096, -5: -1638, -9: -910, -13: -630, -17: -482, -21: -390, -26: -315, -32: -256}


def pred_angle(mode: int) -> int:
    return PRED_ANGLE[mode - 2]


def _check_mode(mode: int) -> None:
    if not 0 <= mode < NUM_MODES:
        raise ValueError(f"invalid intra mode {mode}")


def _planar(top: np.ndarray, left: np.ndarray, n: int) -> np.ndarray:
    shift = n.bit_length()  # log2(n) + 1
    x = np.arange(n)[None, :]
    y = np.arange(n)[:, None]
    above = top[1 : n + 1][None, :]
    side = left[:n][:, None]
    top_right = top[n + 1]
    bottom_left = left[n]
    h = (n - 1 - x) * side + (x + 1) * top_right
    v = (n - 1 - y) * above + (y + 1) * bottom_left
    return (h + v + n) >> shift


def _dc(top: np.ndarray, left: np.ndarray, n: int) -> np.ndarray:
    dc = (int(top[1 : n + 1].sum()) + int(left[:n].sum()) + n) >> n.bit_length()
    return np.full((n, n), dc, dtype=np.int32)


def _angular_vertical(main: np.ndarray, side: np.ndarray, n: int, angle: int) -> np.ndarray:
    """Vertical-class angular prediction; ``main``/``side`` start at the corner sample."""
    ref = np.zeros(3 * n + 1, dtype=np.int32)  # ref[k] stored at ref[k + n]
    ref[n : 3 * n + 1] = main[: 2 * n + 1]
    if angle < 0:
        last = (n * angle) >> 5
        if last < -1:
            inv = INV_ANGLE[angle]
            for k in range(last, 0):
                ref[n + k] = side[(k * inv + 128) >> 8]
    pred = np.empty((n, n), dtype=np.int32)
    xs = np.arange(n)
    for y in range(n):
        idx = ((y + 1) * angle) >> 5
        frac = ((y + 1) * angle) & 31
        a = ref[n + xs + idx + 1]
        if frac:
            b = ref[n + xs + idx + 2]
            pred[y] = ((32 - frac) * a + frac * b + 16) >> 5
        else:
            pred[y] = a
    return pred


def predict_tm(mode: int, refs: TmReferenceLine, n: int) -> np.ndarray:
    """Predict an n x n block with traditional mode ``mode``."""
    _check_mode(mode)
    top = np.asarray(refs.top, dtype=np.int32)
    left = np.asarray(refs.left, dtype=np.int32)
    if len(top) != 2 * n + 1 or len(left) != 2 * n:
        raise ValueError("reference line length does not match block size")
    if mode == PLANAR:
        pred = _planar(top, left, n)
    elif mode == DC:
        pred = _dc(top, left, n)
    else:
        side = np.concatenate([top[:1], left])
        angle = pred_angle(mode)
        if mode >= DIAGONAL:
            pred = _angular_vertical(top, side, n, angle)
        else:
            pred = _angular_vertical(side, top, n, angle).T
    return np.clip(pred, 0, 255).astype(np.int32)


@lru_cache(maxsize=None)
def _angular_tables(n: int):
    """Gather indices into ``u = top ++ left`` plus 1/32 weights for modes 2..34."""
    main_idx = np.arange(2 * n + 1)
    side_idx = np.concatenate([[0], 2 * n + 1 + np.arange(2 * n)])
    i0 = np.zeros((33, n, n), dtype=np.intp)
    i1 = np.zeros((33, n, n), dtype=np.intp)
    frac = np.zeros((33, n, n), dtype=np.int32)
    xs = np.arange(n)
    for mode in range(2, NUM_MODES):
        angle = pred_angle(mode)
        m_idx, s_idx = (main_idx, side_idx) if mode >= DIAGONAL else (side_idx, main_idx)
        ref = np.zeros(3 * n + 1, dtype=np.intp)
        ref[n:] = m_idx
        if angle < 0 and (n * angle) >> 5 < -1:
            inv = INV_ANGLE[angle]
            for k in range((n * angle) >> 5, 0):
                ref[n + k] = s_idx[(k * inv + 128) >> 8]
        a = np.zeros((n, n), dtype=np.intp)
        b = np.zeros((n, n), dtype=np.intp)
        f = np.zeros((n, n), dtype=np.int32)
        for y in range(n):
            idx = ((y + 1) * angle) >> 5
            fr = ((y + 1) * angle) & 31
            a[y] = ref[n + xs + idx + 1]
            b[y] = ref[n + xs + idx + 2] if fr else a[y]
            f[y] = fr
        if mode < DIAGONAL:
            a, b, f = a.T, b.T, f.T
        i0[mode - 2], i1[mode - 2], frac[mode - 2] = a, b, f
    return i0, i1, frac


def predict_all_tm(refs: TmReferenceLine, n: int) -> np.ndarray:
    """All 35 predictions, shape (35, n, n)."""
    top = np.asarray(refs.top, dtype=np.int32)
    left = np.asarray(refs.left, dtype=np.int32)
    u = np.concatenate([top, left])
    i0, i1, frac = _angular_tables(n)
    out = np.empty((NUM_MODES, n, n), dtype=np.int32)
    out[PLANAR] = _planar(top, left, n)
    out[DC] = _dc(top, left, n)
    out[2:] = ((32 - frac) * u[i0] + frac * u[i1] + 16) >> 5
    return out


def tm_best_mode(orig, refs: TmReferenceLine, qp: int, mpms=None) -> int:
    """Cheapest mode by SATD + sqrt(lambda) * mode bins; ties go to the lower index.

    Without neighbour information the MPM set defaults to the one derived
    from two unavailable (DC) neighbours.
    """
    from .coder import derive_mpms, mode_bins, rd_lambda, satd

    orig = np.asarray(orig, dtype=np.int32)
    n = orig.shape[0]
    if mpms is None:
        mpms = derive_mpms(DC, DC)
    lam = np.sqrt(rd_lambda(qp))
    preds = predict_all_tm(refs, n)
    costs = [satd(orig - preds[m]) + lam * mode_bins(m, mpms) for m in range(NUM_MODES)]
    return int(np.argmin(costs))
