"""Residual coefficient coding with raw bins.

Layout per block: coded-block flag; if set, EG0(last scan position), one
significance flag for every scan position before the last, then for each
nonzero coefficient in scan order EG0(|q| - 1) and a sign bit.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..core import BitReader, BitWriter
from ..errors import FormatError


@lru_cache(maxsize=None)
def diagonal_scan(n: int) -> np.ndarray:
    """Up-right diagonal scan as flat indices into an n x n block."""
    order = [(y, d - y) for d in range(2 * n - 1) for y in range(min(d, n - 1), max(0, d - n + 1) - 1, -1)]
    scan = np.array([y * n + x for y, x in order], dtype=np.intp)
    scan.setflags(write=False)
    return scan


def eg0_len(v):
    """Length of the order-0 Exp-Golomb code for non-negative ``v``."""
    v = np.asarray(v, dtype=np.int64)
    return 2 * np.floor(np.log2(v + 1)).astype(np.int64) + 1


def write_eg0(w: BitWriter, v: int) -> None:
    v1 = v + 1
    nb = v1.bit_length()
    w.write(0, nb - 1)
    w.write(v1, nb)


def read_eg0(r: BitReader) -> int:
    zeros = 0
    while not r.read_bit():
        zeros += 1
        if zeros > 32:
            raise FormatError("Exp-Golomb prefix too long")
    return ((1 << zeros) | r.read(zeros)) - 1


def residual_bits(coeffs) -> int:
    flat = np.asarray(coeffs).ravel()[diagonal_scan(np.asarray(coeffs).shape[0])]
    nz = np.flatnonzero(flat)
    if nz.size == 0:
        return 1
    last = int(nz[-1])
    levels = np.abs(flat[nz]) - 1
    return int(1 + eg0_len(last) + last + eg0_len(levels).sum() + nz.size)


def write_residual(w: BitWriter, coeffs) -> None:
    coeffs = np.asarray(coeffs)
    flat = coeffs.ravel()[diagonal_scan(coeffs.shape[0])]
    nz = np.flatnonzero(flat)
    if nz.size == 0:
        w.write_bit(0)
        return
    w.write_bit(1)
    last = int(nz[-1])
    write_eg0(w, last)
    for i in range(last):
        w.write_bit(flat[i] != 0)
    for i in nz:
        v = int(flat[i])
        write_eg0(w, abs(v) - 1)
        w.write_bit(v < 0)


def read_residual(r: BitReader, n: int) -> np.ndarray:
    flat = np.zeros(n * n, dtype=np.int32)
    if r.read_bit():
        last = read_eg0(r)
        if last >= n * n:
            raise FormatError(f"last position {last} outside {n}x{n} block")
        sig = [i for i in range(last) if r.read_bit()] + [last]
        for i in sig:
            mag = read_eg0(r) + 1
            flat[i] = -mag if r.read_bit() else mag
    out = np.zeros(n * n, dtype=np.int32)
    out[diagonal_scan(n)] = flat
    return out.reshape(n, n)
