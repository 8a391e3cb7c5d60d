"""Hadamard SATD, orthonormal DCT-II residual path, quantizer and Lagrangian."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

SATD_TILE = 8


def rd_lambda(qp: float) -> float:
    """HM-style Lagrangian, 0.57 * 2^((qp - 12) / 3)."""
    if not 0 <= qp <= 51:
        raise ValueError(f"qp {qp} outside [0, 51]")
    return 0.57 * 2.0 ** ((qp - 12) / 3.0)


def hadamard_matrix(n: int) -> np.ndarray:
    """Sylvester-ordered +/-1 Hadamard matrix, built recursively."""
    if n == 1:
        return np.ones((1, 1), dtype=np.int64)
    h = hadamard_matrix(n // 2)
    return np.block([[h, h], [h, -h]])


def _fwht(x: np.ndarray, axis: int) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along one axis (Sylvester order)."""
    x = np.moveaxis(np.array(x, dtype=np.int64), axis, -1)
    n = x.shape[-1]
    h = 1
    while h < n:
        y = x.reshape(*x.shape[:-1], n // (2 * h), 2, h)
        a, b = y[..., 0, :], y[..., 1, :]
        x = np.stack([a + b, a - b], axis=-2).reshape(x.shape)
        h *= 2
    return np.moveaxis(x, -1, axis)


def _satd_tiles(tiles: np.ndarray) -> np.ndarray:
    """Per-tile SATD for tiles of shape (..., t, t) with t in {4, 8}."""
    t = tiles.shape[-1]
    coef = _fwht(_fwht(tiles, -1), -2)
    total = np.abs(coef).sum(axis=(-1, -2))
    return total >> (1 if t == 4 else 2)


def satd_batch(residuals: np.ndarray) -> np.ndarray:
    """SATD for a stack of residual blocks, shape (..., n, n) -> (...)."""
    r = np.asarray(residuals, dtype=np.int64)
    n = r.shape[-1]
    if n not in (4, 8, 16, 32) or r.shape[-2] != n:
        raise ValueError(f"unsupported SATD block shape {r.shape[-2:]}")
    if n <= SATD_TILE:
        return _satd_tiles(r)
    k = n // SATD_TILE
    tiles = r.reshape(*r.shape[:-2], k, SATD_TILE, k, SATD_TILE).swapaxes(-3, -2)
    return _satd_tiles(tiles).sum(axis=(-1, -2))


def satd(residual) -> int:
    return int(satd_batch(np.asarray(residual)))


@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    c[0] /= np.sqrt(2.0)
    c.setflags(write=False)
    return c


def qstep(qp: int) -> float:
    return 2.0 ** ((qp - 4) / 6.0)


def transform_quant(residual, qp: int) -> np.ndarray:
    """Forward orthonormal 2-D DCT-II, then dead-zone quantization with offset 1/3."""
    r = np.asarray(residual, dtype=np.float64)
    n = r.shape[0]
    if n not in (4, 8, 16, 32):
        raise ValueError(f"unsupported transform size {n}")
    c = dct_matrix(n)
    coef = c @ r @ c.T
    q = np.floor(np.abs(coef) / qstep(qp) + 1.0 / 3.0)
    return (np.sign(coef) * q).astype(np.int32)


def dequant_itransform(coeffs, qp: int) -> np.ndarray:
    """Shared encoder/decoder inverse path; returns an integer residual."""
    q = np.asarray(coeffs, dtype=np.float64)
    n = q.shape[0]
    if n not in (4, 8, 16, 32):
        raise ValueError(f"unsupported transform size {n}")
    if not q.any():
        return np.zeros((n, n), dtype=np.int32)
    c = dct_matrix(n)
    r = c.T @ (q * qstep(qp)) @ c
    return np.floor(r + 0.5).astype(np.int32)


def reconstruct(pred, coeffs, qp: int) -> np.ndarray:
    return np.clip(np.asarray(pred, dtype=np.int32) + dequant_itransform(coeffs, qp), 0, 255)
