"""Pixel planes, block geometry, bit-level I/O and image loading."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

BIT_DEPTH = 8
MAX_SAMPLE = (1 << BIT_DEPTH) - 1
UNAVAILABLE_FILL = 1 << (BIT_DEPTH - 1)
BLOCK_SIZES = (4, 8, 16, 32)
CTU_SIZE = 32


@dataclass(frozen=True, eq=False)
class Plane:
    """A single 8-bit luma plane; ``samples`` has shape (height, width)."""

    samples: np.ndarray
    bit_depth: int = BIT_DEPTH

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise ValueError(f"plane samples must be 2-D, got shape {s.shape}")
        if self.bit_depth != BIT_DEPTH:
            raise FormatError(f"bit depth {self.bit_depth} != 8")
        if s.size and (s.min() < 0 or s.max() > MAX_SAMPLE):
            raise ValueError("sample out of [0, 255]")
        s = s.astype(np.uint8)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Plane):
            return NotImplemented
        return self.samples.shape == other.samples.shape and bool(
            np.array_equal(self.samples, other.samples)
        )

    def __hash__(self):
        return hash((self.samples.shape, self.samples.tobytes()))


@dataclass(frozen=True)
class BlockRect:
    x: int
    y: int
    n: int

    def __post_init__(self):
        if self.n not in BLOCK_SIZES:
            raise ValueError(f"unsupported block size {self.n}")
        if self.x % self.n or self.y % self.n or self.x < 0 or self.y < 0:
            raise ValueError(f"block ({self.x}, {self.y}) not aligned to {self.n}")

    def children(self) -> list[BlockRect]:
        """Quadtree children in Z order."""
        h = self.n // 2
        return [
            BlockRect(self.x, self.y, h),
            BlockRect(self.x + h, self.y, h),
            BlockRect(self.x, self.y + h, h),
            BlockRect(self.x + h, self.y + h, h),
        ]

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.n), slice(self.x, self.x + self.n)


@dataclass
class ReconBuffer:
    """Reconstruction in progress: samples plus a per-pixel "already decoded" mask.

    Encoder and decoder both drive one of these in coding order, so context
    extraction sees identical availability on both sides.
    """

    samples: np.ndarray
    decoded: np.ndarray = field(default=None)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.int32)
        if self.decoded is None:
            self.decoded = np.zeros(self.samples.shape, dtype=bool)

    @classmethod
    def empty(cls, height: int, width: int) -> ReconBuffer:
        return cls(np.full((height, width), UNAVAILABLE_FILL, dtype=np.int32))

    @classmethod
    def from_plane(cls, plane: Plane, decoded: np.ndarray | None = None) -> ReconBuffer:
        """Wrap a plane; by default every sample counts as decoded."""
        if decoded is None:
            decoded = np.ones(plane.samples.shape, dtype=bool)
        return cls(plane.samples.astype(np.int32), np.asarray(decoded, dtype=bool).copy())

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    def commit(self, rect: BlockRect, block: np.ndarray) -> None:
        ys, xs = rect.slices
        self.samples[ys, xs] = block
        self.decoded[ys, xs] = True

    def snapshot(self, rect: BlockRect) -> tuple[np.ndarray, np.ndarray]:
        ys, xs = rect.slices
        return self.samples[ys, xs].copy(), self.decoded[ys, xs].copy()

    def restore(self, rect: BlockRect, snap: tuple[np.ndarray, np.ndarray]) -> None:
        ys, xs = rect.slices
        self.samples[ys, xs] = snap[0]
        self.decoded[ys, xs] = snap[1]

    def to_plane(self) -> Plane:
        return Plane(self.samples.astype(np.uint8))


class BitWriter:
    """MSB-first bit packer; the final byte is zero-padded."""

    def __init__(self):
        self._bits: list[int] = []

    def __len__(self) -> int:
        return len(self._bits)

    def write(self, value: int, nbits: int) -> None:
        if nbits < 0 or value < 0 or value >> nbits:
            raise ValueError(f"value {value} does not fit in {nbits} bits")
        self._bits.extend((value >> (nbits - 1 - i)) & 1 for i in range(nbits))

    def write_bit(self, bit: int) -> None:
        self._bits.append(1 if bit else 0)

    def write_bins(self, bins: str) -> None:
        """Append a bin string such as ``"110"``."""
        self._bits.extend(1 if c == "1" else 0 for c in bins)

    def write_bytes(self, data: bytes) -> None:
        for b in data:
            self.write(b, 8)

    def getvalue(self) -> bytes:
        if not self._bits:
            return b""
        return np.packbits(np.array(self._bits, dtype=np.uint8)).tobytes()


class BitReader:
    def __init__(self, data: bytes):
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        self.pos = 0

    @property
    def remaining(self) -> int:
        return len(self._bits) - self.pos

    def read_bit(self) -> int:
        if self.pos >= len(self._bits):
            raise FormatError("truncated bitstream")
        b = int(self._bits[self.pos])
        self.pos += 1
        return b

    def read(self, nbits: int) -> int:
        if self.pos + nbits > len(self._bits):
            raise FormatError("truncated bitstream")
        v = 0
        for b in self._bits[self.pos : self.pos + nbits]:
            v = (v << 1) | int(b)
        self.pos += nbits
        return v

    def read_bytes(self, count: int) -> bytes:
        return bytes(self.read(8) for _ in range(count))


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    """Integer BT.601 luma: ((66R + 129G + 25B + 128) >> 8) + 16."""
    rgb = np.asarray(rgb, dtype=np.int32)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = ((66 * r + 129 * g + 25 * b + 128) >> 8) + 16
    return np.clip(y, 0, MAX_SAMPLE).astype(np.uint8)


def _read_pgm(data: bytes) -> Plane:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise FormatError("truncated PGM header")
        c = data[pos : pos + 1]
        if c == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
                pos += 1
            tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"unsupported PGM magic {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError("bad PGM header") from exc
    if maxval > MAX_SAMPLE or maxval < 1:
        raise FormatError(f"bit depth != 8 (maxval {maxval})")
    pos += 1  # single whitespace after maxval
    payload = data[pos : pos + width * height]
    if len(payload) < width * height:
        raise FormatError("truncated PGM payload")
    return Plane(np.frombuffer(payload, dtype=np.uint8).reshape(height, width))


def load_plane(path: str | Path) -> Plane:
    """Load an 8-bit binary PGM, or a PNG converted to luma."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P5":
        return _read_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        try:
            img = Image.open(path)
            img.load()
        except Exception as exc:  # PIL raises a zoo of types for bad files
            raise FormatError(f"unreadable PNG: {exc}") from exc
        if img.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
            raise FormatError(f"bit depth != 8 (PNG mode {img.mode})")
        if img.mode in ("L", "1"):
            return Plane(np.asarray(img.convert("L")))
        return Plane(rgb_to_luma(np.asarray(img.convert("RGB"))))
    raise FormatError(f"unsupported image format: {path}")


def save_plane(plane: Plane, path: str | Path) -> None:
    header = f"P5\n{plane.width} {plane.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + plane.samples.tobytes())


def pad_to_grid(p: Plane, ctu: int = CTU_SIZE) -> Plane:
    """Round width/height up to multiples of ``ctu`` by edge replication."""
    h = -(-p.height // ctu) * ctu
    w = -(-p.width // ctu) * ctu
    if (h, w) == (p.height, p.width):
        return p
    return Plane(np.pad(p.samples, ((0, h - p.height), (0, w - p.width)), mode="edge"))
