"""Quadtree intra encoder/decoder over 32x32 CTUs with TM or NM predictors."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..context import extract_context, extract_tm_refline
from ..core import CTU_SIZE, BitReader, BitWriter, BlockRect, Plane, ReconBuffer, pad_to_grid
from ..errors import FormatError, InvariantError, ModelError
from ..intra_nm import NUM_MODES, ModelBank
from ..intra_tm import DC, predict_all_tm, predict_tm
from .entropy import read_residual, residual_bits, write_residual
from .signaling import MpmSet, derive_mpms, mode_bins, mode_codeword, read_mode
from .transform import rd_lambda, reconstruct, satd_batch, transform_quant

MAGIC = b"NNIC"
VERSION = 1
HEADER_FMT = ">4sBHHBBQ"
HEADER_BITS = struct.calcsize(HEADER_FMT) * 8
TM_TAG, NM_TAG = 0, 1
MIN_BLOCK = 4


class TmPredictor:
    """The 35 traditional modes."""

    tag = TM_TAG
    name = "tm"

    def digest(self) -> int:
        return 0

    def predict_all(self, recon: ReconBuffer, rect: BlockRect) -> np.ndarray:
        return predict_all_tm(extract_tm_refline(recon, rect), rect.n)

    def predict(self, recon: ReconBuffer, rect: BlockRect, mode: int) -> np.ndarray:
        return predict_tm(mode, extract_tm_refline(recon, rect), rect.n)


class NmPredictor:
    """One neural model per (size, mode), evaluated through stacked model banks."""

    tag = NM_TAG
    name = "nm"

    def __init__(self, registry, sizes=(4, 8, 16, 32)):
        registry.check_complete(sizes)
        self.registry = registry
        self.banks = {n: ModelBank(registry.get(n, m) for m in range(NUM_MODES)) for n in sizes}

    def digest(self) -> int:
        return self.registry.digest()

    def predict_all(self, recon: ReconBuffer, rect: BlockRect) -> np.ndarray:
        return self.banks[rect.n].predict(extract_context(recon, rect))

    def predict(self, recon: ReconBuffer, rect: BlockRect, mode: int) -> np.ndarray:
        return self.banks[rect.n].predict(extract_context(recon, rect), slice(mode, mode + 1))[0]


@dataclass
class ModeDecision:
    candidates: list[int]
    satd_costs: np.ndarray
    mpms: MpmSet
    mode: int
    codeword: str
    coeffs: np.ndarray
    recon: np.ndarray
    res_bits: int
    sse: int
    rd_cost: float

    @property
    def mode_bins(self) -> int:
        return len(self.codeword)

    @property
    def mpm_slot(self) -> int:
        return self.mpms.slot(self.mode)


def candidate_count(n: int) -> int:
    return 8 if n <= 8 else 3


def choose_mode(orig, recon: ReconBuffer, rect: BlockRect, qp: int, predictor, mpms: MpmSet | None = None) -> ModeDecision:
    """SATD pre-selection (top 8 / top 3, plus MPMs), then full R-D choice."""
    if mpms is None:
        mpms = derive_mpms(DC, DC)
    orig = np.asarray(orig, dtype=np.int32)
    lam = rd_lambda(qp)
    preds = predictor.predict_all(recon, rect)
    bins = np.array([mode_bins(m, mpms) for m in range(NUM_MODES)])
    costs = satd_batch(orig[None] - preds) + np.sqrt(lam) * bins
    order = sorted(range(NUM_MODES), key=lambda m: (costs[m], m))
    candidates = order[: candidate_count(rect.n)]
    candidates += [m for m in mpms if m not in candidates]
    best = None
    for m in candidates:
        coeffs = transform_quant(orig - preds[m], qp)
        rec = reconstruct(preds[m], coeffs, qp)
        rbits = residual_bits(coeffs)
        sse = int(((orig - rec) ** 2).sum())
        j = sse + lam * (bins[m] + rbits)
        if best is None or j < best[0] or (j == best[0] and m < best[1]):
            best = (j, m, coeffs, rec, rbits, sse)
    j, m, coeffs, rec, rbits, sse = best
    return ModeDecision(candidates, costs, mpms, m, mode_codeword(m, mpms), coeffs, rec, rbits, sse, float(j))


@dataclass
class BlockStat:
    x: int
    y: int
    n: int
    mode: int
    mpm_slot: int
    mode_bins: int
    res_bits: int
    sse: int

    CSV_HEADER = "x,y,n,mode,mpm_slot,mode_bins,res_bits,sse"

    def csv_row(self) -> str:
        return f"{self.x},{self.y},{self.n},{self.mode},{self.mpm_slot},{self.mode_bins},{self.res_bits},{self.sse}"


@dataclass
class SplitDecision:
    rect: BlockRect
    j_leaf: float
    j_split: float
    split: bool


@dataclass
class _Leaf:
    rect: BlockRect
    decision: ModeDecision


@dataclass
class _Split:
    rect: BlockRect
    children: list


@dataclass
class EncodeResult:
    bitstream: bytes
    recon: Plane
    stats: list[BlockStat]
    qp: int
    payload_bits: int
    split_bits: int
    decisions: list[SplitDecision] = field(default_factory=list)
    padded_recon: Plane | None = None

    @property
    def header_bits(self) -> int:
        return HEADER_BITS

    @property
    def total_bits(self) -> int:
        """Bits actually carrying information, excluding final byte padding."""
        return HEADER_BITS + self.payload_bits

    def stats_csv(self) -> str:
        return BlockStat.CSV_HEADER + "\n" + "".join(s.csv_row() + "\n" for s in self.stats)


class _ModeMap:
    """Best mode per 4x4 unit, used for MPM derivation."""

    def __init__(self, height: int, width: int):
        self.units = np.full((height // MIN_BLOCK, width // MIN_BLOCK), -1, dtype=np.int16)

    def _sl(self, rect):
        u = MIN_BLOCK
        return slice(rect.y // u, (rect.y + rect.n) // u), slice(rect.x // u, (rect.x + rect.n) // u)

    def set(self, rect, mode):
        self.units[self._sl(rect)] = mode

    def snapshot(self, rect):
        return self.units[self._sl(rect)].copy()

    def restore(self, rect, snap):
        self.units[self._sl(rect)] = snap

    def mpms(self, rect) -> MpmSet:
        u = MIN_BLOCK
        left = int(self.units[rect.y // u, rect.x // u - 1]) if rect.x > 0 else DC
        above = int(self.units[rect.y // u - 1, rect.x // u]) if rect.y > 0 else DC
        if left < 0 or above < 0:
            raise InvariantError(f"neighbour of {rect} not coded yet")
        return derive_mpms(left, above)


class _Encoder:
    def __init__(self, orig: np.ndarray, qp: int, predictor, observer=None):
        self.orig = orig
        self.observer = observer
        self.qp = qp
        self.lam = rd_lambda(qp)
        self.predictor = predictor
        h, w = orig.shape
        self.recon = ReconBuffer.empty(h, w)
        self.modes = _ModeMap(h, w)
        self.decisions: list[SplitDecision] = []

    def node(self, rect: BlockRect):
        """Code ``rect`` (leaf or split), leaving the winning state applied; returns (J, tree)."""
        flag_cost = self.lam if rect.n > MIN_BLOCK else 0.0
        before = self.recon.snapshot(rect), self.modes.snapshot(rect)
        ys, xs = rect.slices
        dec = choose_mode(self.orig[ys, xs], self.recon, rect, self.qp, self.predictor, self.modes.mpms(rect))
        j_leaf = dec.rd_cost + flag_cost
        if self.observer is not None:
            self.observer(rect, self.recon, dec)
        self.recon.commit(rect, dec.recon)
        self.modes.set(rect, dec.mode)
        leaf = _Leaf(rect, dec)
        if rect.n == MIN_BLOCK:
            return j_leaf, leaf
        leaf_state = self.recon.snapshot(rect), self.modes.snapshot(rect)
        self.recon.restore(rect, before[0])
        self.modes.restore(rect, before[1])
        j_split = flag_cost
        children = []
        for child in rect.children():
            j, tree = self.node(child)
            j_split += j
            children.append(tree)
        split = j_split < j_leaf
        self.decisions.append(SplitDecision(rect, j_leaf, j_split, split))
        if split:
            return j_split, _Split(rect, children)
        self.recon.restore(rect, leaf_state[0])
        self.modes.restore(rect, leaf_state[1])
        return j_leaf, leaf


def _write_tree(w: BitWriter, tree, stats: list[BlockStat]) -> int:
    """Serialize one CTU tree; returns the number of split-flag bits."""
    flags = 0
    if tree.rect.n > MIN_BLOCK:
        w.write_bit(isinstance(tree, _Split))
        flags += 1
    if isinstance(tree, _Split):
        for child in tree.children:
            flags += _write_tree(w, child, stats)
        return flags
    d = tree.decision
    start = len(w)
    w.write_bins(d.codeword)
    write_residual(w, d.coeffs)
    if len(w) - start != d.mode_bins + d.res_bits:
        raise InvariantError(f"rate accounting mismatch at {tree.rect}")
    r = tree.rect
    stats.append(BlockStat(r.x, r.y, r.n, d.mode, d.mpm_slot, d.mode_bins, d.res_bits, d.sse))
    return flags


def _ctu_rects(height: int, width: int):
    for y in range(0, height, CTU_SIZE):
        for x in range(0, width, CTU_SIZE):
            yield BlockRect(x, y, CTU_SIZE)


def encode_frame(plane: Plane, qp: int, predictor, observer=None) -> EncodeResult:
    """Code ``plane`` at ``qp``.

    ``observer(rect, recon, decision)``, if given, sees every block the R-D
    search codes (final leaves and discarded alternatives) with the
    reconstruction as it stood when that block was coded.
    """
    if not 0 <= qp <= 51:
        raise ValueError(f"qp {qp} outside [0, 51]")
    if plane.width > 0xFFFF or plane.height > 0xFFFF:
        raise ValueError("frame too large for 16-bit header fields")
    padded = pad_to_grid(plane, CTU_SIZE)
    enc = _Encoder(padded.samples.astype(np.int32), qp, predictor, observer)
    w = BitWriter()
    w.write_bytes(struct.pack(HEADER_FMT, MAGIC, VERSION, plane.width, plane.height, qp, predictor.tag, predictor.digest()))
    stats: list[BlockStat] = []
    split_bits = 0
    for rect in _ctu_rects(padded.height, padded.width):
        _, tree = enc.node(rect)
        split_bits += _write_tree(w, tree, stats)
    full = enc.recon.to_plane()
    return EncodeResult(
        bitstream=w.getvalue(),
        recon=Plane(full.samples[: plane.height, : plane.width]),
        stats=stats,
        qp=qp,
        payload_bits=len(w) - HEADER_BITS,
        split_bits=split_bits,
        decisions=enc.decisions,
        padded_recon=full,
    )


def read_header(data: bytes) -> dict:
    size = struct.calcsize(HEADER_FMT)
    if len(data) < size:
        raise FormatError("truncated bitstream header")
    magic, version, width, height, qp, tag, digest = struct.unpack(HEADER_FMT, data[:size])
    if magic != MAGIC:
        raise FormatError("bad magic, not an NNIC bitstream")
    if version != VERSION:
        raise FormatError(f"bitstream version {version} != {VERSION}")
    if tag not in (TM_TAG, NM_TAG) or qp > 51 or width == 0 or height == 0:
        raise FormatError("malformed bitstream header")
    return {"width": width, "height": height, "qp": qp, "tag": tag, "digest": digest}


def decode_frame(data: bytes, predictor) -> Plane:
    hdr = read_header(data)
    if hdr["tag"] != predictor.tag or hdr["digest"] != predictor.digest():
        raise ModelError(
            f"predictor digest mismatch: stream has tag {hdr['tag']} digest {hdr['digest']:016x}, "
            f"decoder has tag {predictor.tag} digest {predictor.digest():016x}"
        )
    qp = hdr["qp"]
    ph = -(-hdr["height"] // CTU_SIZE) * CTU_SIZE
    pw = -(-hdr["width"] // CTU_SIZE) * CTU_SIZE
    r = BitReader(data)
    r.pos = HEADER_BITS
    recon = ReconBuffer.empty(ph, pw)
    modes = _ModeMap(ph, pw)

    def node(rect: BlockRect):
        if rect.n > MIN_BLOCK and r.read_bit():
            for child in rect.children():
                node(child)
            return
        mode = read_mode(r, modes.mpms(rect))
        coeffs = read_residual(r, rect.n)
        pred = predictor.predict(recon, rect, mode)
        recon.commit(rect, reconstruct(pred, coeffs, qp))
        modes.set(rect, mode)

    for rect in _ctu_rects(ph, pw):
        node(rect)
    if r.remaining >= 8 or r.read(r.remaining) != 0:
        raise FormatError("trailing data after last CTU")
    return Plane(recon.samples[: hdr["height"], : hdr["width"]].astype(np.uint8))
