"""MPM derivation and the 35-mode codeword table (10 / 110 / 111 / 0+5 bins)."""

from __future__ import annotations

from typing import NamedTuple

from ..core import BitReader
from ..intra_tm import DC, NUM_MODES, PLANAR, VERTICAL

NON_MPM_SLOT = 3
CODEWORD_BINS = (2, 3, 3, 6)


class MpmSet(NamedTuple):
    mpm0: int
    mpm1: int
    mpm2: int

    def slot(self, mode: int) -> int:
        """0, 1, 2 for an MPM hit, 3 for a non-MPM mode."""
        try:
            return self.index(mode)
        except ValueError:
            return NON_MPM_SLOT

    def non_mpms(self) -> list[int]:
        return [m for m in range(NUM_MODES) if m not in self]


def derive_mpms(left_mode: int, above_mode: int) -> MpmSet:
    """Neighbours outside the frame should be passed as DC."""
    if left_mode != above_mode:
        for third in (PLANAR, DC, VERTICAL):
            if third not in (left_mode, above_mode):
                return MpmSet(left_mode, above_mode, third)
    if left_mode < 2:
        return MpmSet(PLANAR, DC, VERTICAL)
    a = left_mode
    return MpmSet(a, 2 + ((a + 29) % 32), 2 + ((a - 2 + 1) % 32))


def mode_codeword(mode: int, mpms: MpmSet) -> str:
    slot = mpms.slot(mode)
    if slot == 0:
        return "10"
    if slot == 1:
        return "110"
    if slot == 2:
        return "111"
    return "0" + format(mpms.non_mpms().index(mode), "05b")


def mode_bins(mode: int, mpms: MpmSet) -> int:
    return CODEWORD_BINS[mpms.slot(mode)]


def read_mode(reader: BitReader, mpms: MpmSet) -> int:
    if reader.read_bit():
        if not reader.read_bit():
            return mpms.mpm0
        return mpms.mpm2 if reader.read_bit() else mpms.mpm1
    return mpms.non_mpms()[reader.read(5)]
