"""Encoder/decoder: SATD search, MPM signaling, residual coding, quadtree RDO."""

from .codec import (
    HEADER_BITS,
    NM_TAG,
    TM_TAG,
    BlockStat,
    EncodeResult,
    ModeDecision,
    NmPredictor,
    SplitDecision,
    TmPredictor,
    candidate_count,
    choose_mode,
    decode_frame,
    encode_frame,
    read_header,
)
from .entropy import diagonal_scan, eg0_len, read_eg0, read_residual, residual_bits, write_eg0, write_residual
from .signaling import CODEWORD_BINS, MpmSet, derive_mpms, mode_bins, mode_codeword, read_mode
from .transform import (
    dct_matrix,
    dequant_itransform,
    hadamard_matrix,
    qstep,
    rd_lambda,
    reconstruct,
    satd,
    satd_batch,
    transform_quant,
)

__all__ = [
    "CODEWORD_BINS",
    "HEADER_BITS",
    "NM_TAG",
    "TM_TAG",
    "BlockStat",
    "EncodeResult",
    "ModeDecision",
    "MpmSet",
    "NmPredictor",
    "SplitDecision",
    "TmPredictor",
    "candidate_count",
    "choose_mode",
    "dct_matrix",
    "decode_frame",
    "dequant_itransform",
    "derive_mpms",
    "diagonal_scan",
    "eg0_len",
    "encode_frame",
    "hadamard_matrix",
    "mode_bins",
    "mode_codeword",
    "qstep",
    "rd_lambda",
    "read_eg0",
    "read_header",
    "read_mode",
    "read_residual",
    "reconstruct",
    "residual_bits",
    "satd",
    "satd_batch",
    "transform_quant",
    "write_eg0",
    "write_residual",
]
