"""Desk-scale experiment: corpus -> dataset -> trained registry -> NM/TM encode sweep."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .coder import NmPredictor, TmPredictor, decode_frame, encode_frame
from .core import Plane
from .corpus import HELDOUT_SOURCES, TRAIN_SOURCES, natural_crops
from .metrics import ModeStats, RdPoint, bd_rate, psnr
from .train import DEFAULT_QPS, TrainConfig, extract_dataset, train_all

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeskConfig:
    train_images: int = 50
    heldout_images: int = 20
    crop: tuple = (64, 64)
    qps: tuple = DEFAULT_QPS
    blocks: str = "searched"
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs_baseline=2, epochs_finetune=2))
    corpus_seed: int = 0


def train_corpus(cfg: DeskConfig) -> list[Plane]:
    return natural_crops(cfg.train_images, cfg.crop, TRAIN_SOURCES, seed=cfg.corpus_seed)


def heldout_corpus(cfg: DeskConfig) -> list[Plane]:
    """Crops of photographs never seen in training."""
    return natural_crops(cfg.heldout_images, cfg.crop, HELDOUT_SOURCES, seed=cfg.corpus_seed + 1)


def build_registry(cfg: DeskConfig):
    """Extract the training set and train all sizes; returns ``(registry, reports, dataset)``."""
    data = extract_dataset(train_corpus(cfg), cfg.qps, blocks=cfg.blocks)
    log.info("training set: %s", {n: len(v) for n, v in data.items()})
    registry, reports = train_all(data, cfg.train)
    return registry, reports, data


@dataclass
class CodedImage:
    image: int
    qp: int
    predictor: str
    result: object
    decoded_equal: bool

    @property
    def bpp(self) -> float:
        return self.result.total_bits / (self.result.recon.height * self.result.recon.width)


def encode_sweep(planes, qps, predictors: dict) -> list[CodedImage]:
    """Encode and decode every plane at every QP with every predictor."""
    out = []
    for i, plane in enumerate(planes):
        for qp in qps:
            for name, pred in predictors.items():
                res = encode_frame(plane, qp, pred)
                out.append(CodedImage(i, qp, name, res, decode_frame(res.bitstream, pred) == res.recon))
        log.info("coded image %d/%d", i + 1, len(planes))
    return out


def rd_curve(coded: list[CodedImage], planes, image: int, predictor: str) -> list[RdPoint]:
    rows = sorted((c for c in coded if c.image == image and c.predictor == predictor), key=lambda c: c.qp)
    return [RdPoint(c.bpp, psnr(planes[image], c.result.recon)) for c in rows]


def per_image_bd_rates(coded: list[CodedImage], planes) -> list[float]:
    """NM-vs-TM BD-rate (percent) per image; NaN when the curves do not overlap."""
    rates = []
    for i in range(len(planes)):
        try:
            rates.append(bd_rate(rd_curve(coded, planes, i, "tm"), rd_curve(coded, planes, i, "nm")))
        except ValueError:
            rates.append(float("nan"))
    return rates


def mode_stats(coded: list[CodedImage], predictor: str) -> ModeStats:
    st = ModeStats()
    for c in coded:
        if c.predictor == predictor:
            st = st.merge(ModeStats.from_blocks(c.result.stats))
    return st


def default_predictors(registry) -> dict:
    return {"tm": TmPredictor(), "nm": NmPredictor(registry)}


def summarize_bd(rates: list[float]) -> dict:
    finite = [r for r in rates if np.isfinite(r)]
    return {
        "per_image": rates,
        "mean": float(np.mean(finite)) if finite else float("nan"),
        "negative": sum(r < 0 for r in finite),
        "images": len(rates),
    }
