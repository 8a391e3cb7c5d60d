import math

import numpy as np

from nnintra.experiment import (
    DeskConfig,
    build_registry,
    default_predictors,
    encode_sweep,
    heldout_corpus,
    mode_stats,
    per_image_bd_rates,
    rd_curve,
    summarize_bd,
    train_corpus,
)
from nnintra.intra_nm import NUM_MODES
from nnintra.train import TrainConfig

TINY = DeskConfig(train_images=2, heldout_images=2, crop=(32, 32), train=TrainConfig(fc_width=8, cnn_filters=2))


def test_corpora_are_disjoint_and_seeded():
    assert [p.samples.tobytes() for p in train_corpus(TINY)] == [p.samples.tobytes() for p in train_corpus(TINY)]
    train = {p.samples.tobytes() for p in train_corpus(TINY)}
    assert not train & {p.samples.tobytes() for p in heldout_corpus(TINY)}


def test_tiny_pipeline():
    registry, reports, data = build_registry(TINY)
    assert sorted(reports) == [4, 8, 16, 32]
    assert not registry.missing()
    assert len(data[32]) == TINY.train_images * len(TINY.qps)
    held = heldout_corpus(TINY)
    coded = encode_sweep(held, TINY.qps, default_predictors(registry))
    assert len(coded) == 2 * len(TINY.qps) * 2
    assert all(c.decoded_equal for c in coded)
    curve = rd_curve(coded, held, 0, "nm")
    assert len(curve) == 4 and all(p.bitrate > 0 for p in curve)
    st = mode_stats(coded, "tm")
    assert sum(st.mode_counts()) == sum(len(c.result.stats) for c in coded if c.predictor == "tm")
    assert len(st.mode_counts()) == NUM_MODES
    rates = per_image_bd_rates(coded, held)
    assert len(rates) == 2


def test_summarize_bd():
    s = summarize_bd([-2.0, 4.0, float("nan")])
    assert s["mean"] == 1.0 and s["negative"] == 1 and s["images"] == 3
    assert math.isnan(summarize_bd([float("nan")])["mean"])
    assert np.isfinite(summarize_bd([0.0])["mean"])
