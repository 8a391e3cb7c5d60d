import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nnintra.coder import BlockStat
from nnintra.context import TmReferenceLine, extract_tm_refline, normalize
from nnintra.core import BlockRect, Plane, ReconBuffer
from nnintra.intra_nm import CnnModel, FcModel, make_model
from nnintra.intra_tm import predict_tm
from nnintra.metrics import (
    REFERENCE_SLOT_PERCENT,
    ModeStats,
    RdPoint,
    bd_rate,
    flops_report,
    mode_probability_report,
    per_mode_psnr,
    psnr,
    read_rd_points,
    write_mode_psnr,
    write_mode_series,
    write_rd_points,
    write_slot_report,
)
from nnintra.train import TrainingSample

ANCHOR = [(100, 30), (200, 33), (400, 36), (800, 39)]


def test_psnr_examples():
    a = np.zeros((4, 4))
    assert psnr(a, a) == math.inf
    assert psnr(a, a + 1) == pytest.approx(48.1308, abs=1e-4)
    assert psnr(np.zeros((2, 2)), np.full((2, 2), 255)) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        psnr(np.zeros((2, 2)), np.zeros((2, 3)))


@given(st.integers(0, 2**32 - 1))
def test_psnr_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = Plane(rng.integers(0, 256, (5, 7))), Plane(rng.integers(0, 256, (5, 7)))
    assert psnr(a, b) == psnr(b, a)


def test_bd_rate_identical_is_zero():
    assert bd_rate(ANCHOR, ANCHOR) == 0.0


def test_bd_rate_constant_offset():
    test = [(r * 0.9, q) for r, q in ANCHOR]
    assert bd_rate(ANCHOR, test) == pytest.approx(-10.0, abs=1e-6)
    assert bd_rate(ANCHOR, [(90, 30), (180, 33), (360, 36), (720, 39)]) == pytest.approx(-10.0, abs=1e-6)


@given(st.floats(0.3, 3.0), st.lists(st.floats(20, 50), min_size=4, max_size=4, unique=True))
def test_bd_rate_offset_property(ratio, qs):
    qs = sorted(qs)
    if min(np.diff(qs)) < 0.1:
        return
    anchor = [(100 * 2 ** (i + 0.3 * i * i), q) for i, q in enumerate(qs)]
    test = [(r * ratio, q) for r, q in anchor]
    assert bd_rate(anchor, test) == pytest.approx(100 * (ratio - 1), abs=1e-6)
    # sign flips when the arguments swap
    assert bd_rate(test, anchor) == pytest.approx(100 * (1 / ratio - 1), abs=1e-6)


def test_bd_rate_errors():
    with pytest.raises(ValueError):
        bd_rate(ANCHOR, [(r, q + 20) for r, q in ANCHOR])
    with pytest.raises(ValueError):
        bd_rate(ANCHOR[:3], ANCHOR[:3])
    with pytest.raises(ValueError):
        bd_rate(ANCHOR, [(100, 30), (200, 30), (300, 33), (400, 36)])
    with pytest.raises(ValueError):
        RdPoint(0, 30)


def test_rd_csv_round_trip(tmp_path):
    pts = [RdPoint(r, q) for r, q in ANCHOR]
    write_rd_points(pts, tmp_path / "a.csv")
    assert read_rd_points(tmp_path / "a.csv") == pts
    (tmp_path / "bad.csv").write_text("x,y\n1,2\n")
    with pytest.raises(ValueError):
        read_rd_points(tmp_path / "bad.csv")


def stat(n, mode, slot):
    return BlockStat(0, 0, n, mode, slot, (2, 3, 3, 6)[slot], 1, 0)


def test_report_all_mpm0():
    rep = mode_probability_report(ModeStats.from_blocks([stat(4, 0, 0)] * 10))
    assert rep["slots"]["all"] == [100.0, 0.0, 0.0, 0.0]
    assert rep["mpm_beats_non_mpm"] and rep["mpm0_beats_mpm12"]


def test_report_uniform_modes():
    rep = mode_probability_report(ModeStats.from_blocks([stat(8, m, 3) for m in range(35)] * 4))
    assert all(v == pytest.approx(100 / 35) for v in rep["modes"]["all"])
    assert rep["modes"]["all"][0] == pytest.approx(2.857, abs=1e-3)


@given(st.lists(st.tuples(st.sampled_from([4, 8, 16, 32]), st.integers(0, 34), st.integers(0, 3)), min_size=1, max_size=200))
def test_slot_percentages_sum(blocks):
    stats = ModeStats.from_blocks([stat(*b) for b in blocks])
    rep = mode_probability_report(stats)
    for row in rep["slots"].values():
        assert sum(row) == pytest.approx(100.0, abs=1e-9)
    assert sum(stats.slot_counts()) == len(blocks)
    assert stats.merge(ModeStats()).slot_counts() == stats.slot_counts()


def test_report_rejects_empty():
    with pytest.raises(ValueError):
        mode_probability_report(ModeStats())


def test_report_writers(tmp_path):
    rep = mode_probability_report(ModeStats.from_blocks([stat(4, 1, 0), stat(16, 5, 3), stat(16, 26, 1)]))
    write_slot_report(rep, tmp_path / "slots.csv", provenance="unit test")
    lines = (tmp_path / "slots.csv").read_text().splitlines()
    assert lines[0] == "size,mpm0,mpm1,mpm2,non_mpm,provenance"
    assert any(line.startswith("reference_proposal_nm,29.2,16.7,14.0,40.1") for line in lines)
    assert REFERENCE_SLOT_PERCENT["proposal_nm"] == (29.2, 16.7, 14.0, 40.1)
    write_mode_series(rep, tmp_path / "modes.csv")
    assert len((tmp_path / "modes.csv").read_text().splitlines()) == 36


class PlanarCopy:
    """Stand-in model whose normalized output reproduces TM planar exactly."""

    def __init__(self, n):
        self.n = n

    def batch_inputs(self, ctxs):
        return ctxs

    def forward(self, refs_list):
        out = np.stack([predict_tm(0, r, self.n).ravel() / 255.0 - 0.5 for r in refs_list])
        return out, None


class StubRegistry:
    def __init__(self, model):
        self.model = model

    def get(self, n, mode):
        return self.model


def test_per_mode_psnr_planar_copy():
    rng = np.random.default_rng(0)
    recon = ReconBuffer.from_plane(Plane(rng.integers(0, 256, (64, 64))))
    recon.decoded[32:, 32:] = False
    rect = BlockRect(32, 32, 8)
    samples = []
    for _ in range(5):
        recon.samples[24:32, 24:56] = rng.integers(0, 256, (8, 32))
        refs = extract_tm_refline(recon, rect)
        target = normalize(rng.integers(0, 256, (8, 8)))
        # the stand-in model reads the reference line through the context slot
        samples.append(TrainingSample(8, 0, 32, refs, target, refs))
    rows = per_mode_psnr(StubRegistry(PlanarCopy(8)), samples, 8)
    assert rows[0].count == 5 and rows[0].nm == rows[0].tm
    assert all(r.count == 0 and r.nm is None for r in rows[1:])


def test_per_mode_psnr_constant_sentinel():
    n = 16
    refs = TmReferenceLine(np.full(2 * n + 1, 128), np.full(2 * n, 128))
    zero = CnnModel.create(n, filters=2)
    for p in zero.params.values():
        p[...] = 0
    from nnintra.context import CnnContext

    ctx = CnnContext(n, np.zeros((n, 3 * n)), np.zeros((2 * n, n)))
    samples = [TrainingSample(n, m, 32, ctx, normalize(np.full((n, n), 128)), refs) for m in range(35)]
    rows = per_mode_psnr(StubRegistry(zero), samples, n)
    assert all(r.nm == math.inf and r.tm == math.inf for r in rows)


def test_mode_psnr_csv(tmp_path):
    from nnintra.metrics import ModePsnr

    write_mode_psnr([ModePsnr(0, 3, 30.0, 29.5), ModePsnr(1, 0, None, None)], tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines() == ["mode,count,nm_psnr,tm_psnr", "0,3,30.0000,29.5000", "1,0,,"]


def test_flops_report_rows():
    rows = flops_report([FcModel.create(4), make_model(16)])
    assert rows[0]["reference"] == 121e3 and 0.9 <= rows[0]["ratio"] <= 1.1
    assert 0.5 <= rows[1]["ratio"] <= 2.0
