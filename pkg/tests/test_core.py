import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from nnintra.core import BitReader, BitWriter, BlockRect, Plane, load_plane, pad_to_grid, save_plane
from nnintra.errors import FormatError


def write_pgm(path, w, h, payload, maxval=255):
    path.write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + bytes(payload))


def test_load_pgm_bytes(tmp_path):
    write_pgm(tmp_path / "a.pgm", 2, 2, [0, 255, 128, 64])
    p = load_plane(tmp_path / "a.pgm")
    assert (p.width, p.height) == (2, 2)
    assert p.samples.ravel().tolist() == [0, 255, 128, 64]


def test_pgm_header_comments(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n3 1\n255\n\x01\x02\x03")
    assert load_plane(tmp_path / "c.pgm").samples.tolist() == [[1, 2, 3]]


def test_pgm_16bit_rejected(tmp_path):
    (tmp_path / "b.pgm").write_bytes(b"P5\n1 1\n65535\n\x00\x01")
    with pytest.raises(FormatError, match="bit depth"):
        load_plane(tmp_path / "b.pgm")


def test_pgm_truncated(tmp_path):
    write_pgm(tmp_path / "t.pgm", 4, 4, [1] * 10)
    with pytest.raises(FormatError, match="truncated"):
        load_plane(tmp_path / "t.pgm")


def test_unsupported_format(tmp_path):
    (tmp_path / "x.bmp").write_bytes(b"BM\x00\x00")
    with pytest.raises(FormatError):
        load_plane(tmp_path / "x.bmp")


def test_png_rgb_white_uses_bt601(tmp_path):
    Image.fromarray(np.full((8, 8, 3), 255, np.uint8)).save(tmp_path / "w.png")
    p = load_plane(tmp_path / "w.png")
    # ((66 + 129 + 25) * 255 + 128) >> 8 = 219, plus 16
    assert p.samples.shape == (8, 8)
    assert np.all(p.samples == 235)


def test_png_gray_white(tmp_path):
    Image.fromarray(np.full((8, 8), 255, np.uint8)).save(tmp_path / "g.png")
    p = load_plane(tmp_path / "g.png")
    assert p.samples.size == 64 and np.all(p.samples >= 250)


def test_png_16bit_rejected(tmp_path):
    Image.fromarray(np.full((4, 4), 1000, np.uint16)).save(tmp_path / "d.png")
    with pytest.raises(FormatError, match="bit depth"):
        load_plane(tmp_path / "d.png")


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 40), st.integers(1, 40))))
def test_pgm_round_trip(tmp_path_factory, samples):
    path = tmp_path_factory.mktemp("pgm") / "p.pgm"
    p = Plane(samples)
    save_plane(p, path)
    assert load_plane(path) == p


def test_pad_aligned_is_identity():
    p = Plane(np.arange(32 * 32).reshape(32, 32) % 256)
    assert pad_to_grid(p, 32) == p


def test_pad_replicates_last_column():
    p = Plane(np.random.default_rng(0).integers(0, 256, (32, 33)))
    q = pad_to_grid(p, 32)
    assert (q.width, q.height) == (64, 32)
    assert np.array_equal(q.samples[:, :33], p.samples)
    assert np.all(q.samples[:, 33:] == p.samples[:, 32:33])


def test_pad_constant():
    q = pad_to_grid(Plane(np.full((30, 30), 100)), 32)
    assert q.samples.shape == (32, 32) and np.all(q.samples == 100)


@given(arrays(np.uint8, st.tuples(st.integers(1, 70), st.integers(1, 70))))
def test_pad_idempotent(samples):
    once = pad_to_grid(Plane(samples))
    assert pad_to_grid(once) == once
    assert once.width % 32 == 0 and once.height % 32 == 0


def test_plane_rejects_out_of_range():
    with pytest.raises(ValueError):
        Plane(np.array([[256]]))
    with pytest.raises(FormatError):
        Plane(np.zeros((2, 2)), bit_depth=10)


def test_block_rect_validation():
    assert [c.n for c in BlockRect(32, 0, 32).children()] == [16] * 4
    with pytest.raises(ValueError):
        BlockRect(0, 0, 12)
    with pytest.raises(ValueError):
        BlockRect(4, 0, 8)


@given(st.lists(st.integers(0, 1), max_size=3000))
def test_bit_round_trip(bits):
    w = BitWriter()
    w.write_bins("".join(map(str, bits)))
    data = w.getvalue()
    assert len(data) == -(-len(bits) // 8)
    r = BitReader(data)
    assert [r.read_bit() for _ in bits] == bits
    assert r.remaining < 8 and r.read(r.remaining) == 0


def test_bit_round_trip_large():
    rng = np.random.default_rng(1)
    bits = rng.integers(0, 2, 1 << 20)
    w = BitWriter()
    w.write_bins("".join(map(str, bits)))
    out = np.unpackbits(np.frombuffer(w.getvalue(), np.uint8))
    assert np.array_equal(out[: bits.size], bits)


@given(st.lists(st.tuples(st.integers(1, 40), st.integers(0, 2**40)), max_size=50))
def test_multibit_fields_round_trip(fields):
    fields = [(nb, v & ((1 << nb) - 1)) for nb, v in fields]
    w = BitWriter()
    for nb, v in fields:
        w.write(v, nb)
    r = BitReader(w.getvalue())
    assert [r.read(nb) for nb, _ in fields] == [v for _, v in fields]


def test_msb_first_packing():
    w = BitWriter()
    w.write(0b101, 3)
    assert w.getvalue() == bytes([0b10100000])


def test_reader_truncation():
    r = BitReader(b"\xff")
    r.read(8)
    with pytest.raises(FormatError):
        r.read_bit()
