import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnintra import layers as L
from nnintra.context import CnnContext, FcContext, fc_context_len
from nnintra.errors import FormatError, ModelError, ShapeError
from nnintra.intra_nm import (
    BASELINE,
    CnnModel,
    FcModel,
    ModelBank,
    ModelRegistry,
    cnn_layers,
    count_flops,
    load_model,
    make_model,
    model_from_bytes,
    model_to_bytes,
    save_model,
    seed_shape,
)


def rand_ctx(n, rng):
    if n <= 8:
        return FcContext(n, rng.uniform(-0.5, 0.5, fc_context_len(n)).astype(np.float32))
    return CnnContext(n, rng.uniform(-0.5, 0.5, (n, 3 * n)), rng.uniform(-0.5, 0.5, (2 * n, n)))


def zeroed(model, **bias):
    params = {k: np.zeros_like(v) for k, v in model.params.items()}
    for k, v in bias.items():
        params[k.replace("__", ".")][...] = v
    return type(model)(model.n, model.mode, params)


# --- layer primitives -----------------------------------------------------------


def test_same_pads():
    assert L.same_pads(16, 5, 2) == (1, 2)
    assert L.same_pads(8, 3, 1) == (1, 1)
    assert L.same_pads(4, 1, 1) == (0, 0)


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 7, 9, 3))
    w = rng.normal(size=(3, 3, 3, 4))
    b = rng.normal(size=4)
    out, _ = L.conv_forward(x, w, b, 2)
    (pt, _), (pl, _) = L.same_pads(7, 3, 2), L.same_pads(9, 3, 2)
    xp = np.pad(x, ((0, 0), (pt, 3), (pl, 3), (0, 0)))
    want = np.zeros((2, 4, 5, 4))
    for i in range(4):
        for j in range(5):
            patch = xp[:, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3, :]
            want[:, i, j] = np.einsum("nhwc,hwco->no", patch, w) + b
    assert np.allclose(out, want)


def test_deconv_is_conv_adjoint():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(5, 5, 3, 6))  # conv (3 -> 6); deconv maps 6 -> 3
    x = rng.normal(size=(2, 8, 8, 3))
    y = rng.normal(size=(2, 4, 4, 6))
    cx, _ = L.conv_forward(x, w, np.zeros(6), 2)
    dy, _ = L.deconv_forward(y, w, np.zeros(3), 2)
    assert dy.shape == x.shape
    assert np.isclose((cx * y).sum(), (x * dy).sum())


def numeric_grad(f, arr, idx, h=1e-6):
    old = arr[idx]
    arr[idx] = old + h
    up = f()
    arr[idx] = old - h
    down = f()
    arr[idx] = old
    return (up - down) / (2 * h)


@pytest.mark.parametrize("kind", ["conv", "deconv", "affine", "prelu"])
def test_layer_gradients(kind):
    rng = np.random.default_rng(2)
    if kind == "conv":
        x, w, b = rng.normal(size=(2, 6, 5, 2)), rng.normal(size=(3, 3, 2, 3)), rng.normal(size=3)
        fwd, bwd = (lambda: L.conv_forward(x, w, b, 2)), L.conv_backward
    elif kind == "deconv":
        x, w, b = rng.normal(size=(2, 3, 3, 4)), rng.normal(size=(5, 5, 2, 4)), rng.normal(size=2)
        fwd, bwd = (lambda: L.deconv_forward(x, w, b, 2)), L.deconv_backward
    elif kind == "affine":
        x, w, b = rng.normal(size=(3, 5)), rng.normal(size=(5, 4)), rng.normal(size=4)
        fwd, bwd = (lambda: L.affine_forward(x, w, b)), L.affine_backward
    else:
        x, w = rng.normal(size=(3, 4, 2)), np.array([0.3, -0.2])
        b = None
        fwd, bwd = (lambda: L.prelu_forward(x, w)), L.prelu_backward
    out, cache = fwd()
    g = rng.normal(size=out.shape)
    grads = bwd(g, cache)

    def f():
        return float((fwd()[0] * g).sum())

    for arr, grad in zip([x, w, b], grads):
        if arr is None:
            continue
        for idx in list(np.ndindex(arr.shape))[:: max(1, arr.size // 12)]:
            assert np.isclose(numeric_grad(f, arr, idx), grad[idx], rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_model_gradients(n):
    rng = np.random.default_rng(n)
    model = make_model(n, seed=3, dtype=np.float64, **({"filters": 4} if n >= 16 else {"width": 16}))
    # push some pre-activations negative so PReLU slope gradients are exercised
    x = model.batch_inputs([rand_ctx(n, rng) for _ in range(3)])
    out, cache = model.forward(x)
    g = rng.normal(size=out.shape)
    grads = model.backward(g, cache)
    assert set(grads) == set(model.params)

    def f():
        return float((model.forward(x)[0] * g).sum())

    for key, arr in model.params.items():
        for idx in list(np.ndindex(arr.shape))[:: max(1, arr.size // 4)]:
            num = numeric_grad(f, arr, idx)
            assert np.isclose(num, grads[key][idx], rtol=1e-4, atol=1e-6), key


# --- architecture ----------------------------------------------------------------


def test_fc_structure():
    for n, width_in in ((4, 192), (8, 320)):
        m = FcModel.create(n)
        assert m.params["fc1.w"].shape == (width_in, 128)
        assert m.params["fc2.w"].shape == m.params["fc3.w"].shape == (128, 128)
        assert m.params["fc4.w"].shape == (128, n * n)
        assert sorted(k for k in m.params if k.endswith(".a")) == ["act1.a", "act2.a", "act3.a"]


def test_cnn_geometry_16():
    m = CnnModel.create(16)
    above, _ = m._path("above", np.zeros((1, 16, 48, 1), np.float32))
    left, _ = m._path("left", np.zeros((1, 32, 16, 1), np.float32))
    assert above.shape == (1, 4, 12, 32) and above[0].size == 1536
    assert left.shape == (1, 8, 4, 32) and left[0].size == 1024
    assert m.params["merge.w"].shape == (2560, 512)


def test_cnn_geometry_32():
    m = CnnModel.create(32)
    assert m.params["merge.w"].shape == (2560, 512)
    assert seed_shape(32, 16) == (2, 2, 128)
    convs = [s for s in cnn_layers(32) if s.name.startswith("above.conv")]
    assert [(s.shape[0], s.shape[3], s.stride) for s in convs] == [(5, 16, 2), (5, 32, 2), (5, 64, 2), (5, 128, 2), (3, 128, 1)]


@pytest.mark.parametrize("n", [16, 32])
@pytest.mark.parametrize("filters", [2, 4, 16])
def test_merge_is_one_fifth(n, filters):
    merge = next(s for s in cnn_layers(n, filters) if s.name == "merge")
    assert merge.shape[1] * 5 == merge.shape[0]
    m = CnnModel.create(n, filters=filters)
    out, _ = m.forward(m.batch_inputs([rand_ctx(n, np.random.default_rng(0))]))
    assert out.shape == (1, n * n)


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_zero_params_predict_128(n):
    m = zeroed(make_model(n))
    p = m.predict(rand_ctx(n, np.random.default_rng(0)))
    assert p.shape == (n, n) and np.all(p == 128)


def test_output_bias_half_gives_255():
    m = zeroed(FcModel.create(4), fc4__b=0.5)
    assert np.all(m.predict(rand_ctx(4, np.random.default_rng(0))) == 255)


def test_fc_matches_matmul_oracle():
    rng = np.random.default_rng(5)
    m = FcModel.create(8, seed=9)
    ctxs = [rand_ctx(8, rng) for _ in range(4)]
    out, _ = m.forward(m.batch_inputs(ctxs))
    p = {k: v.astype(np.float64) for k, v in m.params.items()}
    h = np.stack([c.values for c in ctxs]).astype(np.float64)
    for i in (1, 2, 3):
        h = h @ p[f"fc{i}.w"] + p[f"fc{i}.b"]
        h = np.maximum(h, 0) + p[f"act{i}.a"] * np.minimum(h, 0)
    want = h @ p["fc4.w"] + p["fc4.b"]
    assert np.allclose(out, want, atol=1e-5)


def test_context_mismatch():
    with pytest.raises(ValueError):
        FcModel.create(4).predict(rand_ctx(8, np.random.default_rng(0)))
    with pytest.raises(ValueError):
        CnnModel.create(16).predict(rand_ctx(32, np.random.default_rng(0)))


def test_flops_within_tolerance():
    assert count_flops(FcModel.create(4)) == pytest.approx(121e3, rel=0.10)
    assert count_flops(FcModel.create(8)) == pytest.approx(167e3, rel=0.10)
    f16 = count_flops(CnnModel.create(16))
    assert 6.4e6 / 2 <= f16 <= 6.4e6 * 2
    f32 = count_flops(CnnModel.create(32))
    assert 35.4e6 / 2 <= f32 <= 35.4e6 * 2


def test_flops_by_hand_fc4():
    # 2 * (192*128 + 128*128 + 128*128 + 128*16) + 3 * 128 PReLU
    assert count_flops(FcModel.create(4)) == 2 * (192 * 128 + 2 * 128 * 128 + 128 * 16) + 3 * 128


# --- serialization ---------------------------------------------------------------


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_serialization_bit_identical(n, tmp_path):
    m = make_model(n, mode=7, seed=n)
    save_model(m, tmp_path / "m.nmip")
    back = load_model(tmp_path / "m.nmip")
    assert (back.n, back.mode, back.arch) == (n, 7, m.arch)
    for k in m.params:
        assert back.params[k].tobytes() == m.params[k].tobytes()
    assert model_to_bytes(back) == model_to_bytes(m)


def test_serialization_header():
    data = model_to_bytes(FcModel.create(4, mode=BASELINE))
    assert data[:4] == b"NMIP"
    assert data[4] == 1 and data[5] == 0 and data[6] == 4 and data[7] == 255


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 200))
def test_truncated_model_rejected(cut):
    data = model_to_bytes(FcModel.create(4))
    with pytest.raises(FormatError):
        model_from_bytes(data[: len(data) - cut])


def test_bad_magic_and_shape():
    data = bytearray(model_to_bytes(FcModel.create(4)))
    with pytest.raises(FormatError):
        model_from_bytes(b"XXXX" + bytes(data[4:]))
    data[6] = 8  # declare n=8 with n=4 weights
    with pytest.raises(FormatError):
        model_from_bytes(bytes(data))


def test_registry(tmp_path):
    reg = ModelRegistry()
    for n in (4, 16):
        base = make_model(n, seed=1, **({"filters": 4} if n == 16 else {"width": 8}))
        reg.add(base)
        for mode in range(35):
            reg.add(base.clone(mode))
    reg.check_complete(sizes=(4, 16))
    with pytest.raises(ModelError):
        reg.check_complete()
    with pytest.raises(ModelError):
        reg.get(8, 0)
    assert len(reg.missing()) == 70
    reg.save(tmp_path / "reg")
    back = ModelRegistry.load(tmp_path / "reg")
    assert back.digest() == reg.digest()
    assert (tmp_path / "reg" / "manifest.txt").exists()
    other = ModelRegistry.load(tmp_path / "reg")
    other.add(make_model(4, mode=3, seed=2, width=8))
    assert other.digest() != reg.digest()


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_model_bank_matches_models(n):
    rng = np.random.default_rng(n)
    models = [make_model(n, m, seed=m, **({} if n <= 8 else {"filters": 4})) for m in range(5)]
    for model in models:
        for k, v in model.params.items():
            if k.endswith(".b"):
                v[...] = rng.normal(0, 0.05, v.shape)
    bank = ModelBank(models)
    for _ in range(3):
        ctx = rand_ctx(n, rng)
        stacked = bank.predict(ctx)
        assert np.array_equal(stacked, np.stack([m.predict(ctx) for m in models]))
        # a single-model slice goes through the same path and must agree bit for bit
        for i in range(len(models)):
            assert np.array_equal(bank.predict(ctx, slice(i, i + 1))[0], stacked[i])


def test_model_bank_rejects_mixed():
    with pytest.raises(ShapeError):
        ModelBank([make_model(4), make_model(8)])
    with pytest.raises(ValueError):
        ModelBank([])
