import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rsnet.numerics import (
    ConfigError,
    Encoder,
    EncoderBlock,
    FormatError,
    LayerNorm,
    Linear,
    MultiHeadAttention,
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    backward,
    block_diagonal_mask,
    grad_check,
    grad_check_detail,
    layer_norm,
    load_checkpoint,
    log_softmax,
    matmul,
    save_checkpoint,
    softmax,
)
from rsnet.numerics.tensor import exp, log, relu, sigmoid, tsum


def _param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


# --- forward oracles -------------------------------------------------------


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 5))
    ref = np.zeros((3, 5))
    for i in range(3):
        for j in range(5):
            for k in range(4):
                ref[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, ref, atol=1e-12)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_softmax_uniform_and_shift_invariance():
    np.testing.assert_allclose(softmax(Tensor(np.zeros(4))).data, 0.25)
    x = np.random.default_rng(1).standard_normal((5, 7))
    np.testing.assert_allclose(softmax(Tensor(x)).data, softmax(Tensor(x + 1000.0)).data, atol=1e-12)


def test_softmax_masked_entries_are_exactly_zero():
    mask = np.array([[True, False, True]])
    p = softmax(Tensor(np.array([[1.0, 50.0, 2.0]])), mask=mask).data
    assert p[0, 1] == 0.0
    np.testing.assert_allclose(p.sum(), 1.0)


def test_log_softmax_matches_log_of_softmax():
    x = np.random.default_rng(2).standard_normal((4, 6)) * 5
    np.testing.assert_allclose(log_softmax(Tensor(x)).data, np.log(softmax(Tensor(x)).data), atol=1e-12)


def _two_pass_layer_norm(x, eps=1e-5):
    out = np.empty_like(x)
    for i, row in enumerate(x):
        mu = sum(row) / len(row)
        var = sum((v - mu) ** 2 for v in row) / len(row)
        out[i] = [(v - mu) / np.sqrt(var + eps) for v in row]
    return out


def test_layer_norm_matches_two_pass_oracle():
    x = np.random.default_rng(3).standard_normal((6, 8)) * 3 + 2
    y = layer_norm(Tensor(x), Tensor(np.ones(8)), Tensor(np.zeros(8))).data
    np.testing.assert_allclose(y, _two_pass_layer_norm(x), atol=1e-12)


def test_layer_norm_constant_row_maps_to_bias():
    bias = np.arange(4.0)
    y = layer_norm(Tensor(np.full((2, 4), 7.0)), Tensor(np.full(4, 3.0)), Tensor(bias)).data
    np.testing.assert_array_equal(y, np.tile(bias, (2, 1)))


def test_multihead_attention_matches_per_head_loop():
    rng = np.random.default_rng(4)
    d, heads, n = 8, 2, 5
    mha = MultiHeadAttention(d, heads, rng)
    x = rng.standard_normal((n, d))
    mask = block_diagonal_mask([2, 3])
    got = mha(Tensor(x), Tensor(x), Tensor(x), mask).data

    W = {k: getattr(mha, k).weight.data for k in ("q_proj", "k_proj", "v_proj", "out_proj")}
    B = {k: getattr(mha, k).bias.data for k in W}
    q, k, v = (x @ W[p] + B[p] for p in ("q_proj", "k_proj", "v_proj"))
    dh = d // heads
    heads_out = []
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        out = np.zeros((n, dh))
        for i in range(n):
            allowed = [j for j in range(n) if mask[i, j]]
            s = np.array([q[i, sl] @ k[j, sl] / np.sqrt(dh) for j in allowed])
            w = np.exp(s - s.max())
            w /= w.sum()
            out[i] = sum(wj * v[j, sl] for wj, j in zip(w, allowed))
        heads_out.append(out)
    ref = np.concatenate(heads_out, axis=1) @ W["out_proj"] + B["out_proj"]
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_heads_must_divide_width():
    with pytest.raises(ConfigError):
        MultiHeadAttention(10, 3, np.random.default_rng(0))


def test_block_diagonal_mask():
    m = block_diagonal_mask([1, 2])
    assert m.tolist() == [[True, False, False], [False, True, True], [False, True, True]]


# --- permutation properties ------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 7))
def test_encoder_is_permutation_equivariant(seed, n):
    rng = np.random.default_rng(seed)
    enc = Encoder(8, 2, 2, rng)
    x = rng.standard_normal((n, 8))
    perm = rng.permutation(n)
    np.testing.assert_allclose(enc(Tensor(x[perm])).data, enc(Tensor(x)).data[perm], atol=1e-9)


# --- backward ----------------------------------------------------------------


def test_backward_of_product_and_sum():
    a = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    b = Tensor(np.array([4.0, 5.0, 6.0]), requires_grad=True)
    with Tape() as tape:
        loss = tsum(a * b)
    backward(loss, tape)
    np.testing.assert_array_equal(a.grad, b.data)
    np.testing.assert_array_equal(b.grad, a.data)


def test_gradient_accumulates_over_reuse():
    x = Tensor(np.array(3.0), requires_grad=True)
    with Tape() as tape:
        y = x * x + x
    backward(y, tape)
    assert x.grad == pytest.approx(7.0)


def test_no_tape_records_nothing():
    a = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        pass
    _ = tsum(a * 2.0)
    assert len(tape) == 0


def test_backward_requires_scalar():
    a = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = a * 2.0
    with pytest.raises(ShapeError):
        backward(y, tape)


def test_non_finite_tensor_rejected():
    with pytest.raises(NonFiniteError):
        Tensor(np.array([1.0, np.nan]))


@pytest.mark.parametrize("op", [exp, sigmoid, relu, lambda t: log(exp(t) + 1.0)])
def test_elementwise_gradients(op):
    rng = np.random.default_rng(5)
    x = _param(rng, 4, 3)
    x.data += np.sign(x.data) * 0.1  # stay off the relu kink
    assert grad_check(lambda: tsum(op(x) * op(x)), [x], n_coords=None) < 1e-6


def test_layer_norm_gradients():
    rng = np.random.default_rng(6)
    x, g, b = _param(rng, 3, 5), _param(rng, 5), _param(rng, 5)
    w = rng.standard_normal((3, 5))
    assert grad_check(lambda: tsum(layer_norm(x, g, b) * Tensor(w)), [x, g, b], n_coords=None) < 1e-6


def test_masked_attention_block_gradients():
    rng = np.random.default_rng(7)
    block = EncoderBlock(8, 2, rng)
    x = _param(rng, 5, 8)
    pos = _param(rng, 5, 8)
    mask = block_diagonal_mask([2, 3])
    w = rng.standard_normal((5, 8))
    params = [x, pos] + block.parameters()

    def f():
        return tsum(block(x, mask=mask, pos=pos) * Tensor(w))

    assert grad_check(f, params, n_coords=120, rng=rng) < 1e-5


def test_grad_check_detects_wrong_gradient():
    from rsnet.numerics.tensor import _make

    x = Tensor(np.array([0.3, -0.7]), requires_grad=True)

    def f():  # forward sum(x^2), backward deliberately 3x instead of 2x
        return _make(np.sum(x.data**2), (x,), lambda g: (g * 3 * x.data,))

    assert grad_check(f, [x], n_coords=None) > 0.1


def test_grad_check_resamples_kinks():
    # x[0] sits exactly on the relu breakpoint; the others are smooth
    x = Tensor(np.array([0.0, 0.5, -0.4, 1.3]), requires_grad=True)

    def f():
        return tsum(relu(x) * Tensor(np.array([2.0, 1.0, 3.0, -1.0])))

    assert grad_check(f, [x], n_coords=None) > 0.4
    res = grad_check_detail(f, [x], n_coords=None, skip_kinks=True)
    assert (res.skipped_kinks, res.checked) == (1, 3)
    assert res.worst < 1e-8


def test_grad_check_zero_slope_needs_absolute_agreement():
    from rsnet.numerics.tensor import _make

    x = Tensor(np.array([0.7, 0.2]), requires_grad=True)
    big = 1e3

    def flat():  # x[1] does not enter the loss: true slope 0
        return _make(np.array(big + x.data[0] ** 2), (x,), lambda g: (g * np.array([2 * x.data[0], 0.0]),))

    res = grad_check_detail(flat, [x], eps=1e-5, n_coords=None, resolution=None)
    assert (res.checked, res.below_resolution) == (1, 1) and res.worst < 1e-6

    def wrong():  # claims slope 1e-3 where there is none
        return _make(np.array(big + x.data[0] ** 2), (x,), lambda g: (g * np.array([2 * x.data[0], 1e-3]),))

    assert grad_check_detail(wrong, [x], eps=1e-5, n_coords=None, resolution=None).worst > 0.1


def test_grad_check_rejects_bad_eps():
    x = Tensor(np.zeros(1), requires_grad=True)
    with pytest.raises(ValueError):
        grad_check(lambda: tsum(x), [x], eps=1e-9)


# --- modules and checkpoints ----------------------------------------------


def test_linear_layout_and_init_bounds():
    lin = Linear(6, 4, np.random.default_rng(8))
    assert lin.weight.shape == (6, 4)
    assert np.abs(lin.weight.data).max() <= np.sqrt(6 / 10)
    np.testing.assert_array_equal(lin.bias.data, 0.0)


def test_state_dict_round_trip_and_strictness():
    a, b = Encoder(8, 1, 2, np.random.default_rng(0)), Encoder(8, 1, 2, np.random.default_rng(1))
    b.load_state_dict(a.state_dict())
    for (ka, pa), (kb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert ka == kb
        np.testing.assert_array_equal(pa.data, pb.data)
    state = a.state_dict()
    state.pop(next(iter(state)))
    with pytest.raises(KeyError):
        b.load_state_dict(state)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    enc = Encoder(8, 2, 2, np.random.default_rng(9))
    save_checkpoint(tmp_path / "a.npz", enc.state_dict(), {"note": "x"})
    state, meta = load_checkpoint(tmp_path / "a.npz")
    assert meta["note"] == "x" and meta["format"] == "rsnet-checkpoint"
    for k, v in enc.state_dict().items():
        assert state[k].tobytes() == v.tobytes()
    save_checkpoint(tmp_path / "b.npz", state, {"note": "x"})
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


def test_checkpoint_is_numpy_loadable(tmp_path):
    save_checkpoint(tmp_path / "a.npz", {"w": np.arange(3.0)})
    with np.load(tmp_path / "a.npz") as z:
        np.testing.assert_array_equal(z["w"], np.arange(3.0))


def test_checkpoint_version_mismatch(tmp_path):
    from rsnet.numerics.checkpoint import write_archive

    write_archive(tmp_path / "a.npz", {"w": np.zeros(1)}, {"format": "rsnet-checkpoint", "version": 99})
    with pytest.raises(FormatError, match="version"):
        load_checkpoint(tmp_path / "a.npz")
    (tmp_path / "junk.npz").write_bytes(b"not a zip")
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "junk.npz")


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 6)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_layer_norm_output_is_finite_and_centred(x):
    d = x.shape[1]
    y = layer_norm(Tensor(x), Tensor(np.ones(d)), Tensor(np.zeros(d))).data
    assert np.isfinite(y).all()
    np.testing.assert_allclose(y.mean(axis=1), 0.0, atol=1e-9)


def test_layernorm_module_params():
    ln = LayerNorm(4)
    assert [k for k, _ in ln.named_parameters()] == ["gain", "bias"]
