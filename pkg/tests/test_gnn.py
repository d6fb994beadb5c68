import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphnorm import autodiff as ad
from graphnorm.gnn import (
    LayerParams,
    conv_layer,
    conv_layer_reference,
    filter_forward,
    forward,
    forward_batch,
    forward_tensors,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from graphnorm.loss import tcnl_terms
from graphnorm.trainer import _LossContext

from conftest import random_views


def _layer(d_out, d_in, n_v, hidden, value=0.0):
    return LayerParams(
        filter_w1=np.full((hidden, n_v), value),
        filter_b1=np.zeros(hidden),
        filter_w2=np.full((d_out * d_in, hidden), value),
        filter_b2=np.zeros(d_out * d_in),
        root=np.zeros((d_out, d_in)),
        bias=np.zeros(d_out),
    )


def test_filter_output_sizes():
    m = init_model((36, 24, 5), n_v=4)
    assert [l.filter_w2.shape[0] for l in m.layers] == [36, 864, 120]
    m6 = init_model((36, 24, 8), n_v=6)
    assert m6.layers[2].filter_w2.shape[0] == 192


def test_init_deterministic():
    a, b = init_model((4, 3, 2), 2, 5, seed=9), init_model((4, 3, 2), 2, 5, seed=9)
    for k, v in a.named_arrays().items():
        np.testing.assert_array_equal(v, b.named_arrays()[k])


def test_zero_filter_net():
    assert not filter_forward(_layer(3, 2, 2, 4), [0.3, 0.7]).any()


def test_filter_hand_value():
    layer = _layer(1, 1, 1, 1)
    layer.filter_w1[:] = 2.0
    layer.filter_w2[:] = 3.0
    assert filter_forward(layer, [1.0])[0, 0] == 6.0


def test_bias_only_flow(rng):
    layer = _layer(3, 2, 2, 4)
    layer.bias[:] = 1.0
    out = conv_layer(layer, rng.normal(size=(5, 2)), random_views(rng, 5, 2))
    np.testing.assert_allclose(out, np.ones((5, 3)))


def test_identity_filter_gives_mean_incident_weight():
    # single hidden unit passes e through: theta_ij = e_ij
    layer = _layer(1, 1, 1, 1)
    layer.filter_w1[:] = 1.0
    layer.filter_w2[:] = 1.0
    A = np.array([[0, 1, 2], [1, 0, 4], [2, 4, 0]], dtype=float)[:, :, None]
    out = conv_layer(layer, np.ones((3, 1)), A)
    np.testing.assert_allclose(out[:, 0], [1.5, 2.5, 3.0])


def test_factored_conv_matches_reference(rng):
    m = init_model((4, 3, 2), n_v=3, hidden=6, seed=2)
    views = random_views(rng, 7, 3)
    for layer in m.layers:
        for arr in layer.arrays().values():
            arr += rng.normal(scale=0.1, size=arr.shape)  # nonzero biases too
        emb = rng.normal(size=(7, layer.d_in))
        np.testing.assert_allclose(conv_layer(layer, emb, views), conv_layer_reference(layer, emb, views), atol=1e-12)


def test_layer_permutation_equivariance(rng):
    layer = init_model((4, 3, 2), n_v=2, hidden=5, seed=1).layers[1]
    views, emb = random_views(rng, 6, 2), rng.normal(size=(6, 4))
    perm = rng.permutation(6)
    out = conv_layer(layer, emb, views)
    out_p = conv_layer(layer, emb[perm], views[np.ix_(perm, perm)])
    np.testing.assert_allclose(out_p, out[perm], atol=1e-12)


def test_identical_embeddings_zero_template(rng):
    m = init_model((4, 3, 2), n_v=2, hidden=5, seed=0)
    for layer in m.layers:
        for a in (layer.filter_w1, layer.filter_w2, layer.filter_b2):
            a[:] = 0.0
    m.layers[2].bias[:] = 0.7
    _, T = forward(m, random_views(rng, 5, 2))
    assert not T.any()


def test_all_zero_parameters_zero_template(rng):
    m = init_model((4, 3, 2), n_v=2, hidden=5)
    m = m.with_arrays({k: np.zeros_like(v) for k, v in m.named_arrays().items()})
    assert not forward(m, random_views(rng, 5, 2))[1].any()


def test_five_node_permutation_brute_force(rng):
    m = init_model((4, 3, 2), n_v=2, hidden=5, seed=3)
    views = random_views(rng, 5, 2)
    T = forward(m, views)[1]
    for perm in [np.array(p) for p in ([1, 0, 2, 3, 4], [4, 3, 2, 1, 0], [2, 0, 4, 1, 3])]:
        Tp = forward(m, views[np.ix_(perm, perm)])[1]
        for i in range(5):
            for j in range(5):
                assert abs(Tp[i, j] - T[perm[i], perm[j]]) <= 1e-12


def test_readout_sum_vs_mean(rng):
    m = init_model((4, 3, 2), n_v=2, hidden=5, seed=3)
    views = random_views(rng, 5, 2)
    T_mean = forward(m, views)[1]
    m.readout = "sum"
    np.testing.assert_allclose(forward(m, views)[1], 2 * T_mean, atol=1e-14)


def test_view_count_mismatch(rng):
    m = init_model((4, 3, 2), n_v=3)
    with pytest.raises(ValueError, match="views"):
        forward(m, random_views(rng, 5, 2))


@given(st.integers(0, 10_000), st.integers(3, 8), st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_template_invariants(seed, n_r, n_v):
    rng = np.random.default_rng(seed)
    m = init_model((5, 4, 3), n_v=n_v, hidden=6, seed=seed)
    _, T = forward_batch(m, np.stack([random_views(rng, n_r, n_v) for _ in range(2)]))
    assert np.isfinite(T).all() and (T >= 0).all()
    np.testing.assert_array_equal(T, np.swapaxes(T, 1, 2))
    assert not np.diagonal(T, axis1=1, axis2=2).any()


def test_end_to_end_gradient(rng):
    X = np.stack([random_views(rng, 6, 2) for _ in range(3)])
    m = init_model((4, 3, 2), n_v=2, hidden=5, seed=4)
    ctx = _LossContext(X)
    subsets = np.array([[1, 2], [0, 2], [0, 1]])
    views, truths = ctx.comparison(subsets)

    def f(p):
        _, T = forward_tensors(p, X)
        c, k = tcnl_terms(T, views, truths, ctx.lam, 2.0)
        return ad.mean(c + k * 2.0)

    assert ad.gradient_check(f, m.named_arrays(), eps=1e-6, tol=1e-4) < 1e-4


def test_checkpoint_round_trip(tmp_path, rng):
    m = init_model((4, 3, 2), n_v=2, hidden=5, seed=8)
    m.meta = {"best_epoch": 3}
    save_checkpoint(m, tmp_path / "ck.json")
    back = load_checkpoint(tmp_path / "ck.json")
    for k, v in m.named_arrays().items():
        np.testing.assert_array_equal(back.named_arrays()[k], v)
    assert back.meta == {"best_epoch": 3} and back.dims == m.dims
    views = random_views(rng, 5, 2)
    np.testing.assert_array_equal(forward(back, views)[1], forward(m, views)[1])
    save_checkpoint(back, tmp_path / "ck2.json")
    assert (tmp_path / "ck.json").read_bytes() == (tmp_path / "ck2.json").read_bytes()
