import numpy as np
import pytest

from graph2seq import autodiff as ad
from graph2seq.autodiff import Tensor
from graph2seq.encoders import (BiLstmParams, GcnLayerParams, bilstm_encode,
                                compose_sr_node, encoder_output_width,
                                gcn_encode, gcn_layer, init_bilstm,
                                init_gcn_layer, init_lstm, lstm_step)
from graph2seq.errors import ConfigError, ContractError
from graph2seq.graph import EdgeDirection, make_graph, neighbourhood
from graph2seq.optim import ParamStore
from graph2seq.vocab import Vocabulary


def label_vocab(*labels):
    v = Vocabulary()
    v.add("self")
    for lab in labels:
        v.add(lab)
    return v


def small_setup(d=5, labels=("r", "s"), seed=0):
    vocab = label_vocab(*labels)
    store = ParamStore(seed=seed)
    layer = init_gcn_layer(store, "gcn.layer0", d, d, len(vocab))
    return vocab, store, layer


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def numpy_gcn_layer(H, g, layer, vocab):
    """Plain-numpy restatement of the gated update rule."""
    out = np.zeros((g.n_nodes, layer.out_width))
    for v in range(g.n_nodes):
        acc = np.zeros(layer.out_width)
        for u, label, direction in neighbourhood(g, v):
            W = layer.W[direction].data
            b = layer.bias[direction].data[vocab.id(label)]
            gate = sigmoid(H[u] @ layer.gate_w[direction].data
                           + float(layer.gate_b[direction].data))
            acc += gate * (H[u] @ W + b)
        out[v] = np.maximum(acc, 0.0)
    return out


def test_gcn_layer_matches_explicit_loop_oracle():
    g = make_graph(["a", "b", "c", "d"],
                   [(0, "r", 1), (1, "s", 2), (3, "r", 1), (2, "s", 2)])
    vocab, _, layer = small_setup()
    H = np.random.default_rng(1).normal(size=(4, 5))
    got = gcn_layer(Tensor(H), g, layer, vocab).data
    want = numpy_gcn_layer(H, g, layer, vocab)
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_gcn_layer_gates_closed_give_zero_output():
    g = make_graph(["a", "b"], [(0, "r", 1)])
    vocab, _, layer = small_setup()
    for direction in layer.gate_b:
        layer.gate_w[direction].data[:] = 0.0
        layer.gate_b[direction].data[...] = -1e4  # sigmoid -> ~0
    H = Tensor(np.random.default_rng(2).normal(size=(2, 5)))
    out = gcn_layer(H, g, layer, vocab).data
    np.testing.assert_allclose(out, 0.0, atol=1e-10)


def test_gcn_layer_gates_open_match_ungated_sum():
    g = make_graph(["a", "b"], [(0, "r", 1)])
    vocab, _, layer = small_setup()
    for direction in layer.gate_b:
        layer.gate_w[direction].data[:] = 0.0
        layer.gate_b[direction].data[...] = 1e4  # sigmoid -> ~1
    H = np.random.default_rng(3).normal(size=(2, 5))
    got = gcn_layer(Tensor(H), g, layer, vocab).data
    want = np.zeros_like(got)
    for v in range(2):
        acc = np.zeros(5)
        for u, label, direction in neighbourhood(g, v):
            acc += H[u] @ layer.W[direction].data \
                + layer.bias[direction].data[vocab.id(label)]
        want[v] = np.maximum(acc, 0.0)
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_gcn_layer_isolated_node_uses_only_self_loop():
    g = make_graph(["solo"], [])
    vocab, _, layer = small_setup()
    h = np.random.default_rng(4).normal(size=(1, 5))
    got = gcn_layer(Tensor(h), g, layer, vocab).data[0]
    d = EdgeDirection.LOOP
    gate = sigmoid(h[0] @ layer.gate_w[d].data + float(layer.gate_b[d].data))
    want = np.maximum(gate * (h[0] @ layer.W[d].data
                              + layer.bias[d].data[vocab.id("self")]), 0.0)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_gcn_layer_row_count_mismatch():
    g = make_graph(["a", "b"], [(0, "r", 1)])
    vocab, _, layer = small_setup()
    with pytest.raises(ContractError):
        gcn_layer(Tensor(np.zeros((3, 5))), g, layer, vocab)


def test_gcn_layer_strict_labels_reject_unknown():
    g = make_graph(["a", "b"], [(0, "unseen", 1)])
    vocab, _, layer = small_setup()
    with pytest.raises(ContractError):
        gcn_layer(Tensor(np.zeros((2, 5))), g, layer, vocab, strict_labels=True)


def test_gcn_layer_is_permutation_equivariant():
    labels = ["a", "b", "c", "d", "e"]
    edges = [(0, "r", 1), (1, "s", 2), (2, "r", 3), (0, "s", 4), (4, "r", 1)]
    g = make_graph(labels, edges)
    vocab, _, layer = small_setup()
    H = np.random.default_rng(5).normal(size=(5, 5))
    base = gcn_layer(Tensor(H), g, layer, vocab).data

    perm = [3, 0, 4, 1, 2]  # perm[v] = new index of old node v
    inv = np.argsort(perm)
    g2 = make_graph([labels[int(i)] for i in inv],
                    [(perm[s], lab, perm[t]) for s, lab, t in edges])
    permuted = gcn_layer(Tensor(H[inv]), g2, layer, vocab).data
    assert (permuted == base[inv]).all()  # bit-identical, not approximate


def test_gcn_layer_output_is_local():
    # two disconnected components; editing one leaves the other bit-identical
    vocab, _, layer = small_setup()
    H = np.random.default_rng(6).normal(size=(4, 5))
    g1 = make_graph(["a", "b", "c", "d"], [(0, "r", 1), (2, "r", 3)])
    g2 = make_graph(["a", "b", "c", "d"], [(0, "r", 1), (3, "s", 2)])
    out1 = gcn_layer(Tensor(H), g1, layer, vocab).data
    out2 = gcn_layer(Tensor(H), g2, layer, vocab).data
    assert (out1[:2] == out2[:2]).all()
    assert not (out1[2:] == out2[2:]).all()


# -- stacking and skip connections --------------------------------------

def stacked(skip, n_layers, d=4):
    vocab = label_vocab("r")
    store = ParamStore(seed=7)
    layers = []
    for k in range(n_layers):
        in_w = d * (k + 1) if skip == "dense" else d
        layers.append(init_gcn_layer(store, f"gcn.layer{k}", in_w, d, len(vocab)))
    g = make_graph(["a", "b", "c"], [(0, "r", 1), (1, "r", 2)])
    H = Tensor(np.random.default_rng(8).normal(size=(3, d)))
    return gcn_encode(g, H, layers, skip, vocab), store


@pytest.mark.parametrize("skip,n_layers,width", [
    ("none", 1, 4), ("none", 3, 4),
    ("residual", 2, 4), ("residual", 3, 4),
    ("dense", 1, 8), ("dense", 2, 12), ("dense", 3, 16),
])
def test_encode_output_widths(skip, n_layers, width):
    out, _ = stacked(skip, n_layers)
    assert out.shape == (3, width)
    assert encoder_output_width(4, n_layers, skip) == width


def test_dense_has_more_params_than_residual():
    _, dense_store = stacked("dense", 3)
    _, res_store = stacked("residual", 3)
    assert dense_store.n_values() > res_store.n_values()


def test_residual_adds_layer_input():
    vocab = label_vocab("r")
    store = ParamStore(seed=9)
    layer = init_gcn_layer(store, "l0", 4, 4, len(vocab))
    g = make_graph(["a", "b"], [(0, "r", 1)])
    H = Tensor(np.random.default_rng(10).normal(size=(2, 4)))
    plain = gcn_layer(H, g, layer, vocab).data
    res = gcn_encode(g, H, [layer], "residual", vocab).data
    np.testing.assert_allclose(res, plain + H.data, atol=1e-12)


def test_residual_requires_equal_widths():
    vocab = label_vocab("r")
    store = ParamStore(seed=0)
    layer = init_gcn_layer(store, "l0", 4, 6, len(vocab))
    g = make_graph(["a"], [])
    with pytest.raises(ConfigError):
        gcn_encode(g, Tensor(np.zeros((1, 4))), [layer], "residual", vocab)


def test_encode_rejects_bad_config():
    vocab = label_vocab("r")
    g = make_graph(["a"], [])
    with pytest.raises(ConfigError):
        gcn_encode(g, Tensor(np.zeros((1, 4))), [], "none", vocab)
    store = ParamStore(seed=0)
    layer = init_gcn_layer(store, "l0", 4, 4, len(vocab))
    with pytest.raises(ConfigError):
        gcn_encode(g, Tensor(np.zeros((1, 4))), [layer], "diagonal", vocab)


# -- SR node composition ------------------------------------------------

def test_compose_sr_node_sums_features():
    lemma = Tensor(np.array([1.0, 2.0]))
    feats = [Tensor(np.array([0.5, 0.5, 0.5])), Tensor(np.array([1.0, 0.0, -1.0]))]
    out = compose_sr_node(lemma, feats)
    np.testing.assert_allclose(out.data, [1.0, 2.0, 1.5, 0.5, -0.5])


def test_compose_sr_node_empty_features_zero_block():
    out = compose_sr_node(Tensor(np.array([3.0])), [], feature_dim=2)
    np.testing.assert_allclose(out.data, [3.0, 0.0, 0.0])


def test_compose_sr_node_empty_needs_dim():
    with pytest.raises(ContractError):
        compose_sr_node(Tensor(np.array([1.0])), [])


def test_compose_sr_node_mismatched_feature_dims():
    with pytest.raises(ContractError):
        compose_sr_node(Tensor(np.array([1.0])),
                        [Tensor(np.zeros(2)), Tensor(np.zeros(3))])


# -- LSTM baseline ------------------------------------------------------

def numpy_lstm_step(p, x, h, c):
    hd = p.hidden
    z = x @ p.Wx.data + h @ p.Wh.data + p.b.data
    i = sigmoid(z[:hd])
    f = sigmoid(z[hd:2 * hd])
    g = np.tanh(z[2 * hd:3 * hd])
    o = sigmoid(z[3 * hd:])
    c2 = f * c + i * g
    return o * np.tanh(c2), c2


def test_lstm_step_matches_numpy_oracle():
    store = ParamStore(seed=11)
    p = init_lstm(store, "lstm", 3, 4)
    rng = np.random.default_rng(12)
    x, h, c = rng.normal(size=3), rng.normal(size=4), rng.normal(size=4)
    h2, c2 = lstm_step(p, Tensor(x), Tensor(h), Tensor(c))
    wh, wc = numpy_lstm_step(p, x, h, c)
    np.testing.assert_allclose(h2.data, wh, atol=1e-12)
    np.testing.assert_allclose(c2.data, wc, atol=1e-12)


def test_bilstm_matches_unrolled_oracle():
    store = ParamStore(seed=13)
    p = init_bilstm(store, "bilstm", 3, 4)
    X = np.random.default_rng(14).normal(size=(5, 3))
    got = bilstm_encode(Tensor(X), p).data

    def run(cell, order):
        states = {}
        h, c = np.zeros(4), np.zeros(4)
        for t in order:
            h, c = numpy_lstm_step(cell, X[t], h, c)
            states[t] = h
        return states

    fwd = run(p.fwd, range(5))
    bwd = run(p.bwd, range(4, -1, -1))
    want = np.stack([np.concatenate([fwd[t], bwd[t]]) for t in range(5)])
    want = want @ p.proj_W.data + p.proj_b.data
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_bilstm_direction_symmetry():
    # With identical forward/backward cells, reversing the input reverses
    # the pre-projection states with the two halves swapped; after a
    # projection whose two h-blocks are equal, the output simply reverses.
    store = ParamStore(seed=15)
    p = init_bilstm(store, "bilstm", 3, 4)
    p.bwd.Wx.data[:] = p.fwd.Wx.data
    p.bwd.Wh.data[:] = p.fwd.Wh.data
    p.bwd.b.data[:] = p.fwd.b.data
    p.proj_W.data[4:] = p.proj_W.data[:4]
    X = np.random.default_rng(16).normal(size=(6, 3))
    out = bilstm_encode(Tensor(X), p).data
    rev = bilstm_encode(Tensor(X[::-1].copy()), p).data
    np.testing.assert_allclose(rev, out[::-1], atol=1e-12)


def test_bilstm_rejects_empty_sequence():
    store = ParamStore(seed=0)
    p = init_bilstm(store, "bilstm", 3, 4)
    with pytest.raises(ContractError):
        bilstm_encode(Tensor(np.zeros((0, 3))), p)


def test_gcn_encode_gradients_flow_to_all_layers():
    out, store = stacked("dense", 2)
    ad.backward(out.sum())
    for name, t in store:
        if name.startswith("gcn.layer0.W_") or name.startswith("gcn.layer1.W_"):
            assert np.abs(t.grad).sum() > 0.0, name
