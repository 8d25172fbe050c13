import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fakebert.encoder import tiny_encoder, trainable_parameter_count
from fakebert.heads import (
    PUBLISHED_VARIANTS,
    BiLSTMHead,
    CNNHead,
    VariantConfigError,
    VariantSpec,
    bilstm_head_forward,
    build_variant,
    cnn_head_forward,
    logits_for,
    predict,
    softmax,
)
from oracles import finite_difference_check, naive_bilstm_final, naive_cnn_logits


@pytest.mark.parametrize(
    "vid, head, frozen, lr, epochs, layers",
    [
        (1, "linear", False, 2e-5, 4, 0),
        (2, "cnn", True, 2e-5, 4, 0),
        (3, "cnn", False, 2e-5, 4, 0),
        (4, "bilstm", True, 5e-5, 10, 2),
        (5, "bilstm", False, 5e-5, 6, 1),
    ],
)
def test_published_variant_settings(vid, head, frozen, lr, epochs, layers):
    spec = VariantSpec.published(vid)
    assert (spec.head, spec.freeze_encoder, spec.learning_rate, spec.epochs) == (head, frozen, lr, epochs)
    if head == "bilstm":
        assert spec.bilstm_layers == layers
    assert spec.dropout_rate == 0.1 and spec.num_classes == 2


def test_variant_head_mismatch_rejected():
    with pytest.raises(VariantConfigError):
        VariantSpec(variant_id=2, head="bilstm", freeze_encoder=True, learning_rate=2e-5, epochs=4, bilstm_layers=1)
    with pytest.raises(VariantConfigError):
        VariantSpec.published(3, freeze_encoder=True)
    with pytest.raises(VariantConfigError):
        VariantSpec.published(6)


def test_build_variant_4():
    enc = tiny_encoder()
    model = build_variant(VariantSpec.published(4, bilstm_hidden=8), enc, seed=0)
    assert isinstance(model.head, BiLSTMHead)
    assert model.head.lstm.num_layers == 2 and model.head.lstm.bidirectional
    assert model.frozen
    assert trainable_parameter_count(model) == sum(p.numel() for p in model.head.parameters())


def test_build_variant_1_uses_pooled_state():
    enc = tiny_encoder()
    model = build_variant(VariantSpec.published(1), enc, seed=0)
    assert not model.frozen
    ids = torch.tensor([[2, 10, 11, 3, 0, 0]])
    mask = torch.tensor([[1, 1, 1, 1, 0, 0]])
    model.eval()
    with torch.no_grad():
        expected = model.head(enc(ids, mask).pooled_state)
        assert torch.equal(model(ids, mask), expected)


def test_build_variant_seeded():
    a = build_variant(VariantSpec.published(3, cnn_filters=4), tiny_encoder(), seed=9)
    b = build_variant(VariantSpec.published(3, cnn_filters=4), tiny_encoder(), seed=9)
    assert torch.equal(a.head.conv2.weight, b.head.conv2.weight)


def test_cnn_feature_length():
    head = CNNHead(hidden_size=768, filters=5)
    x = torch.randn(1, 512, 768)
    assert head.features(x).shape == (1, 10)
    assert cnn_head_forward(head, x[0]).shape == (2,)


def test_cnn_zero_input_gives_output_bias():
    head = CNNHead(8, filters=3)
    for conv in (head.conv1, head.conv2):
        torch.nn.init.zeros_(conv.bias)
    logits = cnn_head_forward(head, torch.zeros(5, 8))
    assert torch.allclose(logits, head.out.bias)


def test_cnn_matches_direct_summation():
    torch.manual_seed(0)
    head = CNNHead(8, filters=2).double()
    with torch.no_grad():
        for p in head.parameters():
            p.copy_(torch.randn_like(p))
    x = np.random.default_rng(1).normal(size=(4, 8))
    got = cnn_head_forward(head, torch.from_numpy(x)).detach().numpy()
    np.testing.assert_allclose(got, naive_cnn_logits(x, head), atol=1e-6)


def test_cnn_needs_two_positions():
    with pytest.raises(ValueError):
        cnn_head_forward(CNNHead(4, filters=2), torch.zeros(1, 4))


def test_cnn_dropout_only_in_training():
    head = CNNHead(8, filters=64)
    x = torch.randn(6, 8)
    torch.manual_seed(0)
    a = cnn_head_forward(head, x, training=False)
    b = cnn_head_forward(head, x, training=False)
    assert torch.equal(a, b)
    c = cnn_head_forward(head, x, training=True)
    assert not torch.equal(a, c)


def test_bilstm_zero_weights_give_output_bias():
    head = BiLSTMHead(4, lstm_hidden=3, num_layers=2)
    with torch.no_grad():
        for name, p in head.lstm.named_parameters():
            p.zero_()
    logits = bilstm_head_forward(head, torch.randn(5, 4))
    assert torch.allclose(logits, head.out.bias)


@pytest.mark.parametrize("layers", [1, 2])
def test_bilstm_matches_recurrence(layers):
    torch.manual_seed(layers)
    head = BiLSTMHead(4, lstm_hidden=2, num_layers=layers).double()
    x = np.random.default_rng(2).normal(size=(3, 4))
    fwd, bwd = naive_bilstm_final(x, head.lstm)
    with torch.no_grad():
        states = head.final_states(torch.from_numpy(x).unsqueeze(0))[0].numpy()
    np.testing.assert_allclose(states, np.concatenate([fwd, bwd]), atol=1e-6)


def test_bilstm_packed_lengths_ignore_padding():
    torch.manual_seed(0)
    head = BiLSTMHead(4, lstm_hidden=3, num_layers=2).double()
    x = torch.randn(1, 5, 4, dtype=torch.float64)
    padded = torch.cat([x, torch.randn(1, 3, 4, dtype=torch.float64)], dim=1)
    with torch.no_grad():
        assert torch.allclose(head(x), head(padded, lengths=[5]))


def test_bilstm_reversal_swaps_directions():
    torch.manual_seed(4)
    head = BiLSTMHead(4, lstm_hidden=3, num_layers=1).double()
    with torch.no_grad():
        for name in ("weight_ih", "weight_hh", "bias_ih", "bias_hh"):
            getattr(head.lstm, f"{name}_l0_reverse").copy_(getattr(head.lstm, f"{name}_l0"))
        x = torch.randn(1, 6, 4, dtype=torch.float64)
        s = head.final_states(x)[0]
        r = head.final_states(x.flip(1))[0]
    assert torch.allclose(s[:3], r[3:]) and torch.allclose(s[3:], r[:3])


def test_cnn_gradients_match_finite_differences():
    torch.manual_seed(0)
    head = CNNHead(5, filters=3).double().eval()
    x = torch.randn(2, 6, 5, dtype=torch.float64)
    y = torch.tensor([0, 1])
    finite_difference_check(head, lambda: F.cross_entropy(head(x), y))


def test_bilstm_gradients_match_finite_differences():
    torch.manual_seed(0)
    head = BiLSTMHead(4, lstm_hidden=3, num_layers=2).double()
    x = torch.randn(2, 5, 4, dtype=torch.float64)
    y = torch.tensor([1, 0])
    finite_difference_check(head, lambda: F.cross_entropy(head(x), y))


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])
    e = math.e
    np.testing.assert_allclose(softmax([1.0, 0.0]), [e / (e + 1), 1 / (e + 1)], atol=1e-12)
    np.testing.assert_allclose(softmax([1.0, 0.0]), [0.7311, 0.2689], atol=1e-4)
    big = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(big))
    np.testing.assert_allclose(big, [1.0, 0.0])


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(z=arrays(np.float64, st.integers(1, 6), elements=finite), shift=finite)
def test_softmax_properties(z, shift):
    p = softmax(z)
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-9
    np.testing.assert_allclose(softmax(z + shift), p, atol=1e-9)
    assert p[np.argmax(z)] == p.max()


class FixedLogits(torch.nn.Module):
    def __init__(self, rows):
        super().__init__()
        self.rows = torch.tensor(rows, dtype=torch.float64)

    def forward(self, ids, mask):
        return self.rows[torch.as_tensor(ids)[:, 0]]


def test_predict_argmax_and_tie():
    # class order is (real, fake)
    model = FixedLogits([[-1.0, 2.0], [0.3, 0.3], [2.0, -1.0]])
    ids = np.array([[0, 0], [1, 0], [2, 0]])
    preds = predict(model, (ids, np.ones_like(ids)))
    assert [lab for lab, _ in preds] == ["fake", "real", "real"]
    assert preds[1][1] == 0.5
    np.testing.assert_allclose(preds[0][1], softmax([-1.0, 2.0])[1])


def test_batched_prediction_equals_single(tiny_tokenizer, corpus64):
    from fakebert.textprep import encode_batch

    model = build_variant(VariantSpec.published(5, bilstm_hidden=8), tiny_encoder(), seed=0)
    ids, mask = encode_batch([r.text for r in corpus64[:10]], tiny_tokenizer)
    # encoder sized to the default tiny vocab; keep ids in range
    ids = ids % 1000
    batched = predict(model, (ids, mask), batch_size=10)
    single = [predict(model, (ids[i : i + 1], mask[i : i + 1]))[0] for i in range(10)]
    assert [b[0] for b in batched] == [s[0] for s in single]
    np.testing.assert_allclose([b[1] for b in batched], [s[1] for s in single], atol=1e-6)
    assert np.array_equal(logits_for(model, (ids, mask)), logits_for(model, (ids, mask)))


def test_published_variant_table_complete():
    assert sorted(PUBLISHED_VARIANTS) == [1, 2, 3, 4, 5]
