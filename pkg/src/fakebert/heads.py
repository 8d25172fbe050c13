"""The five encoder + head model variants."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from safetensors.torch import load_file, safe_open, save_file
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence

from .corpus import LABELS
from .encoder import Encoder, EncoderConfig, set_frozen
from .textprep import EncodedExample, stack

HEADS = ("linear", "cnn", "bilstm")
CHECKPOINT_FORMAT = "fakebert-model/1"

# variant id -> (head, freeze encoder, learning rate, epochs, BiLSTM layers)
PUBLISHED_VARIANTS = {
    1: ("linear", False, 2e-5, 4, 0),
    2: ("cnn", True, 2e-5, 4, 0),
    3: ("cnn", False, 2e-5, 4, 0),
    4: ("bilstm", True, 5e-5, 10, 2),
    5: ("bilstm", False, 5e-5, 6, 1),
}


class VariantConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VariantSpec:
    variant_id: int
    head: str
    freeze_encoder: bool
    learning_rate: float
    epochs: int
    bilstm_layers: int = 0
    bilstm_hidden: int = 256
    cnn_filters: int = 256
    dropout_rate: float = 0.1
    num_classes: int = 2

    def __post_init__(self):
        if self.variant_id not in PUBLISHED_VARIANTS:
            raise VariantConfigError(f"variant_id must be 1-5, got {self.variant_id}")
        head, frozen = PUBLISHED_VARIANTS[self.variant_id][:2]
        if (self.head, self.freeze_encoder) != (head, frozen):
            raise VariantConfigError(
                f"variant {self.variant_id} is head={head!r}, freeze_encoder={frozen}; "
                f"got head={self.head!r}, freeze_encoder={self.freeze_encoder}"
            )
        if self.head == "bilstm" and self.bilstm_layers not in (1, 2):
            raise VariantConfigError(f"bilstm_layers must be 1 or 2, got {self.bilstm_layers}")
        if self.learning_rate <= 0 or self.epochs < 0:
            raise VariantConfigError("learning_rate must be positive and epochs non-negative")
        if self.num_classes != 2:
            raise VariantConfigError("only binary classification is supported")

    @classmethod
    def published(cls, variant_id, **overrides):
        """The published settings for a variant, with optional field overrides."""
        if variant_id not in PUBLISHED_VARIANTS:
            raise VariantConfigError(f"variant_id must be 1-5, got {variant_id}")
        head, frozen, lr, epochs, layers = PUBLISHED_VARIANTS[variant_id]
        base = dict(
            variant_id=variant_id,
            head=head,
            freeze_encoder=frozen,
            learning_rate=lr,
            epochs=epochs,
            bilstm_layers=layers,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        return asdict(self)


class LinearHead(nn.Module):
    """Dropout + linear classifier on the pooled start-token state."""

    def __init__(self, hidden_size, dropout_rate=0.1, num_classes=2):
        super().__init__()
        self.dropout = nn.Dropout(dropout_rate)
        self.out = nn.Linear(hidden_size, num_classes)

    def forward(self, pooled):
        return self.out(self.dropout(pooled))


class CNNHead(nn.Module):
    """Two parallel convolutions (window 1 and 2, full hidden width) with ReLU,
    global max-pooling per filter, dropout and a linear output layer."""

    def __init__(self, hidden_size, filters=256, dropout_rate=0.1, num_classes=2):
        super().__init__()
        self.conv1 = nn.Conv1d(hidden_size, filters, kernel_size=1)
        self.conv2 = nn.Conv1d(hidden_size, filters, kernel_size=2)
        self.dropout = nn.Dropout(dropout_rate)
        self.out = nn.Linear(2 * filters, num_classes)

    def features(self, states):
        if states.shape[1] < 2:
            raise ValueError(f"CNN head needs at least 2 positions, got {states.shape[1]}")
        x = states.transpose(1, 2)  # (batch, H, L)
        pooled = [torch.relu(conv(x)).amax(dim=2) for conv in (self.conv1, self.conv2)]
        return torch.cat(pooled, dim=1)

    def forward(self, states):
        return self.out(self.dropout(self.features(states)))


class BiLSTMHead(nn.Module):
    """Stacked bidirectional LSTM; the last forward and backward states feed a linear layer."""

    def __init__(self, hidden_size, lstm_hidden=256, num_layers=1, num_classes=2):
        super().__init__()
        if num_layers not in (1, 2):
            raise ValueError(f"num_layers must be 1 or 2, got {num_layers}")
        self.lstm = nn.LSTM(hidden_size, lstm_hidden, num_layers=num_layers, batch_first=True, bidirectional=True)
        self.out = nn.Linear(2 * lstm_hidden, num_classes)

    def final_states(self, states, lengths=None):
        if lengths is not None:
            states = pack_padded_sequence(states, torch.as_tensor(lengths).cpu(), batch_first=True, enforce_sorted=False)
        _, (h_n, _) = self.lstm(states)
        # h_n: (layers * 2, batch, hidden); the last two rows belong to the top layer
        return torch.cat([h_n[-2], h_n[-1]], dim=1)

    def forward(self, states, lengths=None):
        return self.out(self.final_states(states, lengths))


def cnn_head_forward(head: CNNHead, sequence_states, training=False):
    """Logits for one ``(L, H)`` matrix or a ``(batch, L, H)`` batch."""
    states = torch.as_tensor(sequence_states, dtype=head.out.weight.dtype)
    single = states.dim() == 2
    if single:
        states = states.unsqueeze(0)
    head.train(training)
    logits = head(states)
    return logits[0] if single else logits


def bilstm_head_forward(head: BiLSTMHead, sequence_states, lengths=None):
    states = torch.as_tensor(sequence_states, dtype=head.out.weight.dtype)
    single = states.dim() == 2
    if single:
        states = states.unsqueeze(0)
    logits = head(states, lengths)
    return logits[0] if single else logits


class FakeNewsModel(nn.Module):
    def __init__(self, spec: VariantSpec, encoder: Encoder, head: nn.Module):
        super().__init__()
        self.spec = spec
        self.encoder = encoder
        self.head = head
        self.frozen = False

    def forward(self, token_ids, attention_mask):
        attention_mask = torch.as_tensor(attention_mask, dtype=torch.long)
        if self.frozen:
            with torch.no_grad():
                enc = self.encoder(token_ids, attention_mask)
        else:
            enc = self.encoder(token_ids, attention_mask)
        if self.spec.head == "linear":
            return self.head(enc.pooled_state)
        if self.spec.head == "cnn":
            return self.head(enc.sequence_states)
        return self.head(enc.sequence_states, attention_mask.sum(dim=1))


def build_variant(spec: VariantSpec, encoder: Encoder, seed=None):
    """Attach the head described by ``spec`` to ``encoder`` and apply freezing.

    Head weights are drawn from torch's global RNG unless ``seed`` is given,
    in which case they are reproducible and the global state is untouched.
    """
    if not isinstance(spec, VariantSpec):
        raise VariantConfigError(f"expected VariantSpec, got {type(spec).__name__}")
    H = encoder.config.hidden_size
    with torch.random.fork_rng(devices=[], enabled=seed is not None):
        if seed is not None:
            torch.manual_seed(seed)
        if spec.head == "linear":
            head = LinearHead(H, spec.dropout_rate, spec.num_classes)
        elif spec.head == "cnn":
            head = CNNHead(H, spec.cnn_filters, spec.dropout_rate, spec.num_classes)
        else:
            head = BiLSTMHead(H, spec.bilstm_hidden, spec.bilstm_layers, spec.num_classes)
    model = FakeNewsModel(spec, encoder, head)
    set_frozen(model, spec.freeze_encoder)
    return model


def softmax(z):
    """Max-shifted softmax over the last axis."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _as_arrays(examples):
    if isinstance(examples, tuple) and len(examples) == 2 and not isinstance(examples[0], EncodedExample):
        return np.asarray(examples[0]), np.asarray(examples[1])
    return stack(list(examples))


@torch.no_grad()
def logits_for(model, examples, batch_size=64):
    ids, mask = _as_arrays(examples)
    model.eval()
    out = [
        model(torch.from_numpy(ids[i : i + batch_size]), torch.from_numpy(mask[i : i + batch_size])).double().numpy()
        for i in range(0, len(ids), batch_size)
    ]
    return np.concatenate(out) if out else np.zeros((0, 2))


def predict(model, examples, batch_size=64):
    """``[(label, probability of fake), ...]``; ties in the logits go to class index 0."""
    logits = logits_for(model, examples, batch_size)
    probs = softmax(logits)
    idx = np.argmax(logits, axis=1)
    return [(LABELS[int(i)], float(p[LABELS.index("fake")])) for i, p in zip(idx, probs)]


def save_model(model: FakeNewsModel, path):
    """Write encoder and head weights plus the variant and encoder configs to one safetensors file."""
    state = {k: v.detach().contiguous() for k, v in model.state_dict().items() if not k.endswith("position_ids")}
    metadata = {
        "format": CHECKPOINT_FORMAT,
        "variant": json.dumps(model.spec.to_dict(), sort_keys=True),
        "encoder_config": json.dumps(asdict(model.encoder.config), sort_keys=True),
    }
    save_file(state, str(path), metadata=metadata)
    return Path(path)


def load_model(path):
    with safe_open(str(path), framework="pt") as fh:
        metadata = fh.metadata() or {}
    if metadata.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    spec = VariantSpec(**json.loads(metadata["variant"]))
    encoder = Encoder(EncoderConfig(**json.loads(metadata["encoder_config"])))
    model = build_variant(spec, encoder, seed=0)
    state = load_file(str(path))
    missing, unexpected = model.load_state_dict(state, strict=False)
    missing = [k for k in missing if not k.endswith("position_ids")]
    if missing or unexpected:
        raise ValueError(f"{path}: missing {missing}, unexpected {unexpected}")
    return model.eval()
