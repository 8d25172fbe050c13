"""BERT backbone: published-checkpoint loading, tiny random encoders, freezing."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import torch
from safetensors import SafetensorError
from safetensors.torch import load_file, save_file
from torch import nn
from transformers import BertConfig, BertModel


class CheckpointError(RuntimeError):
    pass


class MissingTensorError(CheckpointError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"checkpoint is missing tensor {name!r}")


class ShapeMismatchError(CheckpointError):
    def __init__(self, name, expected, actual):
        self.name = name
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(f"tensor {name!r}: expected shape {self.expected}, got {self.actual}")


class InputRangeError(ValueError):
    def __init__(self, row, position, token_id, vocab_size):
        self.row = row
        self.position = position
        super().__init__(
            f"token id {token_id} at example {row}, position {position} is outside vocabulary of size {vocab_size}"
        )


@dataclass(frozen=True)
class EncoderConfig:
    hidden_size: int = 768
    num_layers: int = 12
    num_heads: int = 12
    vocab_size: int = 30522
    max_positions: int = 512
    intermediate_size: int = 3072
    dropout: float = 0.1
    tiny_mode: bool = False

    def __post_init__(self):
        if self.hidden_size % self.num_heads:
            raise ValueError(f"hidden_size {self.hidden_size} is not divisible by num_heads {self.num_heads}")

    @classmethod
    def tiny(cls, vocab_size=1000, hidden_size=32, num_layers=2, num_heads=2, max_positions=64):
        return cls(
            hidden_size=hidden_size,
            num_layers=num_layers,
            num_heads=num_heads,
            vocab_size=vocab_size,
            max_positions=max_positions,
            intermediate_size=2 * hidden_size,
            tiny_mode=True,
        )

    @classmethod
    def from_bert_json(cls, cfg):
        return cls(
            hidden_size=cfg["hidden_size"],
            num_layers=cfg["num_hidden_layers"],
            num_heads=cfg["num_attention_heads"],
            vocab_size=cfg["vocab_size"],
            max_positions=cfg["max_position_embeddings"],
            intermediate_size=cfg["intermediate_size"],
            dropout=cfg.get("hidden_dropout_prob", 0.1),
        )

    def to_bert_config(self):
        return BertConfig(
            vocab_size=self.vocab_size,
            hidden_size=self.hidden_size,
            num_hidden_layers=self.num_layers,
            num_attention_heads=self.num_heads,
            intermediate_size=self.intermediate_size,
            max_position_embeddings=self.max_positions,
            hidden_dropout_prob=self.dropout,
            attention_probs_dropout_prob=self.dropout,
        )


class EncoderOutput(NamedTuple):
    sequence_states: torch.Tensor  # (batch, max_len, H)
    pooled_state: torch.Tensor  # (batch, H)


class Encoder(nn.Module):
    """Bidirectional transformer encoder with a pooler over the start token."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.bert = BertModel(config.to_bert_config(), add_pooling_layer=True)

    def forward(self, token_ids, attention_mask):
        token_ids = torch.as_tensor(token_ids, dtype=torch.long)
        attention_mask = torch.as_tensor(attention_mask, dtype=torch.long)
        bad = (token_ids < 0) | (token_ids >= self.config.vocab_size)
        if bad.any():
            row, pos = (int(v) for v in bad.nonzero()[0])
            raise InputRangeError(row, pos, int(token_ids[row, pos]), self.config.vocab_size)
        if token_ids.shape[1] > self.config.max_positions:
            raise ValueError(f"sequence length {token_ids.shape[1]} exceeds max_positions {self.config.max_positions}")
        out = self.bert(input_ids=token_ids, attention_mask=attention_mask)
        return EncoderOutput(out.last_hidden_state, out.pooler_output)


def tiny_encoder(config: EncoderConfig | None = None, seed=0):
    """Random-initialized encoder, reproducible for a given seed."""
    config = config or EncoderConfig.tiny()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        enc = Encoder(config)
    return enc.eval()


def _normalize_key(key):
    for prefix in ("bert.", "model."):
        if key.startswith(prefix):
            key = key[len(prefix):]
    return key.replace("LayerNorm.gamma", "LayerNorm.weight").replace("LayerNorm.beta", "LayerNorm.bias")


def _read_tensors(path):
    path = Path(path)
    try:
        if path.suffix == ".safetensors":
            return load_file(str(path))
        return torch.load(str(path), map_location="cpu", weights_only=True)
    except (SafetensorError, RuntimeError, EOFError, OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc


def _locate(checkpoint_path):
    """Resolve ``(config_json, weights_file)`` for a checkpoint directory or file."""
    path = Path(checkpoint_path)
    if path.is_dir():
        config = path / "config.json"
        for name in ("model.safetensors", "pytorch_model.bin"):
            if (path / name).exists():
                return config, path / name
        raise CheckpointError(f"no weights file found in {path}")
    return path.with_suffix(".json"), path


def load_state_into(encoder: Encoder, tensors):
    """Copy checkpoint tensors into ``encoder`` after checking every name and shape."""
    tensors = {_normalize_key(k): v for k, v in tensors.items()}
    expected = encoder.bert.state_dict()
    for name, target in expected.items():
        if name not in tensors:
            if name.endswith("position_ids"):
                continue
            raise MissingTensorError(name)
        if tuple(tensors[name].shape) != tuple(target.shape):
            raise ShapeMismatchError(name, target.shape, tensors[name].shape)
    with torch.no_grad():
        for name, target in expected.items():
            if name in tensors:
                target.copy_(tensors[name].to(target.dtype))


def load_pretrained(checkpoint_path):
    """Load an encoder from a published checkpoint directory (``config.json`` +
    ``model.safetensors``/``pytorch_model.bin``) or from a ``.safetensors``
    file with a JSON config sidecar, as written by :func:`save_encoder`."""
    config_path, weights_path = _locate(checkpoint_path)
    if not config_path.exists():
        raise CheckpointError(f"missing config file {config_path}")
    try:
        cfg = json.loads(config_path.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt config {config_path}: {exc}") from exc
    config = EncoderConfig(**cfg) if "tiny_mode" in cfg else EncoderConfig.from_bert_json(cfg)
    tensors = _read_tensors(weights_path)
    encoder = Encoder(config)
    load_state_into(encoder, tensors)
    return encoder.eval()


def save_encoder(encoder: Encoder, path):
    """Write ``path`` (safetensors) and its ``.json`` config sidecar."""
    path = Path(path).with_suffix(".safetensors")
    state = {k: v.contiguous() for k, v in encoder.bert.state_dict().items() if not k.endswith("position_ids")}
    save_file(state, str(path))
    path.with_suffix(".json").write_text(json.dumps(asdict(encoder.config), indent=2, sort_keys=True))
    return path


def set_frozen(model, frozen):
    """Exclude (or re-include) the encoder's parameters from gradient updates.

    ``model`` is either a bare :class:`Encoder` or anything with an
    ``encoder`` attribute; only the encoder is touched, so head parameters
    stay trainable.
    """
    encoder = model if isinstance(model, Encoder) else model.encoder
    for p in encoder.parameters():
        p.requires_grad_(not frozen)
    if not isinstance(model, Encoder):
        model.frozen = bool(frozen)


def trainable_parameter_count(model):
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
