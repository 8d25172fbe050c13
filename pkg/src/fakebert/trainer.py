"""Mini-batch fine-tuning, the cross-entropy loss and test-set evaluation."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .corpus import LABELS, DatasetSplit
from .heads import predict, save_model
from .metrics import evaluation_report
from .textprep import encode_batch

logger = logging.getLogger(__name__)

EPS = 1e-12
WEIGHT_DECAY = 0.01
WARMUP_FRACTION = 0.1
MAX_GRAD_NORM = 1.0


class NonFiniteLossError(RuntimeError):
    def __init__(self, step, batch_ids):
        self.step = step
        self.batch_ids = list(batch_ids)
        super().__init__(f"non-finite loss at step {step}; batch ids: {', '.join(map(str, self.batch_ids))}")


def cross_entropy(y, p, eps=EPS):
    """Binary cross-entropy of label ``y`` (0/1) against ``p = P(class 1)``."""
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1 - eps)
    y = np.asarray(y, dtype=np.float64)
    loss = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    return float(loss) if loss.ndim == 0 else loss


@dataclass
class TrainState:
    epoch: int = 0
    global_step: int = 0
    epoch_losses: list = field(default_factory=list)
    epoch_accuracy: list = field(default_factory=list)
    rng_seed: int = 0
    best_checkpoint: str | None = None

    @property
    def final_loss(self):
        """Mean loss over the last training epoch (the reported train loss)."""
        return self.epoch_losses[-1] if self.epoch_losses else None

    def to_dict(self):
        return {
            "epoch": self.epoch,
            "global_step": self.global_step,
            "epoch_losses": self.epoch_losses,
            "epoch_accuracy": self.epoch_accuracy,
            "rng_seed": self.rng_seed,
            "best_checkpoint": self.best_checkpoint,
        }


def _param_groups(model, weight_decay):
    decay, no_decay = [], []
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        (no_decay if p.dim() < 2 or "LayerNorm" in name else decay).append(p)
    return [
        {"params": decay, "weight_decay": weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]


def linear_warmup(total_steps, warmup_fraction=WARMUP_FRACTION):
    """Learning-rate multiplier: linear ramp over the warmup steps, then linear decay to 0."""
    warmup = int(total_steps * warmup_fraction)

    def factor(step):
        if step < warmup:
            return (step + 1) / (warmup + 1)
        return max(0.0, (total_steps - step) / max(1, total_steps - warmup))

    return factor


def _records(data):
    return list(data.train) if isinstance(data, DatasetSplit) else list(data)


def train(model, data, spec, tokenizer, batch_size=32, seed=0, output_dir=None):
    """Fine-tune ``model`` for ``spec.epochs`` epochs on the training records.

    ``data`` is a :class:`DatasetSplit` (its train half is used) or a list of
    labeled records. With ``output_dir`` set, a checkpoint is written after
    every epoch along with a JSON-lines training log.
    """
    records = _records(data)
    if not records:
        raise ValueError("training set is empty")
    ids, mask = encode_batch([r.text for r in records], tokenizer)
    targets = np.array([LABELS.index(r.label) for r in records], dtype=np.int64)
    n = len(records)
    steps_per_epoch = math.ceil(n / batch_size)
    state = TrainState(rng_seed=seed)
    if spec.epochs == 0:
        return state

    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(_param_groups(model, WEIGHT_DECAY), lr=spec.learning_rate)
    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, linear_warmup(spec.epochs * steps_per_epoch))

    out = Path(output_dir) if output_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "train_log.jsonl"
        log_path.write_text("")
    best = math.inf

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        gen = torch.Generator().manual_seed(seed)
        for epoch in range(1, spec.epochs + 1):
            started = time.perf_counter()
            model.train()
            order = torch.randperm(n, generator=gen).numpy()
            loss_sum, correct = 0.0, 0
            for start in range(0, n, batch_size):
                batch = order[start : start + batch_size]
                logits = model(torch.from_numpy(ids[batch]), torch.from_numpy(mask[batch]))
                y = torch.from_numpy(targets[batch])
                losses = F.cross_entropy(logits, y, reduction="none")
                if not torch.isfinite(losses).all():
                    raise NonFiniteLossError(state.global_step, [records[i].id for i in batch])
                loss = losses.mean()
                optimizer.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(params, MAX_GRAD_NORM)
                optimizer.step()
                scheduler.step()
                state.global_step += 1
                loss_sum += float(losses.detach().sum())
                correct += int((logits.detach().argmax(dim=1) == y).sum())

            state.epoch = epoch
            state.epoch_losses.append(loss_sum / n)
            state.epoch_accuracy.append(correct / n)
            logger.info("epoch %d/%d  loss %.4f", epoch, spec.epochs, state.epoch_losses[-1])
            if out:
                ckpt = out / f"epoch{epoch:02d}.safetensors"
                save_model(model, ckpt)
                if state.epoch_losses[-1] < best:
                    best = state.epoch_losses[-1]
                    state.best_checkpoint = str(ckpt)
                entry = {"epoch": epoch, "mean_loss": state.epoch_losses[-1], "wall_time": time.perf_counter() - started}
                with log_path.open("a") as fh:
                    fh.write(json.dumps(entry) + "\n")
    model.eval()
    return state


def classify_texts(model, texts, tokenizer=None, batch_size=64):
    """Predicted labels and fake-class probabilities for raw texts.

    Works with a :class:`~fakebert.heads.FakeNewsModel` (needs ``tokenizer``)
    or any fitted object exposing ``predict_proba`` with columns ``(real, fake)``.
    """
    texts = list(texts)
    if not texts:
        return [], np.zeros(0)
    if hasattr(model, "predict_proba"):
        proba = np.asarray(model.predict_proba(texts), dtype=np.float64)
        labels = [LABELS[int(i)] for i in np.argmax(proba, axis=1)]
        return labels, proba[:, LABELS.index("fake")]
    ids, mask = encode_batch(texts, tokenizer)
    preds = predict(model, (ids, mask), batch_size)
    return [lab for lab, _ in preds], np.array([p for _, p in preds])


def evaluate(model, test, tokenizer=None, train_loss=None, batch_size=64):
    """Metrics report for ``model`` on labeled test records."""
    records = list(test.test) if isinstance(test, DatasetSplit) else list(test)
    if not records:
        raise ValueError("test set is empty")
    labels, scores = classify_texts(model, [r.text for r in records], tokenizer, batch_size)
    return evaluation_report(labels, [r.label for r in records], scores, train_loss)
