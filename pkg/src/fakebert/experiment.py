"""Config-driven end-to-end runs: split, train, evaluate, compare, ablate."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import platform
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .corpus import label_counts, load_csv, merge_and_split, merge_sources
from .encoder import EncoderConfig, load_pretrained, save_encoder, tiny_encoder
from .estimator import make_tokenizer
from .heads import VariantSpec, build_variant, load_model, save_model
from .keywords import STOPWORDS_VERSION, ablation_run, collect_fake_predicted, word_frequencies
from .metrics import EvaluationReport
from .textprep import TokenizerSpec, length_histogram
from .trainer import evaluate, train

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ("Test acc", "Train loss", "ROC AUC", "F1 score")
# column -> True when larger is better
HIGHER_IS_BETTER = {"Test acc": True, "Train loss": False, "ROC AUC": True, "F1 score": True}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        super().__init__(f"stage {stage!r} failed: {cause}")


class ReportFormatError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    train_path: str | None = None
    test_path: str | None = None
    ratio: float = 0.9
    split_seed: int = 42
    vocab_file: str | None = None
    max_len: int = 512
    lowercase: bool = True
    vocab_size: int = 1000
    checkpoint: str | None = None
    tiny: bool = False
    hidden_size: int = 32
    num_layers: int = 2
    num_heads: int = 2
    variants: list = field(default_factory=lambda: [{"id": i} for i in range(1, 6)])
    batch_size: int = 32
    seed: int = 0
    output_dir: str = "runs/experiment"
    ablation: bool = True
    top_k: int = 10
    keyword_scope: str = "test"

    @classmethod
    def from_dict(cls, d, base_dir=None):
        """Build from the nested layout of the YAML config (see :meth:`to_dict`)."""
        d = dict(d or {})
        if "config" in d and "config_hash" in d:  # a run manifest
            d = d["config"]
        unknown = set(d) - {"data", "tokenizer", "encoder", "variants", "training", "output_dir", "ablation"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        data, tok, enc = d.get("data", {}), d.get("tokenizer", {}), d.get("encoder", {})
        training, abl = d.get("training", {}), d.get("ablation", {})

        def path(value):
            if value is None or base_dir is None or Path(value).is_absolute():
                return value
            return os.path.normpath(Path(base_dir) / value)

        cfg = cls()
        cfg.train_path = path(data.get("train", cfg.train_path))
        cfg.test_path = path(data.get("test", cfg.test_path))
        cfg.ratio = float(data.get("ratio", cfg.ratio))
        cfg.split_seed = int(data.get("split_seed", cfg.split_seed))
        cfg.vocab_file = path(tok.get("vocab_file", cfg.vocab_file))
        cfg.lowercase = bool(tok.get("lowercase", cfg.lowercase))
        cfg.vocab_size = int(tok.get("vocab_size", cfg.vocab_size))
        cfg.checkpoint = path(enc.get("checkpoint", cfg.checkpoint))
        cfg.tiny = bool(enc.get("tiny", cfg.tiny))
        cfg.max_len = int(tok.get("max_len", 64 if cfg.tiny else cfg.max_len))
        cfg.hidden_size = int(enc.get("hidden_size", cfg.hidden_size))
        cfg.num_layers = int(enc.get("num_layers", cfg.num_layers))
        cfg.num_heads = int(enc.get("num_heads", cfg.num_heads))
        if "variants" in d:
            cfg.variants = [{"id": int(v)} if isinstance(v, int) else dict(v) for v in d["variants"]]
        cfg.batch_size = int(training.get("batch_size", cfg.batch_size))
        cfg.seed = int(training.get("seed", cfg.seed))
        cfg.output_dir = path(d.get("output_dir", cfg.output_dir))
        cfg.ablation = bool(abl.get("enabled", cfg.ablation))
        cfg.top_k = int(abl.get("top_k", cfg.top_k))
        cfg.keyword_scope = abl.get("scope", cfg.keyword_scope)
        return cfg

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, base_dir=path.parent)

    def to_dict(self):
        return {
            "data": {"train": self.train_path, "test": self.test_path, "ratio": self.ratio, "split_seed": self.split_seed},
            "tokenizer": {
                "vocab_file": self.vocab_file,
                "max_len": self.max_len,
                "lowercase": self.lowercase,
                "vocab_size": self.vocab_size,
            },
            "encoder": {
                "checkpoint": self.checkpoint,
                "tiny": self.tiny,
                "hidden_size": self.hidden_size,
                "num_layers": self.num_layers,
                "num_heads": self.num_heads,
            },
            "variants": [dict(v) for v in self.variants],
            "training": {"batch_size": self.batch_size, "seed": self.seed},
            "output_dir": self.output_dir,
            "ablation": {"enabled": self.ablation, "top_k": self.top_k, "scope": self.keyword_scope},
        }

    def config_hash(self):
        semantic = self.to_dict()
        semantic.pop("output_dir")
        return hashlib.sha256(json.dumps(semantic, sort_keys=True).encode()).hexdigest()

    def variant_specs(self):
        specs = []
        for v in self.variants:
            v = dict(v)
            vid = v.pop("id")
            specs.append(VariantSpec.published(vid, **v))
        return specs

    def validate(self):
        if not self.train_path:
            raise ConfigError("data.train is required")
        for label, p in (("data.train", self.train_path), ("data.test", self.test_path),
                         ("tokenizer.vocab_file", self.vocab_file), ("encoder.checkpoint", self.checkpoint)):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"{label} path does not exist: {p}")
        if not self.tiny and self.checkpoint is None:
            raise ConfigError("encoder.checkpoint is required unless encoder.tiny is set")
        if not 0 < self.ratio < 1:
            raise ConfigError(f"data.ratio must lie in (0, 1), got {self.ratio}")
        if self.keyword_scope not in ("test", "train", "all"):
            raise ConfigError(f"ablation.scope must be test, train or all, got {self.keyword_scope!r}")
        if self.top_k < 1:
            raise ConfigError("ablation.top_k must be at least 1")
        try:
            specs = self.variant_specs()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid variant settings: {exc}") from exc
        if not specs:
            raise ConfigError("no variants requested")
        return self


def _stage(name):
    def wrap(fn):
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _header(path):
    with open(path, newline="", encoding="utf-8-sig") as fh:
        return [c.strip().lower() for c in next(csv.reader(fh), [])]


def prepare_output_dir(out, overwrite=False):
    out = Path(out)
    if out.exists() and any(out.iterdir()):
        if not overwrite:
            raise ConfigError(f"output directory {out} is not empty; pass --overwrite to replace it")
        if not (out / "manifest.json").exists() and not (out / "prepare.json").exists():
            raise ConfigError(f"refusing to clear {out}: it does not look like a previous run")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


@_stage("prepare")
def load_split(cfg):
    sources = {"train": load_csv(cfg.train_path, has_labels="label" in _header(cfg.train_path))}
    if cfg.test_path:
        sources["test"] = load_csv(cfg.test_path, has_labels="label" in _header(cfg.test_path))
    merged = merge_sources(sources)
    labeled = [r for r in merged if r.label is not None]
    split = merge_and_split(labeled, cfg.ratio, cfg.split_seed)
    info = {
        "source_sizes": {k: len(v) for k, v in sources.items()},
        "unlabeled_excluded": len(merged) - len(labeled),
        "label_counts": label_counts(labeled),
        "train_size": len(split.train),
        "test_size": len(split.test),
        "ratio": cfg.ratio,
        "split_seed": cfg.split_seed,
    }
    return split, info


@_stage("tokenizer")
def load_tokenizer(cfg, out, split=None):
    """The run's tokenizer: ``vocab.txt`` in the output dir, else the configured
    vocabulary, else (tiny mode) one built from the training texts."""
    saved = Path(out) / "vocab.txt"
    if saved.exists():
        return TokenizerSpec.from_vocab_file(saved, max_len=cfg.max_len, lowercase=cfg.lowercase)
    vocab_file = cfg.vocab_file
    if vocab_file is None and cfg.checkpoint and (Path(cfg.checkpoint) / "vocab.txt").exists():
        vocab_file = Path(cfg.checkpoint) / "vocab.txt"
    texts = [r.text for r in split.train] if split is not None else None
    tok = make_tokenizer(texts, vocab_file, cfg.vocab_size, cfg.max_len, cfg.lowercase)
    tok.save_vocab(saved)
    return tok


def write_prepare(cfg, out, split, info, tokenizer):
    hist = length_histogram(list(split.train) + list(split.test), tokenizer)
    info = dict(info)
    info["length_histogram"] = {str(k): v for k, v in hist.items()}
    info["over_max_len"] = sum(v for k, v in hist.items() if k > tokenizer.max_len)
    info["max_len"] = tokenizer.max_len
    _write_json(Path(out) / "prepare.json", info)
    _write_json(Path(out) / "split.json", {"train": [r.id for r in split.train], "test": [r.id for r in split.test]})
    return info


@_stage("encoder")
def encoder_path(cfg, out, tokenizer):
    """Checkpoint every variant starts from; tiny mode writes a seeded random encoder once."""
    if not cfg.tiny:
        return Path(cfg.checkpoint)
    path = Path(out) / "encoder.safetensors"
    if not path.exists():
        config = EncoderConfig.tiny(
            vocab_size=tokenizer.vocab_size,
            hidden_size=cfg.hidden_size,
            num_layers=cfg.num_layers,
            num_heads=cfg.num_heads,
            max_positions=max(cfg.max_len, 64),
        )
        save_encoder(tiny_encoder(config, seed=cfg.seed), path)
    return path


def variant_dir(out, variant_id):
    return Path(out) / f"variant_{variant_id}"


def train_variant(cfg, out, spec, split, tokenizer, backbone):
    vid = spec.variant_id
    stage = f"train[variant {vid}]"
    vdir = variant_dir(out, vid)
    try:
        model = build_variant(spec, load_pretrained(backbone), seed=cfg.seed + vid)
        started = time.time()
        state = train(model, split, spec, tokenizer, cfg.batch_size, cfg.seed + vid, vdir)
        save_model(model, vdir / "model.safetensors")
        _write_json(vdir / "train_state.json", {**state.to_dict(), "best_checkpoint": _rel(state.best_checkpoint, out)})
        _write_json(vdir / "run_info.json", {"started": started, "wall_time": time.time() - started, "host": platform.node()})
    except Exception as exc:
        raise StageError(stage, exc) from exc
    return model, state


def _rel(path, out):
    return None if path is None else str(Path(path).relative_to(out))


def evaluate_variant(cfg, out, model, spec, split, tokenizer, train_loss):
    try:
        report = evaluate(model, split.test, tokenizer, train_loss, cfg.batch_size)
        doc = {"variant_id": spec.variant_id, "spec": spec.to_dict(), "metrics": report.to_dict()}
        _write_json(variant_dir(out, spec.variant_id) / "report.json", doc)
    except Exception as exc:
        raise StageError(f"evaluate[variant {spec.variant_id}]", exc) from exc
    return report


def load_variant(out, variant_id):
    vdir = variant_dir(out, variant_id)
    model = load_model(vdir / "model.safetensors")
    state_path = vdir / "train_state.json"
    loss = None
    if state_path.exists():
        losses = json.loads(state_path.read_text())["epoch_losses"]
        loss = losses[-1] if losses else None
    return model, loss


def keyword_texts(cfg, split):
    return {"test": list(split.test), "train": list(split.train), "all": list(split.train) + list(split.test)}[
        cfg.keyword_scope
    ]


@_stage("keywords")
def run_keywords(cfg, out, model, split, tokenizer):
    kdir = Path(out) / "keywords"
    kdir.mkdir(exist_ok=True)
    report = word_frequencies(collect_fake_predicted(model, keyword_texts(cfg, split), tokenizer))
    report.write_json(kdir / "keywords.json")
    report.write_csv(kdir / "keywords.csv")
    report.write_csv(kdir / "keywords_chart.csv", limit=cfg.top_k)
    return report


@_stage("ablation")
def run_ablation(cfg, out, model, split, tokenizer, train_loss=None):
    adir = Path(out) / "ablation"
    adir.mkdir(exist_ok=True)
    result = ablation_run(model, split.test, cfg.top_k, tokenizer, train_loss=train_loss)
    doc = result.to_dict()
    doc["stopwords_version"] = STOPWORDS_VERSION
    _write_json(adir / "ablation.json", doc)
    if result.keywords is not None:
        result.keywords.write_json(adir / "keywords.json")
        result.keywords.write_csv(adir / "keywords.csv")
        result.keywords.write_csv(adir / "keywords_chart.csv", limit=cfg.top_k)
    return result


@dataclass
class ComparisonTable:
    rows: list  # (variant_id, [acc, loss, auc, f1])
    best: dict  # column -> variant_id

    def to_csv(self, path=None):
        lines = [",".join(("Model",) + TABLE_COLUMNS)]
        for vid, values in self.rows:
            lines.append(",".join([f"Model {vid}"] + ["" if v is None else f"{v:.4f}" for v in values]))
        text = "\n".join(lines) + "\n"
        if path:
            Path(path).write_text(text)
        return text

    def to_text(self):
        """Aligned table; the best value in each column carries a ``*``."""
        header = f"{'Model':<10}" + "".join(f"{c:>12}" for c in TABLE_COLUMNS)
        lines = [header, "-" * len(header)]
        for vid, values in self.rows:
            cells = []
            for col, v in zip(TABLE_COLUMNS, values):
                mark = "*" if self.best.get(col) == vid else " "
                cells.append(f"{'-' if v is None else f'{v:.4f}'}{mark}".rjust(12))
            lines.append(f"{'Model ' + str(vid):<10}" + "".join(cells))
        return "\n".join(lines) + "\n"


def _read_report(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        return int(doc["variant_id"]), EvaluationReport.from_dict(doc["metrics"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ReportFormatError(f"malformed report {path}: {exc}") from exc


def compare_reports(paths):
    """Comparison table of saved reports, ordered by variant id."""
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one report")
    rows = sorted((_read_report(p) for p in paths), key=lambda r: r[0])
    rows = [(vid, rep.table_row()) for vid, rep in rows]
    best = {}
    for j, col in enumerate(TABLE_COLUMNS):
        candidates = [(vid, vals[j]) for vid, vals in rows if vals[j] is not None]
        if not candidates:
            continue
        sign = -1 if HIGHER_IS_BETTER[col] else 1
        # min() keeps the first of equal keys, so ties go to the lowest variant id
        best[col] = min(candidates, key=lambda c: sign * c[1])[0]
    return ComparisonTable(rows=rows, best=best)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(cfg, out):
    out = Path(out)
    artifacts = sorted(
        str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "manifest.json"
    )
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seeds": {
            "split_seed": cfg.split_seed,
            "seed": cfg.seed,
            "variants": {str(s.variant_id): cfg.seed + s.variant_id for s in cfg.variant_specs()},
        },
        "artifacts": [{"path": a, "sha256": _sha256(out / a)} for a in artifacts],
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


@dataclass
class ExperimentResult:
    output_dir: Path
    reports: dict
    table: ComparisonTable
    ablation: object = None


def run_experiment(cfg: ExperimentConfig, overwrite=False):
    """Run the whole pipeline and write every artifact under ``cfg.output_dir``.

    A failing stage raises :class:`StageError` naming it; artifacts written
    before the failure are left in place.
    """
    try:
        cfg.validate()
    except ConfigError as exc:
        raise StageError("validate", exc) from exc
    out = prepare_output_dir(cfg.output_dir, overwrite)
    _write_json(out / "config.json", cfg.to_dict())
    split, info = load_split(cfg)
    tokenizer = load_tokenizer(cfg, out, split)
    write_prepare(cfg, out, split, info, tokenizer)
    backbone = encoder_path(cfg, out, tokenizer)

    reports, models = {}, {}
    for spec in cfg.variant_specs():
        model, state = train_variant(cfg, out, spec, split, tokenizer, backbone)
        reports[spec.variant_id] = evaluate_variant(cfg, out, model, spec, split, tokenizer, state.final_loss)
        models[spec.variant_id] = (model, state.final_loss)
        logger.info("variant %d: accuracy %.4f", spec.variant_id, reports[spec.variant_id].accuracy)

    try:
        table = compare_reports(variant_dir(out, vid) / "report.json" for vid in sorted(reports))
        table.to_csv(out / "comparison.csv")
        (out / "comparison.txt").write_text(table.to_text())
    except Exception as exc:
        raise StageError("compare", exc) from exc

    ablation = None
    if cfg.ablation:
        best_vid = max(sorted(reports), key=lambda vid: (reports[vid].accuracy, -vid))
        model, loss = models[best_vid]
        run_keywords(cfg, out, model, split, tokenizer)
        ablation = run_ablation(cfg, out, model, split, tokenizer, loss)
        _write_json(out / "ablation" / "source.json", {"variant_id": best_vid})
    write_manifest(cfg, out)
    return ExperimentResult(output_dir=out, reports=reports, table=table, ablation=ablation)
