"""Command line entry point: ``fakebert <subcommand> --config PATH``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import experiment as ex
from .heads import load_model

log = logging.getLogger("fakebert")


def load_config(args):
    path = Path(args.config)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ex.ConfigError(f"cannot read config {path}: {exc}") from exc
    if "config" in raw and "config_hash" in raw:
        raw = raw["config"]
    if args.tiny:
        raw.setdefault("encoder", {})["tiny"] = True
    if args.seed is not None:
        raw.setdefault("training", {})["seed"] = args.seed
    if args.output is not None:
        raw["output_dir"] = str(Path(args.output).resolve())
    return ex.ExperimentConfig.from_dict(raw, base_dir=path.parent)


def _variants(cfg, args):
    specs = cfg.variant_specs()
    if getattr(args, "variant", None):
        wanted = set(args.variant)
        specs = [s for s in specs if s.variant_id in wanted]
        if not specs:
            raise ex.ConfigError(f"variants {sorted(wanted)} are not in the config")
    return specs


def cmd_run(cfg, args):
    result = ex.run_experiment(cfg, overwrite=args.overwrite)
    print(result.table.to_text(), end="")
    if result.ablation is not None:
        print(f"ablation: {result.ablation.status}; removed {result.ablation.removed_words}")
    print(f"artifacts in {result.output_dir}")


def cmd_prepare(cfg, args):
    cfg.validate()
    out = ex.prepare_output_dir(cfg.output_dir, args.overwrite)
    split, info = ex.load_split(cfg)
    tok = ex.load_tokenizer(cfg, out, split)
    info = ex.write_prepare(cfg, out, split, info, tok)
    print(f"train {info['train_size']}  test {info['test_size']}  labels {info['label_counts']}")
    print(f"{info['over_max_len']} texts longer than {info['max_len']} tokens")


def _workspace(cfg):
    cfg.validate()
    out = Path(cfg.output_dir)
    if not (out / "prepare.json").exists():
        raise ex.ConfigError(f"{out} has no prepared data; run 'fakebert prepare' first")
    split, _ = ex.load_split(cfg)
    return out, split, ex.load_tokenizer(cfg, out, split)


def cmd_train(cfg, args):
    out, split, tok = _workspace(cfg)
    backbone = ex.encoder_path(cfg, out, tok)
    for spec in _variants(cfg, args):
        _, state = ex.train_variant(cfg, out, spec, split, tok, backbone)
        print(f"variant {spec.variant_id}: final-epoch loss {state.final_loss}")


def cmd_evaluate(cfg, args):
    out, split, tok = _workspace(cfg)
    for spec in _variants(cfg, args):
        model, loss = ex.load_variant(out, spec.variant_id)
        report = ex.evaluate_variant(cfg, out, model, model.spec, split, tok, loss)
        print(f"variant {spec.variant_id}: {report.to_json()}")


def _chosen_model(cfg, args, out):
    if args.checkpoint:
        return load_model(args.checkpoint), None
    vid = args.variant[0] if args.variant else _best_variant(out)
    return ex.load_variant(out, vid)


def _best_variant(out):
    reports = sorted(Path(out).glob("variant_*/report.json"))
    if not reports:
        raise ex.ConfigError("no evaluated variants found; pass --variant or --checkpoint")
    table = ex.compare_reports(reports)
    return table.best["Test acc"]


def cmd_keywords(cfg, args):
    out, split, tok = _workspace(cfg)
    model, _ = _chosen_model(cfg, args, out)
    report = ex.run_keywords(cfg, out, model, split, tok)
    for word, count in report.ranked[: cfg.top_k]:
        print(f"{word}\t{count}")


def cmd_ablate(cfg, args):
    out, split, tok = _workspace(cfg)
    model, loss = _chosen_model(cfg, args, out)
    result = ex.run_ablation(cfg, out, model, split, tok, loss)
    print(json.dumps({"status": result.status, "removed": result.removed_words, "deltas": result.deltas}, indent=2))


def cmd_compare(args):
    paths = args.reports
    if not paths and args.output:
        paths = sorted(Path(args.output).glob("variant_*/report.json"))
    table = ex.compare_reports(paths)
    print(table.to_text(), end="")
    if args.csv:
        table.to_csv(args.csv)


def build_parser():
    parser = argparse.ArgumentParser(prog="fakebert", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_variant=True):
        p.add_argument("--config", required=True, help="YAML experiment config (or a run manifest)")
        p.add_argument("--output", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="training seed (overrides the config)")
        p.add_argument("--tiny", action="store_true", help="use a small random encoder")
        p.add_argument("--overwrite", action="store_true", help="replace a populated output directory")
        if with_variant:
            p.add_argument("--variant", type=int, action="append", help="restrict to this variant (repeatable)")
        return p

    common(sub.add_parser("run", help="full pipeline"), with_variant=False).set_defaults(fn=cmd_run)
    common(sub.add_parser("prepare", help="split the data and report token lengths"), False).set_defaults(
        fn=cmd_prepare
    )
    common(sub.add_parser("train", help="train variants")).set_defaults(fn=cmd_train)
    common(sub.add_parser("evaluate", help="evaluate trained variants")).set_defaults(fn=cmd_evaluate)
    for name, fn in (("keywords", cmd_keywords), ("ablate", cmd_ablate)):
        p = common(sub.add_parser(name, help=f"{name} on the best (or chosen) variant"))
        p.add_argument("--checkpoint", help="model checkpoint to use instead of a trained variant")
        p.set_defaults(fn=fn)
    p = sub.add_parser("compare", help="Comparison table of report files")
    p.add_argument("reports", nargs="*", help="report.json files")
    p.add_argument("--output", help="run directory to collect reports from")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(fn=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "compare":
            cmd_compare(args)
        else:
            args.fn(load_config(args), args)
    except ex.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ex.ConfigError, ex.ReportFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
