"""Command-line interface.

Subcommands: gen, ingest, window, train, eval, score, ablate, study-position,
study-mask, time-overhead. Exit codes: 0 success, 1 configuration error,
2 runtime failure. Set TRACELM_VERBOSE=1 for progress output on stderr (the
only environment variable consulted).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .configfile import load_experiment_config, load_workload_config
from .errors import ConfigError, TraceLmError
from .events import build_vocab, encode_events, event_to_obj, read_jsonl, write_jsonl
from .experiments import (
    ABLATIONS,
    ablation_config,
    load_dataset,
    make_bundle,
    run_ablation,
    run_mask_study,
    run_position_study,
    run_single,
    save_dataset,
    score_quantiles,
    time_overhead,
)
from .ingest import SplitSpec, parse_trace_file
from .nn.base import LSTM, TRANSFORMER, ModelConfig
from .nn.checkpoint import check_vocab_compat, load_checkpoint, save_checkpoint
from .nn.objectives import MaskPlan, eval_lm, eval_mlm, score
from .nn.train import TrainConfig
from .synth import WorkloadConfig, iter_events


def _verbose_log(message: str) -> None:
    if os.environ.get("TRACELM_VERBOSE"):
        print(message, file=sys.stderr, flush=True)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are configuration errors (exit 1)
        raise ConfigError(message)


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v != "")
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v != "")
    except ValueError:
        raise ConfigError(f"expected comma-separated floats, got {text!r}") from None


def _dims(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for item in text.split(","):
        ts, sep, pos = item.partition(":")
        if not sep:
            raise ConfigError(f"expected d_timestamp:d_position pairs, got {item!r}")
        out.append((int(ts), int(pos)))
    return tuple(out)


# -- config merging -------------------------------------------------------------

def _file_section(args, name: str) -> dict[str, str]:
    if getattr(args, "config", None):
        return load_experiment_config(args.config).get(name, {})
    return {}


def _build_model_cfg(args) -> ModelConfig:
    section = _file_section(args, "model")
    values = {
        "kind": getattr(args, "model", None) or section.get("kind", TRANSFORMER),
        "lstm_layers": int(section.get("lstm_layers", 2)),
        "lstm_hidden": int(section.get("lstm_hidden", 96)),
        "tf_layers": int(section.get("tf_layers", 6)),
        "tf_heads": int(section.get("tf_heads", 8)),
        "tf_ff": int(section.get("tf_ff", 128)),
        "tf_width": None if section.get("tf_width", "72") == "auto" else int(section.get("tf_width", 72)),
        "d_position": int(section.get("d_position", 8)),
        "dropout": float(section.get("dropout", 0.0)),
    }
    for flag in ("tf_layers", "tf_heads", "tf_ff", "d_position", "lstm_layers", "lstm_hidden"):
        v = getattr(args, flag, None)
        if v is not None:
            values[flag] = v
    if getattr(args, "tf_width", None) is not None:
        values["tf_width"] = None if args.tf_width == "auto" else int(args.tf_width)
    if getattr(args, "dropout", None) is not None:
        values["dropout"] = args.dropout
    return ModelConfig(**values)


def _build_train_cfg(args, seed: int | None = None) -> TrainConfig:
    section = _file_section(args, "train")
    values = {
        "batch_size": int(section.get("batch_size", 32)),
        "max_epochs": int(section.get("max_epochs", 10)),
        "patience": int(section.get("patience", 3)),
        "lr": float(section.get("lr", 1e-3)),
        "warmup_steps": int(section.get("warmup_steps", 0)),
        "clip_norm": float(section.get("clip_norm", 0.0)),
    }
    for flag, key in (("batch_size", "batch_size"), ("epochs", "max_epochs"),
                      ("patience", "patience"), ("lr", "lr")):
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    if seed is not None:
        values["seed"] = seed
    return TrainConfig(**values)


def _split_spec(args) -> SplitSpec:
    section = _file_section(args, "data")
    return SplitSpec(
        valid_fraction=float(section.get("valid_fraction", 0.25)),
        seed=int(section.get("split_seed", 0)),
    )


def _load_bundle(args):
    return make_bundle(load_dataset(args.train), load_dataset(args.test), _split_spec(args))


# -- subcommands -------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = load_workload_config(args.config) if args.config else WorkloadConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.events is not None:
        overrides["n_events"] = args.events
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)

    text_fh = open(args.text, "w", encoding="utf-8", newline="\n") if args.text else None
    proc_counts: dict[str, int] = {}
    sys_counts: dict[str, int] = {}
    n = 0
    from .ingest import format_line

    prev_ts = None
    with open(args.out, "w", encoding="utf-8", newline="\n") as out_fh:
        for event in iter_events(cfg):
            out_fh.write(json.dumps(event_to_obj(event), separators=(", ", ": ")) + "\n")
            if text_fh is not None:
                text_fh.write(format_line(event, prev_timestamp_ns=prev_ts) + "\n")
                prev_ts = event.timestamp_ns
            if args.stats:
                proc_counts[event.procname] = proc_counts.get(event.procname, 0) + 1
                sys_counts[event.sysname] = sys_counts.get(event.sysname, 0) + 1
            n += 1
    if text_fh is not None:
        text_fh.close()
    _verbose_log(f"wrote {n} events to {args.out}")
    if args.stats:
        order = lambda d: sorted(((k, v / n) for k, v in d.items()), key=lambda kv: (-kv[1], kv[0]))
        print(f"events: {n}")
        print("procname distribution:")
        for name, freq in order(proc_counts):
            print(f"  {name:<12s} {freq:8.4f}")
        print("sysname distribution:")
        for name, freq in order(sys_counts):
            print(f"  {name:<12s} {freq:8.4f}")
    return 0


def cmd_ingest(args) -> int:
    if args.format == "babeltrace":
        events = parse_trace_file(args.infile)
    else:
        events = read_jsonl(args.infile)
    n = write_jsonl(events, args.out)
    _verbose_log(f"ingested {n} events to {args.out}")
    return 0


def cmd_window(args) -> int:
    if args.vocab_from:
        ref = load_dataset(args.vocab_from)
        sys_vocab, proc_vocab = ref.sys_vocab, ref.proc_vocab
    else:
        sys_vocab = build_vocab((e.sysname for e in read_jsonl(args.infile)), args.min_count)
        proc_vocab = build_vocab((e.procname for e in read_jsonl(args.infile)), args.min_count)
    arr = encode_events(read_jsonl(args.infile), sys_vocab, proc_vocab)
    n_win = len(arr) // args.len
    records = arr[: n_win * args.len].reshape(n_win, args.len)
    if n_win and np.any(np.diff(records["timestamp_us"], axis=1) < 0):
        raise ValueError("timestamps decrease inside a window; input is not time-ordered")
    save_dataset(args.out, records, sys_vocab, proc_vocab,
                 meta={"source": str(args.infile), "dropped": int(len(arr) - n_win * args.len)})
    _verbose_log(f"{n_win} windows of {args.len} -> {args.out}")
    return 0


def cmd_train(args) -> int:
    bundle = _load_bundle(args)
    model_cfg = _build_model_cfg(args)
    train_cfg = _build_train_cfg(args, seed=args.seed)
    rep_cfg = ablation_config(args.ablation)
    plan = MaskPlan(p_select=args.p_select, seed=args.seed) if args.objective == "mlm" else None
    out = run_single(bundle, args.objective, model_cfg, rep_cfg, train_cfg, args.seed, plan=plan)
    save_checkpoint(
        args.out, out.model, bundle.sys_vocab, bundle.proc_vocab,
        extra={
            "objective": args.objective,
            "ablation": args.ablation,
            "train_cfg": train_cfg.to_dict(),
            "eval_cross_entropy": out.cross_entropy,
            "eval_accuracy": out.accuracy,
            "history": [dataclasses.asdict(h) for h in out.result.history],
        },
    )
    print(json.dumps({
        "objective": args.objective, "model": model_cfg.kind, "ablation": args.ablation,
        "seed": args.seed, "cross_entropy": out.cross_entropy, "accuracy": out.accuracy,
        "epochs": len(out.result.history), "checkpoint": str(args.out),
    }))
    return 0


def cmd_eval(args) -> int:
    model, sys_vocab, proc_vocab, meta = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    check_vocab_compat(meta, ds.sys_vocab, ds.proc_vocab)
    if args.objective == "mlm":
        ce, acc = eval_mlm(model, ds.records, MaskPlan(p_select=args.p_select, seed=0))
    else:
        ce, acc = eval_lm(model, ds.records)
    print(json.dumps({"objective": args.objective, "cross_entropy": ce, "accuracy": acc,
                      "n_sequences": len(ds)}))
    return 0


def cmd_score(args) -> int:
    model, sys_vocab, proc_vocab, meta = load_checkpoint(args.checkpoint)
    if str(args.infile).endswith(".npz"):
        ds = load_dataset(args.infile)
        check_vocab_compat(meta, ds.sys_vocab, ds.proc_vocab)
        records = ds.records
    else:
        arr = encode_events(read_jsonl(args.infile), sys_vocab, proc_vocab)
        n_win = len(arr) // args.window_len
        records = arr[: n_win * args.window_len].reshape(n_win, args.window_len)
    if len(records) == 0:
        return 0
    values = score(model, records)
    for i, v in enumerate(values):
        print(f"{i}\t{v:.6f}")
    for key, v in score_quantiles(values).items():
        print(f"# {key} = {v:.6f}")
    return 0


def cmd_ablate(args) -> int:
    bundle = _load_bundle(args)
    model_cfg = _build_model_cfg(args)
    report = run_ablation(
        bundle, args.objective, model_cfg.kind, args.ablations.split(","), args.seeds,
        model_cfg, _build_train_cfg(args),
        plan=MaskPlan(p_select=args.p_select) if args.objective == "mlm" else None,
        log=_verbose_log,
    )
    report.save(args.out, f"ablation_{args.objective}_{model_cfg.kind}")
    print(report.to_text())
    return 2 if report.any_failed else 0


def cmd_study_position(args) -> int:
    bundle = _load_bundle(args)
    report = run_position_study(
        bundle, _dims(args.dims), args.seeds,
        _build_model_cfg(args), _build_train_cfg(args), log=_verbose_log,
    )
    report.save(args.out, "position_study")
    print(report.to_text())
    return 0


def cmd_study_mask(args) -> int:
    bundle = _load_bundle(args)
    report = run_mask_study(
        bundle, args.p_values, args.seeds,
        _build_model_cfg(args), _build_train_cfg(args), log=_verbose_log,
    )
    report.save(args.out, "mask_study")
    print(report.to_text())
    return 0


def cmd_time_overhead(args) -> int:
    bundle = _load_bundle(args)
    report = time_overhead(
        bundle, _build_model_cfg(args), _build_train_cfg(args),
        ablations=tuple(args.ablations.split(",")), epochs=args.epochs or 7,
        seed=args.seed, log=_verbose_log,
    )
    report.save(args.out, "time_overhead")
    print(report.to_text())
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="tracelm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic trace")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--events", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--text", default=None, help="also write Babeltrace-style text")
    p.add_argument("--config", default=None, help="workload config file")
    p.add_argument("--stats", action="store_true", help="print distribution stats")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("ingest", help="convert a trace to canonical JSONL")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=("babeltrace", "jsonl"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("window", help="encode + window a JSONL trace into a dataset")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--len", type=int, default=256)
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-from", dest="vocab_from", default=None,
                   help="reuse vocabularies of an existing dataset (e.g. the train set)")
    p.add_argument("--min-count", dest="min_count", type=int, default=1)
    p.set_defaults(func=cmd_window)

    def add_data_args(p):
        p.add_argument("--train", required=True)
        p.add_argument("--test", required=True)
        p.add_argument("--config", default=None, help="experiment config file")

    def add_model_args(p):
        p.add_argument("--model", choices=(LSTM, TRANSFORMER), default=None)
        p.add_argument("--tf-layers", dest="tf_layers", type=int, default=None)
        p.add_argument("--tf-heads", dest="tf_heads", type=int, default=None)
        p.add_argument("--tf-ff", dest="tf_ff", type=int, default=None)
        p.add_argument("--tf-width", dest="tf_width", default=None)
        p.add_argument("--d-position", dest="d_position", type=int, default=None)
        p.add_argument("--lstm-layers", dest="lstm_layers", type=int, default=None)
        p.add_argument("--lstm-hidden", dest="lstm_hidden", type=int, default=None)
        p.add_argument("--dropout", type=float, default=None)

    def add_train_args(p):
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--patience", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)

    p = sub.add_parser("train", help="train one model and save a checkpoint")
    add_data_args(p)
    add_model_args(p)
    add_train_args(p)
    p.add_argument("--objective", choices=("lm", "mlm"), default="lm")
    p.add_argument("--ablation", choices=ABLATIONS, default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p-select", dest="p_select", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--objective", choices=("lm", "mlm"), default="lm")
    p.add_argument("--p-select", dest="p_select", type=float, default=0.25)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="per-sequence log-likelihood of a trace")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="infile", required=True, help="trace .jsonl or dataset .npz")
    p.add_argument("--window-len", dest="window_len", type=int, default=256)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("ablate", help="run the ablation grid")
    add_data_args(p)
    add_model_args(p)
    add_train_args(p)
    p.add_argument("--objective", choices=("lm", "mlm"), default="lm")
    p.add_argument("--ablations", default=",".join(ABLATIONS))
    p.add_argument("--seeds", type=_ints, default=(0,))
    p.add_argument("--p-select", dest="p_select", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("study-position", help="position/timestamp dimension study")
    add_data_args(p)
    add_model_args(p)
    add_train_args(p)
    p.add_argument("--dims", default="0:0,8:0,0:8,8:8,0:16")
    p.add_argument("--seeds", type=_ints, default=(0,))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_study_position)

    p = sub.add_parser("study-mask", help="MLM selection-rate study")
    add_data_args(p)
    add_model_args(p)
    add_train_args(p)
    p.add_argument("--p", dest="p_values", type=_floats, default=(0.05, 0.10, 0.15, 0.20, 0.25, 0.30))
    p.add_argument("--seeds", type=_ints, default=(0,))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_study_mask)

    p = sub.add_parser("time-overhead", help="per-epoch timing of two ablations")
    add_data_args(p)
    add_model_args(p)
    add_train_args(p)  # --epochs doubles as the number of timed epochs (default 7)
    p.add_argument("--ablations", default="none,all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_time_overhead)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (TraceLmError, OSError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
