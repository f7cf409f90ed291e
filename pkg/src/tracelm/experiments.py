"""Experiment orchestration: ablation grid, position/timestamp and mask-rate
studies, overhead timing, dataset files, and tabular reports.

Every report embeds the fully resolved configuration and seed list, renders
as aligned text, and serializes to line-delimited JSON records.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, TraceLmError, UnsupportedModelError
from .events import RECORD_DTYPE, Vocab
from .ingest import SplitSpec, Sequence as Window, split, stack_sequences, window
from .nn.base import LSTM, TRANSFORMER, ModelConfig
from .nn.checkpoint import build_model
from .nn.objectives import MaskPlan, eval_lm, eval_mlm
from .nn.train import TrainConfig, TrainResult, train
from .represent import ArgGroup, RepresentationConfig, rep_config_to_dict

#: ablation name -> (argument groups, sysname embedding dim)
ABLATION_TABLE: dict[str, tuple[frozenset, int]] = {
    "none": (frozenset(), 32),
    "none_cmp": (frozenset(), 64),
    "time": (frozenset({ArgGroup.TIME}), 32),
    "call": (frozenset({ArgGroup.CALL}), 32),
    "process": (frozenset({ArgGroup.PROCESS}), 32),
    "all": (frozenset({ArgGroup.CALL, ArgGroup.PROCESS, ArgGroup.TIME}), 32),
}
ABLATIONS = tuple(ABLATION_TABLE)


def ablation_config(name: str, **overrides) -> RepresentationConfig:
    """The RepresentationConfig a named ablation denotes (bijective mapping)."""
    try:
        groups, d_sysname = ABLATION_TABLE[name]
    except KeyError:
        raise ConfigError(f"unknown ablation {name!r}; expected one of {list(ABLATION_TABLE)}") from None
    return RepresentationConfig(groups=groups, d_sysname=d_sysname, **overrides)


@dataclass(frozen=True)
class ExperimentSpec:
    """One grid cell request as given on the command line."""

    train_path: str
    test_path: str
    objective: str
    model_kind: str
    ablation: str
    seeds: tuple[int, ...]
    out_dir: str

    def __post_init__(self):
        if self.ablation not in ABLATION_TABLE:
            raise ConfigError(f"unknown ablation {self.ablation!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")


# -- dataset files -----------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """Windowed records plus the vocabularies they were encoded with."""

    records: np.ndarray  # (N, T) RECORD_DTYPE
    sys_vocab: Vocab
    proc_vocab: Vocab
    meta: dict

    def __len__(self) -> int:
        return len(self.records)


def save_dataset(path: str | Path, records: np.ndarray, sys_vocab: Vocab, proc_vocab: Vocab,
                 meta: dict | None = None) -> None:
    info = dict(meta or {})
    info.update({
        "sys_tokens": sys_vocab.tokens,
        "proc_tokens": proc_vocab.tokens,
        "n_sequences": int(records.shape[0]),
        "window_len": int(records.shape[1]) if records.ndim == 2 else 0,
    })
    np.savez_compressed(path, records=records, meta=np.array(json.dumps(info)))


def load_dataset(path: str | Path) -> Dataset:
    from .events import RESERVED_TOKENS

    with np.load(path, allow_pickle=False) as blob:
        records = blob["records"]
        meta = json.loads(str(blob["meta"]))
    if records.dtype != RECORD_DTYPE or records.ndim != 2:
        raise ValueError(f"{path}: not a windowed record dataset")
    return Dataset(
        records=records,
        sys_vocab=Vocab(meta["sys_tokens"][len(RESERVED_TOKENS):]),
        proc_vocab=Vocab(meta["proc_tokens"][len(RESERVED_TOKENS):]),
        meta=meta,
    )


@dataclass(frozen=True)
class DataBundle:
    """Train windows plus the eval/valid partition of the held-out windows."""

    train: np.ndarray
    eval: np.ndarray
    valid: np.ndarray
    sys_vocab: Vocab
    proc_vocab: Vocab
    meta: dict = field(default_factory=dict)


def make_bundle(train_ds: Dataset, test_ds: Dataset, split_spec: SplitSpec | None = None) -> DataBundle:
    """Split the test dataset into eval/valid; train and test never mix."""
    if train_ds.sys_vocab != test_ds.sys_vocab or train_ds.proc_vocab != test_ds.proc_vocab:
        raise ConfigError("train and test datasets were encoded with different vocabularies")
    spec = split_spec or SplitSpec()
    windows = [Window(row) for row in test_ds.records]
    eval_part, valid_part = split(windows, spec)
    return DataBundle(
        train=train_ds.records,
        eval=stack_sequences(eval_part),
        valid=stack_sequences(valid_part),
        sys_vocab=train_ds.sys_vocab,
        proc_vocab=train_ds.proc_vocab,
        meta={
            "train": train_ds.meta, "test": test_ds.meta,
            "valid_fraction": spec.valid_fraction, "split_seed": spec.seed,
        },
    )


# -- reports -------------------------------------------------------------------

@dataclass
class Report:
    """Tabular result with a reproducibility header."""

    title: str
    header: dict
    columns: list[str]
    rows: list[dict] = field(default_factory=list)

    @property
    def any_failed(self) -> bool:
        return any(r.get("failed") for r in self.rows)

    def to_text(self) -> str:
        lines = [f"== {self.title} =="]
        for key, value in self.header.items():
            lines.append(f"# {key}: {json.dumps(value, sort_keys=True)}")
        widths = {c: len(c) for c in self.columns}
        rendered = []
        for row in self.rows:
            cells = {c: _fmt(row.get(c, "")) for c in self.columns}
            rendered.append(cells)
            for c in self.columns:
                widths[c] = max(widths[c], len(cells[c]))
        lines.append("  ".join(c.ljust(widths[c]) for c in self.columns))
        for cells in rendered:
            lines.append("  ".join(cells[c].ljust(widths[c]) for c in self.columns))
        return "\n".join(lines) + "\n"

    def to_jsonl(self) -> str:
        out = [json.dumps({"report": self.title, "header": self.header})]
        out += [json.dumps(row) for row in self.rows]
        return "\n".join(out) + "\n"

    def save(self, out_dir: str | Path, stem: str) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        text_path = out / f"{stem}.txt"
        jsonl_path = out / f"{stem}.jsonl"
        text_path.write_text(self.to_text(), encoding="utf-8")
        jsonl_path.write_text(self.to_jsonl(), encoding="utf-8")
        return text_path, jsonl_path


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def _mean_std(xs: Sequence[float]) -> tuple[float, float]:
    if len(xs) == 1:
        return float(xs[0]), 0.0
    return float(statistics.fmean(xs)), float(statistics.stdev(xs))


def _base_header(bundle: DataBundle, model_cfg: ModelConfig, train_cfg: TrainConfig,
                 seeds: Sequence[int], **extra) -> dict:
    header = {
        "tracelm_version": __version__,
        "model_cfg": model_cfg.to_dict(),
        "train_cfg": train_cfg.to_dict(),
        "seeds": list(seeds),
        "n_train": int(len(bundle.train)),
        "n_eval": int(len(bundle.eval)),
        "n_valid": int(len(bundle.valid)),
        "sys_vocab_size": len(bundle.sys_vocab),
        "data": bundle.meta,
    }
    header.update(extra)
    return header


# -- single runs -----------------------------------------------------------------

@dataclass
class RunOutcome:
    cross_entropy: float
    accuracy: float
    epoch_seconds: list[float]
    result: TrainResult
    model: object


def run_single(
    bundle: DataBundle,
    objective: str,
    model_cfg: ModelConfig,
    rep_cfg: RepresentationConfig,
    train_cfg: TrainConfig,
    seed: int,
    plan: MaskPlan | None = None,
    eval_records: np.ndarray | None = None,
) -> RunOutcome:
    """Train one model and evaluate it on the eval partition."""
    model = build_model(model_cfg, rep_cfg, len(bundle.sys_vocab), len(bundle.proc_vocab), seed=seed)
    cfg = TrainConfig(**{**train_cfg.to_dict(), "seed": seed})
    result = train(model, bundle.train, bundle.valid, objective, cfg, plan=plan)
    records = bundle.eval if eval_records is None else eval_records
    if objective == "mlm":
        ce, acc = eval_mlm(model, records, plan or MaskPlan(), batch_size=cfg.batch_size)
    else:
        ce, acc = eval_lm(model, records, batch_size=cfg.batch_size)
    return RunOutcome(ce, acc, result.epoch_seconds, result, model)


def run_ablation(
    bundle: DataBundle,
    objective: str,
    model_kind: str,
    ablations: Sequence[str],
    seeds: Sequence[int],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    plan: MaskPlan | None = None,
    log: Callable[[str], None] = lambda s: None,
) -> Report:
    """One row of the ablation table: fixed (objective, model), one column per ablation."""
    if not seeds:
        raise ConfigError("at least one seed is required")
    if model_cfg.kind != model_kind:
        model_cfg = ModelConfig(**{**model_cfg.to_dict(), "kind": model_kind})
    report = Report(
        title=f"ablation {objective}/{model_kind}",
        header=_base_header(bundle, model_cfg, train_cfg, seeds,
                            ablations={a: rep_config_to_dict(ablation_config(a)) for a in ablations}),
        columns=["objective", "model", "ablation", "cross_entropy", "accuracy",
                 "ce_std", "acc_std", "epoch_ms", "failed"],
    )
    for name in ablations:
        rep_cfg = ablation_config(name)
        ces, accs, epoch_times = [], [], []
        error = ""
        try:
            for seed in seeds:
                out = run_single(bundle, objective, model_cfg, rep_cfg, train_cfg, seed, plan=plan)
                ces.append(out.cross_entropy)
                accs.append(out.accuracy)
                epoch_times.extend(out.epoch_seconds)
                log(f"{objective}/{model_kind}/{name} seed {seed}: "
                    f"ce {out.cross_entropy:.4f} acc {out.accuracy:.2f}%")
        except (TraceLmError, FloatingPointError) as exc:
            error = str(exc)
        if error:
            report.rows.append({"objective": objective, "model": model_kind, "ablation": name,
                                "failed": True, "error": error})
            continue
        ce_m, ce_s = _mean_std(ces)
        acc_m, acc_s = _mean_std(accs)
        report.rows.append({
            "objective": objective, "model": model_kind, "ablation": name,
            "cross_entropy": ce_m, "accuracy": acc_m, "ce_std": ce_s, "acc_std": acc_s,
            "epoch_ms": 1000.0 * statistics.fmean(epoch_times), "failed": False,
        })
    return report


def run_position_study(
    bundle: DataBundle,
    dims: Sequence[tuple[int, int]] = ((0, 0), (8, 0), (0, 8), (8, 8), (0, 16)),
    seeds: Sequence[int] = (0,),
    model_cfg: ModelConfig | None = None,
    train_cfg: TrainConfig | None = None,
    log: Callable[[str], None] = lambda s: None,
) -> Report:
    """Grid over (timestamp dim, position dim) on the argument-free Transformer.

    A dimension of zero omits that channel entirely.
    """
    model_cfg = model_cfg or ModelConfig(kind=TRANSFORMER)
    train_cfg = train_cfg or TrainConfig()
    if model_cfg.kind != TRANSFORMER:
        raise UnsupportedModelError("the position study is defined for the Transformer only")
    deduped: list[tuple[int, int]] = []
    for pair in dims:
        if tuple(pair) not in deduped:
            deduped.append(tuple(pair))
    report = Report(
        title="position/timestamp encoding study",
        header=_base_header(bundle, model_cfg, train_cfg, seeds, dims=[list(d) for d in deduped]),
        columns=["d_timestamp", "d_position", "cross_entropy", "accuracy", "ce_std", "acc_std"],
    )
    for d_ts, d_pos in deduped:
        groups = frozenset({ArgGroup.TIME}) if d_ts > 0 else frozenset()
        rep_cfg = RepresentationConfig(groups=groups, d_sysname=32,
                                       d_timestamp=d_ts if d_ts > 0 else 8)
        cell_model_cfg = ModelConfig(**{**model_cfg.to_dict(), "d_position": d_pos})
        ces, accs = [], []
        for seed in seeds:
            out = run_single(bundle, "lm", cell_model_cfg, rep_cfg, train_cfg, seed)
            ces.append(out.cross_entropy)
            accs.append(out.accuracy)
            log(f"position ({d_ts},{d_pos}) seed {seed}: ce {out.cross_entropy:.4f}")
        ce_m, ce_s = _mean_std(ces)
        acc_m, acc_s = _mean_std(accs)
        report.rows.append({"d_timestamp": d_ts, "d_position": d_pos,
                            "cross_entropy": ce_m, "accuracy": acc_m,
                            "ce_std": ce_s, "acc_std": acc_s})
    return report


def run_mask_study(
    bundle: DataBundle,
    p_values: Sequence[float] = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30),
    seeds: Sequence[int] = (0,),
    model_cfg: ModelConfig | None = None,
    train_cfg: TrainConfig | None = None,
    log: Callable[[str], None] = lambda s: None,
) -> Report:
    """Pretrain MLM at each selection rate, then score zero-shot as a LM.

    Zero-shot means literal next-token evaluation: the MLM-trained weights run
    with a causal mask and the output at t is scored against the sysname at
    t+1. The default 25% row is marked in the report.
    """
    model_cfg = model_cfg or ModelConfig(kind=TRANSFORMER)
    train_cfg = train_cfg or TrainConfig()
    if model_cfg.kind != TRANSFORMER:
        raise UnsupportedModelError("MLM pretraining requires the Transformer")
    rep_cfg = ablation_config("all")
    report = Report(
        title="mask-rate study (MLM pretraining, zero-shot LM eval)",
        header=_base_header(bundle, model_cfg, train_cfg, seeds,
                            p_values=list(p_values), ablation=rep_config_to_dict(rep_cfg)),
        columns=["p_select", "zero_shot_ce", "zero_shot_acc", "mlm_valid_ce", "default"],
    )
    for p in p_values:
        ces, accs, valid_ces = [], [], []
        for seed in seeds:
            plan = MaskPlan(p_select=p, seed=seed)
            out = run_single(bundle, "mlm", model_cfg, rep_cfg, train_cfg, seed, plan=plan)
            zs_ce, zs_acc = eval_lm(out.model, bundle.eval, batch_size=train_cfg.batch_size)
            ces.append(zs_ce)
            accs.append(zs_acc)
            valid_ces.append(out.result.best_valid_loss)
            log(f"mask p={p:.2f} seed {seed}: zero-shot ce {zs_ce:.4f} acc {zs_acc:.2f}%")
        report.rows.append({
            "p_select": p,
            "zero_shot_ce": _mean_std(ces)[0],
            "zero_shot_acc": _mean_std(accs)[0],
            "mlm_valid_ce": _mean_std(valid_ces)[0],
            "default": "*" if abs(p - 0.25) < 1e-12 else "",
        })
    return report


def time_overhead(
    bundle: DataBundle,
    model_cfg: ModelConfig | None = None,
    train_cfg: TrainConfig | None = None,
    ablations: tuple[str, str] = ("none", "all"),
    epochs: int = 7,
    seed: int = 0,
    log: Callable[[str], None] = lambda s: None,
) -> Report:
    """Per-epoch wall time, mean +- std over the epochs after the first
    (warm-up excluded), and the relative overhead ratio between ablations."""
    if epochs < 6:
        raise ConfigError("need >= 6 epochs so at least 5 are measured after warm-up")
    model_cfg = model_cfg or ModelConfig(kind=TRANSFORMER)
    base = train_cfg or TrainConfig()
    cfg = TrainConfig(**{**base.to_dict(), "max_epochs": epochs, "patience": epochs, "seed": seed})
    report = Report(
        title="per-epoch time overhead",
        header=_base_header(bundle, model_cfg, cfg, [seed],
                            ablations=list(ablations), measured_epochs=epochs - 1),
        columns=["ablation", "epoch_ms_mean", "epoch_ms_std", "epochs_measured"],
    )
    means = {}
    for name in ablations:
        rep_cfg = ablation_config(name)
        model = build_model(model_cfg, rep_cfg, len(bundle.sys_vocab), len(bundle.proc_vocab), seed=seed)
        result = train(model, bundle.train, bundle.valid, "lm", cfg)
        timed = result.epoch_seconds[1:]
        mean_s, std_s = _mean_std(timed)
        means[name] = mean_s
        report.rows.append({"ablation": name, "epoch_ms_mean": 1000 * mean_s,
                            "epoch_ms_std": 1000 * std_s, "epochs_measured": len(timed)})
        log(f"overhead {name}: {1000 * mean_s:.1f} ms/epoch")
    first, second = ablations
    report.header["overhead_ratio"] = means[second] / means[first]
    report.rows.append({"ablation": f"{second}/{first}",
                        "epoch_ms_mean": means[second] / means[first],
                        "epoch_ms_std": 0.0, "epochs_measured": epochs - 1})
    return report


def score_quantiles(values: np.ndarray) -> dict[str, float]:
    if len(values) == 0:
        return {}
    qs = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {"min": float(qs[0]), "q25": float(qs[1]), "median": float(qs[2]),
            "q75": float(qs[3]), "max": float(qs[4])}
