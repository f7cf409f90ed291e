"""Versioned model checkpoints: parameter tensors + configs + vocab hashes.

A checkpoint is an .npz holding every parameter array under `param:NAME` keys
and a JSON metadata blob (format version, model/representation configs,
dtype, seed, the full vocab token lists and their hashes). Loading rebuilds
the model and refuses vocabularies whose hash differs from the stored one.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import VocabMismatchError
from ..events import RESERVED_TOKENS, Vocab
from ..represent import RepresentationConfig, rep_config_from_dict, rep_config_to_dict
from .base import LSTM, TRANSFORMER, Model, ModelConfig
from .lstm import LstmLm
from .transformer import TransformerModel

FORMAT_VERSION = 1


def build_model(
    model_cfg: ModelConfig,
    rep_cfg: RepresentationConfig,
    sys_vocab_size: int,
    proc_vocab_size: int,
    seed: int = 0,
    dtype="float32",
) -> Model:
    cls = LstmLm if model_cfg.kind == LSTM else TransformerModel
    return cls(model_cfg, rep_cfg, sys_vocab_size, proc_vocab_size, seed=seed, dtype=np.dtype(dtype))


def save_checkpoint(
    path: str | Path,
    model: Model,
    sys_vocab: Vocab,
    proc_vocab: Vocab,
    extra: dict | None = None,
) -> None:
    meta = {
        "version": FORMAT_VERSION,
        "kind": model.kind,
        "model_cfg": model.model_cfg.to_dict(),
        "rep_cfg": rep_config_to_dict(model.rep_cfg),
        "dtype": model.dtype.name,
        "seed": model.seed,
        "sys_tokens": sys_vocab.tokens,
        "proc_tokens": proc_vocab.tokens,
        "sys_sha": sys_vocab.sha256(),
        "proc_sha": proc_vocab.sha256(),
        "extra": extra or {},
    }
    arrays = {f"param:{name}": p.data for name, p in model.parameters().items()}
    np.savez_compressed(path, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path: str | Path) -> tuple[Model, Vocab, Vocab, dict]:
    with np.load(path, allow_pickle=False) as blob:
        meta = json.loads(str(blob["meta"]))
        if meta.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
        arrays = {key[len("param:"):]: blob[key] for key in blob.files if key.startswith("param:")}

    sys_vocab = Vocab(meta["sys_tokens"][len(RESERVED_TOKENS):])
    proc_vocab = Vocab(meta["proc_tokens"][len(RESERVED_TOKENS):])
    if sys_vocab.sha256() != meta["sys_sha"] or proc_vocab.sha256() != meta["proc_sha"]:
        raise VocabMismatchError("checkpoint vocab hashes do not match their token lists")

    model = build_model(
        ModelConfig.from_dict(meta["model_cfg"]),
        rep_config_from_dict(meta["rep_cfg"]),
        len(sys_vocab),
        len(proc_vocab),
        seed=meta["seed"],
        dtype=meta["dtype"],
    )
    model.load_state(arrays)
    return model, sys_vocab, proc_vocab, meta


def check_vocab_compat(meta: dict, sys_vocab: Vocab, proc_vocab: Vocab) -> None:
    """Raise VocabMismatchError unless the vocabs hash-match the checkpoint's."""
    if sys_vocab.sha256() != meta["sys_sha"]:
        raise VocabMismatchError("sysname vocabulary differs from the checkpoint's")
    if proc_vocab.sha256() != meta["proc_sha"]:
        raise VocabMismatchError("procname vocabulary differs from the checkpoint's")
