"""Versioned binary checkpoints with a plain-text metric sidecar.

Layout: an 8-byte magic, a length-prefixed canonical-JSON header (format
version, model kind, config, vocabulary, tokenizer mode, training
provenance, optimizer step count, and ordered block descriptors), then the
raw little-endian float64 payload of every block in descriptor order.
Blocks hold the model parameters followed by the Adam moment estimates.

Saving also writes ``<file>.metrics.tsv`` with one evaluation per row
(step, train_loss, dev_loss, dev_accuracy); loading reads it back when
present.  Save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compaggr import CompAggrConfig, CompAggrModel
from .errors import ConfigError, ParseError
from .tokenizer import Vocabulary
from .transformer import TransformerClassifier, TransformerConfig

__all__ = ["Checkpoint", "MetricRow", "load_checkpoint", "model_from_checkpoint", "save_checkpoint"]

MAGIC = b"CLINLI01"
FORMAT_VERSION = 1


@dataclass
class MetricRow:
    step: int
    train_loss: float
    dev_loss: float
    dev_accuracy: float


@dataclass
class Checkpoint:
    kind: str
    model_config: dict
    vocab_tokens: list[str]
    tokenizer_mode: str
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    adam_t: int = 0
    provenance: list[str] = field(default_factory=list)
    history: list[MetricRow] = field(default_factory=list)

    def best_dev_loss(self) -> float | None:
        return min((row.dev_loss for row in self.history), default=None)


def _blocks(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    out = [(name, arr) for name, arr in ckpt.params.items()]
    out += [(f"adam.m.{name}", arr) for name, arr in ckpt.adam_m.items()]
    out += [(f"adam.v.{name}", arr) for name, arr in ckpt.adam_v.items()]
    return out


def metrics_path(path) -> Path:
    return Path(str(path) + ".metrics.tsv")


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    blocks = _blocks(ckpt)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": ckpt.kind,
        "config": ckpt.model_config,
        "vocab": ckpt.vocab_tokens,
        "tokenizer_mode": ckpt.tokenizer_mode,
        "provenance": ckpt.provenance,
        "adam_t": ckpt.adam_t,
        "blocks": [{"name": name, "shape": list(arr.shape)} for name, arr in blocks],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(metrics_path(path), "w", encoding="utf-8") as fh:
        fh.write("step\ttrain_loss\tdev_loss\tdev_accuracy\n")
        for row in ckpt.history:
            fh.write(f"{row.step}\t{row.train_loss!r}\t{row.dev_loss!r}\t{row.dev_accuracy!r}\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ParseError(f"{path}: not a checkpoint file (magic {magic!r})")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("ascii"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ParseError(f"{path}: unsupported format version {header.get('format_version')}")
        arrays: dict[str, np.ndarray] = {}
        for desc in header["blocks"]:
            shape = tuple(desc["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ParseError(f"{path}: truncated block {desc['name']}")
            arrays[desc["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)

    params, adam_m, adam_v = {}, {}, {}
    for name, arr in arrays.items():
        if name.startswith("adam.m."):
            adam_m[name.removeprefix("adam.m.")] = arr
        elif name.startswith("adam.v."):
            adam_v[name.removeprefix("adam.v.")] = arr
        else:
            params[name] = arr

    history: list[MetricRow] = []
    mpath = metrics_path(path)
    if mpath.exists():
        lines = mpath.read_text(encoding="utf-8").splitlines()
        for line in lines[1:]:
            step, tl, dl, da = line.split("\t")
            history.append(MetricRow(int(step), float(tl), float(dl), float(da)))

    return Checkpoint(
        kind=header["kind"],
        model_config=header["config"],
        vocab_tokens=header["vocab"],
        tokenizer_mode=header["tokenizer_mode"],
        params=params,
        adam_m=adam_m,
        adam_v=adam_v,
        adam_t=header["adam_t"],
        provenance=list(header["provenance"]),
        history=history,
    )


def model_from_checkpoint(ckpt: Checkpoint):
    """Rebuild a model of the checkpointed kind and restore its parameters."""
    vocab = Vocabulary(list(ckpt.vocab_tokens))
    if ckpt.kind == "transformer":
        model = TransformerClassifier(
            TransformerConfig(**ckpt.model_config), vocab, tokenizer_mode=ckpt.tokenizer_mode
        )
    elif ckpt.kind == "compaggr":
        cfg = dict(ckpt.model_config)
        cfg["filter_widths"] = tuple(cfg["filter_widths"])
        model = CompAggrModel(CompAggrConfig(**cfg), vocab)
    else:
        raise ConfigError(f"unknown model kind {ckpt.kind!r}")
    model.load_parameters(ckpt.params)
    return model
