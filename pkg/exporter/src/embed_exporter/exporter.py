"""Run a frozen encoder over label strings and write their token embeddings.

One entry per text: the final-layer hidden state of every token, f32,
in the MTEB container consumed by the training side. Special tokens are
dropped by default so downstream mean-pooling averages content tokens
only. Inference runs with dropout off and no gradients, so a fixed model
revision produces byte-identical files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

MTEB_MAGIC = b"MTEB"
MTEB_VERSION = 1


class ExportError(ValueError):
    """Unusable job: bad label list, failed model load, or empty tokenization."""


@dataclass
class ExportJob:
    model_id: str  # hub id or local directory
    label_texts: list[str]
    output_path: str
    include_special_tokens: bool = False
    seed_phrases: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.label_texts:
            raise ExportError("label list is empty")
        seen = set()
        for text in self.label_texts:
            if text in seen:
                raise ExportError(f"duplicate label {text!r}")
            seen.add(text)

    def texts_to_export(self) -> list[str]:
        extra = [p for p in self.seed_phrases if p not in self.label_texts]
        return list(self.label_texts) + extra


def load_encoder(model_id: str):
    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:
        raise ExportError(f"cannot load encoder {model_id!r}: {exc}") from exc
    model.eval()
    return tokenizer, model


def encode_tokens(text: str, tokenizer, model, include_special: bool) -> np.ndarray:
    """Final-layer hidden state per token, K x d_t float32."""
    batch = tokenizer(text, return_tensors="pt", return_special_tokens_mask=True)
    special = batch.pop("special_tokens_mask")[0].bool()
    with torch.no_grad():
        out = model(**batch)
    hidden = out.last_hidden_state[0]
    if not include_special:
        hidden = hidden[~special]
    if hidden.shape[0] == 0:
        raise ExportError(f"text {text!r} tokenizes to no content tokens")
    return hidden.cpu().numpy().astype(np.float32)


def write_store(entries: dict[str, np.ndarray], path) -> None:
    widths = {mat.shape[1] for mat in entries.values()}
    if len(widths) != 1:
        raise ExportError(f"inconsistent embedding widths {sorted(widths)}")
    with open(path, "wb") as fh:
        fh.write(MTEB_MAGIC)
        fh.write(struct.pack("<II", MTEB_VERSION, len(entries)))
        for label, mat in entries.items():
            raw = label.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
            fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())


def run_export(job: ExportJob) -> Path:
    tokenizer, model = load_encoder(job.model_id)
    entries = {
        text: encode_tokens(text, tokenizer, model, job.include_special_tokens)
        for text in job.texts_to_export()
    }
    out = Path(job.output_path)
    write_store(entries, out)
    return out
