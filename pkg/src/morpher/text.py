"""Frozen per-token text embeddings, the learnable text prompt, and label geometry.

The frozen encoder itself never runs here: a store of precomputed token
matrices (or the deterministic pseudo-encoder) supplies the text side, the
learnable prompt rows are prepended after encoding, and candidate label
embeddings are centered so semantically close labels still separate.
"""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass

import numpy as np

MTEB_MAGIC = b"MTEB"
MTEB_VERSION = 1

NORM_EPS = 1e-12


class EmbeddingFormatError(ValueError):
    """Embedding file has a bad magic/version, duplicate label, or mixed width."""


class UnknownLabelError(KeyError):
    """Requested label has no entry in the store."""


class DegenerateLabelError(ValueError):
    """A centered label embedding collapsed to (numerically) zero."""


class TextEmbeddingStore:
    """Immutable map from label string to its frozen K x d_t token matrix."""

    def __init__(self, entries: dict[str, np.ndarray]):
        if not entries:
            raise EmbeddingFormatError("store needs at least one label entry")
        widths = set()
        self._entries: dict[str, np.ndarray] = {}
        for label, mat in entries.items():
            mat = np.asarray(mat, dtype=np.float64)
            if mat.ndim != 2 or mat.shape[0] < 1:
                raise EmbeddingFormatError(f"label {label!r}: need a K x d_t matrix, K >= 1")
            widths.add(mat.shape[1])
            mat = mat.copy()
            mat.setflags(write=False)
            self._entries[label] = mat
        if len(widths) != 1:
            raise EmbeddingFormatError(f"inconsistent embedding widths {sorted(widths)}")
        self._dim = widths.pop()

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def labels(self) -> list[str]:
        return list(self._entries)

    def __contains__(self, label: str) -> bool:
        return label in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def tokens(self, label: str) -> np.ndarray:
        try:
            return self._entries[label]
        except KeyError:
            raise UnknownLabelError(label) from None

    def try_encode(self, text: str) -> np.ndarray | None:
        """Stored matrix for ``text`` if present; stores cannot encode new text."""
        return self._entries.get(text)

    def covers(self, label_texts) -> bool:
        return all(t in self._entries for t in label_texts)


def load_token_embeddings(path) -> TextEmbeddingStore:
    """Read an MTEB file; f32 payloads are upcast to f64."""
    with open(path, "rb") as fh:
        if fh.read(4) != MTEB_MAGIC:
            raise EmbeddingFormatError(f"{path}: bad magic")
        header = fh.read(8)
        if len(header) != 8:
            raise EmbeddingFormatError(f"{path}: truncated header")
        version, count = struct.unpack("<II", header)
        if version != MTEB_VERSION:
            raise EmbeddingFormatError(f"{path}: unsupported version {version}")
        if count == 0:
            raise EmbeddingFormatError(f"{path}: empty store, a vocabulary is required")
        entries: dict[str, np.ndarray] = {}
        for _ in range(count):
            (label_len,) = struct.unpack("<I", fh.read(4))
            label = fh.read(label_len).decode("utf-8")
            k, d_t = struct.unpack("<II", fh.read(8))
            payload = fh.read(k * d_t * 4)
            if len(payload) != k * d_t * 4:
                raise EmbeddingFormatError(f"{path}: truncated entry for {label!r}")
            if label in entries:
                raise EmbeddingFormatError(f"{path}: duplicate label {label!r}")
            entries[label] = np.frombuffer(payload, dtype="<f4").reshape(k, d_t).astype(np.float64)
    return TextEmbeddingStore(entries)


def save_token_embeddings(store: TextEmbeddingStore, path) -> None:
    """Write the store in MTEB format (payload downcast to f32)."""
    with open(path, "wb") as fh:
        fh.write(MTEB_MAGIC)
        fh.write(struct.pack("<II", MTEB_VERSION, len(store)))
        for label in store.labels:
            raw = label.encode("utf-8")
            mat = store.tokens(label)
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
            fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())


# ---------------------------------------------------------------------------
# deterministic pseudo-encoder


def pseudo_encode(text: str, d_t: int, k: int, seed: int) -> np.ndarray:
    """K unit-norm rows derived from a hash of (seed, text, row index).

    Identical texts map to identical matrices; distinct texts differ with
    overwhelming probability.
    """
    if d_t < 1 or k < 1:
        raise ValueError("d_t and k must be >= 1")
    rows = np.empty((k, d_t))
    for r in range(k):
        digest = hashlib.blake2b(
            f"{seed}\x1f{text}\x1f{r}".encode("utf-8"), digest_size=8
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        v = rng.standard_normal(d_t)
        rows[r] = v / np.linalg.norm(v)
    rows.setflags(write=False)
    return rows


@dataclass(frozen=True)
class PseudoEncoder:
    """Hash-seeded stand-in for a frozen text encoder.

    ``midpoint=(a, b, c)`` switches label c to a single token placed at the
    exact arithmetic midpoint of a's and b's readouts, giving tests a label
    whose position in embedding space is known in closed form.
    """

    d_t: int
    tokens_per_label: int = 8
    seed: int = 0
    midpoint: tuple[str, str, str] | None = None

    def encode(self, text: str) -> np.ndarray:
        if self.midpoint is not None and text == self.midpoint[2]:
            a = pseudo_encode(self.midpoint[0], self.d_t, self.tokens_per_label, self.seed)
            b = pseudo_encode(self.midpoint[1], self.d_t, self.tokens_per_label, self.seed)
            mid = (a.mean(axis=0) + b.mean(axis=0)) / 2.0
            return mid.reshape(1, self.d_t)
        return pseudo_encode(text, self.d_t, self.tokens_per_label, self.seed)

    def try_encode(self, text: str) -> np.ndarray:
        return self.encode(text)

    def build_store(self, label_texts) -> TextEmbeddingStore:
        return TextEmbeddingStore({t: self.encode(t) for t in label_texts})


# ---------------------------------------------------------------------------
# prompted embeddings and label geometry


@dataclass
class TextPrompt:
    """Learnable rows prepended to every label's frozen token matrix."""

    tokens: np.ndarray  # n_t x d_t

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        if self.tokens.ndim != 2 or self.tokens.shape[0] < 1:
            raise ValueError("text prompt needs an n_t x d_t matrix with n_t >= 1")

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def copy(self) -> "TextPrompt":
        return TextPrompt(self.tokens.copy())


def prompted_text_embedding(label: str, prompt: TextPrompt, store) -> np.ndarray:
    """Mean over the stacked [prompt rows; frozen token rows].

    Linear in the prompt: each prompt row contributes 1/(n_t + K) of
    itself, which is all the backward pass needs.
    """
    toks = store.tokens(label) if hasattr(store, "tokens") else store.encode(label)
    if toks.shape[1] != prompt.dim:
        raise ValueError(f"store width {toks.shape[1]} != prompt width {prompt.dim}")
    total = prompt.tokens.sum(axis=0) + toks.sum(axis=0)
    return total / (prompt.num_tokens + toks.shape[0])


def center_normalize_labels(embeddings) -> list[np.ndarray]:
    """Subtract the candidate-set mean, then scale each vector to unit norm.

    With a single candidate there is nothing to separate: centering is
    skipped with a warning and the vector is normalized as-is.
    """
    embeddings = [np.asarray(e, dtype=np.float64) for e in embeddings]
    if len(embeddings) < 2:
        warnings.warn("fewer than two candidate labels: centering skipped", stacklevel=2)
        centered = embeddings
    else:
        mu = np.mean(embeddings, axis=0)
        centered = [e - mu for e in embeddings]
    out = []
    for i, v in enumerate(centered):
        norm = np.linalg.norm(v)
        if norm <= NORM_EPS:
            raise DegenerateLabelError(
                f"candidate {i} coincides with the candidate mean (norm {norm:.3g})"
            )
        out.append(v / norm)
    return out


def init_text_prompt(
    phrase: str | None,
    n_t: int,
    d_t: int,
    encoder,
    seed: int,
) -> TextPrompt:
    """Seed the prompt from a phrase's token embeddings, or Gaussian fallback.

    A phrase shorter than n_t tokens is cycled; a missing or un-encodable
    phrase falls back to N(0, 0.02^2) entries.
    """
    if n_t < 1 or d_t < 1:
        raise ValueError("n_t and d_t must be >= 1")
    toks = None
    if phrase is not None and encoder is not None:
        toks = encoder.try_encode(phrase)
    if toks is not None:
        if toks.shape[1] != d_t:
            raise ValueError(f"phrase embedding width {toks.shape[1]} != d_t {d_t}")
        rows = np.stack([toks[i % toks.shape[0]] for i in range(n_t)])
        return TextPrompt(rows)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7E7]))
    return TextPrompt(0.02 * rng.standard_normal((n_t, d_t)))
