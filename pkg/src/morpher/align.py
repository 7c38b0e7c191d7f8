"""Cross-modal alignment: projector, contrastive objective, gradients, training.

Only four parameter blocks ever train: the graph-prompt tokens, the
text-prompt tokens, and the projector weight/bias (plus a linear task head
in the single-modal baseline).  Both encoders stay frozen, so the backward
pass here is written out explicitly: loss -> projector tanh -> embedding
normalization -> mean readout -> frozen-encoder feature gradient -> prompt
token rows, and on the text side through the candidate centering into the
prompt rows.  Prompted-graph edges are recomputed from the current tokens
every forward pass but are treated as non-differentiable structure.
"""

from __future__ import annotations

import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .gnn import FrozenGnn, gcn_backward_features, gcn_forward, normalize_adjacency, readout_mean
from .graphs import DatasetBundle, Graph
from .prompts import GraphPrompt, build_prompted, init_graph_prompt
from .text import (
    NORM_EPS,
    DegenerateLabelError,
    TextPrompt,
    center_normalize_labels,
    init_text_prompt,
    prompted_text_embedding,
)

MPST_MAGIC = b"MPST"
MPST_VERSION = 1

MODE_MORPHER = "morpher"
MODE_IMPROVED_HEAD = "improved_aio_head"
MODE_AIO_HEAD = "aio_head"
MODES = (MODE_MORPHER, MODE_IMPROVED_HEAD, MODE_AIO_HEAD)


class DegenerateEmbeddingError(ValueError):
    """A graph readout collapsed to (numerically) zero and cannot be normalized."""


class StateFormatError(ValueError):
    """Saved parameter file has a bad magic, version, or truncated payload."""


@dataclass
class PromptState:
    """Every trainable parameter of one run."""

    graph_prompt: GraphPrompt
    text_prompt: TextPrompt
    w: np.ndarray  # d_t x d_g
    b: np.ndarray  # d_t
    tau: float = 0.07
    prompt_style: str = "improved"
    head: np.ndarray | None = None  # C x d_g, baseline mode only
    head_bias: np.ndarray | None = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise ValueError(f"projector shapes disagree: W {self.w.shape}, b {self.b.shape}")
        if self.w.shape[0] != self.text_prompt.dim:
            raise ValueError("projector output width must match the text embedding width")
        if (self.head is None) != (self.head_bias is None):
            raise ValueError("head and head_bias must be set together")

    def copy(self) -> "PromptState":
        return PromptState(
            self.graph_prompt.copy(),
            self.text_prompt.copy(),
            self.w.copy(),
            self.b.copy(),
            self.tau,
            self.prompt_style,
            None if self.head is None else self.head.copy(),
            None if self.head_bias is None else self.head_bias.copy(),
        )


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 0  # 0 = full batch
    seed: int = 0
    mode: str = MODE_MORPHER
    n_g: int = 10
    n_t: int = 4
    delta_inner: float = 0.5
    delta_cross: float = 0.1
    init_std_multiplier: float = 1.0
    tau: float = 0.07
    prompt_phrase: str | None = None
    threads: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.lr <= 0:
            raise ValueError("epochs and learning rate must be positive")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")


@dataclass
class TrainHistory:
    """One record per completed epoch, describing the state entering it."""

    losses: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    curves: dict[str, list[float]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.losses)


@dataclass
class Grads:
    graph_prompt: np.ndarray
    text_prompt: np.ndarray
    w: np.ndarray
    b: np.ndarray
    head: np.ndarray | None = None
    head_bias: np.ndarray | None = None


# ---------------------------------------------------------------------------
# forward pieces


def project(v: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """tanh(W v + b): maps a graph embedding into the text embedding space."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (w.shape[1],):
        raise ValueError(f"projector expects a vector of length {w.shape[1]}, got {v.shape}")
    return np.tanh(w @ v + b)


@dataclass
class _GraphCache:
    tape: object
    num_rows: int
    readout: np.ndarray
    norm: float
    unit: np.ndarray
    z: np.ndarray


def _graph_forward(graph: Graph, state: PromptState, gnn: FrozenGnn) -> _GraphCache:
    pg = build_prompted(graph, state.graph_prompt, state.prompt_style)
    a_hat = normalize_adjacency(pg.adjacency())
    h2, tape = gcn_forward(a_hat, pg.features, gnn)
    h = readout_mean(h2)
    norm = float(np.linalg.norm(h))
    if norm <= NORM_EPS:
        raise DegenerateEmbeddingError(f"graph readout norm {norm:.3g} is numerically zero")
    unit = h / norm
    z = np.tanh(state.w @ unit + state.b)
    return _GraphCache(tape=tape, num_rows=h2.shape[0], readout=h, norm=norm, unit=unit, z=z)


def graph_branch(graph: Graph, state: PromptState, gnn: FrozenGnn) -> np.ndarray:
    """Prompted graph -> frozen encoder -> mean readout -> normalize -> project.

    The projected vector is not re-normalized; the pipeline composes the
    projection last.
    """
    return _graph_forward(graph, state, gnn).z


def _graph_backward(cache: _GraphCache, state: PromptState, d_z: np.ndarray):
    """Gradient of one sample's projected embedding back to the prompt tokens.

    Returns (d_graph_prompt, d_w, d_b) for a downstream gradient d_z.
    """
    d_a = d_z * (1.0 - cache.z**2)
    d_w = np.outer(d_a, cache.unit)
    d_b = d_a
    d_u = state.w.T @ d_a
    d_h = (d_u - np.dot(cache.unit, d_u) * cache.unit) / cache.norm
    d_h2 = np.tile(d_h / cache.num_rows, (cache.num_rows, 1))
    d_xm = gcn_backward_features(cache.tape, d_h2)
    return d_xm[: state.graph_prompt.num_tokens], d_w, d_b


def _map_samples(fn, items, threads: int):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# ---------------------------------------------------------------------------
# contrastive objective


def contrastive_loss(z_graph: np.ndarray, z_text: np.ndarray, tau: float) -> float:
    loss, _ = _contrastive_loss_softmax(z_graph, z_text, tau)
    return loss


def _contrastive_loss_softmax(z_graph, z_text, tau):
    """In-batch softmax alignment loss with max-subtraction; returns (loss, P)."""
    z_graph = np.atleast_2d(np.asarray(z_graph, dtype=np.float64))
    z_text = np.atleast_2d(np.asarray(z_text, dtype=np.float64))
    if z_graph.shape != z_text.shape or z_graph.shape[0] < 1:
        raise ValueError(f"batch shapes disagree: {z_graph.shape} vs {z_text.shape}")
    if not (np.all(np.isfinite(z_graph)) and np.all(np.isfinite(z_text))):
        raise ValueError("non-finite embedding in batch")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    logits = (z_graph @ z_text.T) / tau
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted - lse[:, None]
    b = z_graph.shape[0]
    loss = -float(np.mean(np.diag(log_p)))
    return loss, np.exp(log_p) / (b * tau)  # second term is dL/dlogits pre-identity


def _candidate_embeddings(candidate_texts, text_prompt: TextPrompt, store):
    """Raw prompted embeddings plus per-candidate token counts."""
    hs, ks = [], []
    for text in candidate_texts:
        toks = store.tokens(text) if hasattr(store, "tokens") else store.encode(text)
        ks.append(toks.shape[0])
        hs.append(prompted_text_embedding(text, text_prompt, store))
    return hs, ks


def candidate_text_vectors(candidate_texts, state: PromptState, store) -> np.ndarray:
    """Centered unit embedding per candidate label, stacked row-wise."""
    hs, _ = _candidate_embeddings(candidate_texts, state.text_prompt, store)
    with warnings.catch_warnings():
        if len(hs) < 2:
            warnings.simplefilter("ignore")
        return np.stack(center_normalize_labels(hs))


def rank_candidates(z_graph: np.ndarray, z_texts: np.ndarray) -> int:
    """Index of the most similar candidate; ties resolve to the lower index."""
    return int(np.argmax(z_texts @ z_graph))


# ---------------------------------------------------------------------------
# full reverse pass


def backward_all(
    batch,
    state: PromptState,
    gnn: FrozenGnn,
    store,
    candidate_texts=None,
    threads: int = 1,
):
    """Loss and exact gradients for every trainable block on one batch.

    ``batch`` holds (graph, candidate_index) pairs; ``candidate_texts``
    names the label vocabulary being aligned against (defaults to the
    distinct labels appearing in the batch, which is what training uses).
    Edge structure receives no gradient.  Returns (loss, Grads, sims)
    where sims[i, c] is the similarity of sample i to candidate c.
    """
    graphs = [g for g, _ in batch]
    classes = [c for _, c in batch]
    if candidate_texts is None:
        raise ValueError("candidate_texts is required")
    n_cand = len(candidate_texts)
    if any(not 0 <= c < n_cand for c in classes):
        raise ValueError("batch class index outside the candidate set")

    # text side forward
    hs, ks = _candidate_embeddings(candidate_texts, state.text_prompt, store)
    centered = n_cand >= 2
    if centered:
        mu = np.mean(hs, axis=0)
        vs = [h - mu for h in hs]
    else:
        vs = hs
    v_norms = [np.linalg.norm(v) for v in vs]
    if any(n <= NORM_EPS for n in v_norms):
        raise DegenerateLabelError("a candidate embedding coincides with the candidate mean")
    z_cand = np.stack([v / n for v, n in zip(vs, v_norms)])

    # graph side forward (parallel-safe: state is read-only here)
    caches = _map_samples(lambda g: _graph_forward(g, state, gnn), graphs, threads)
    z_graph = np.stack([c.z for c in caches])
    z_text = z_cand[classes]

    loss, d_logits_soft = _contrastive_loss_softmax(z_graph, z_text, state.tau)
    b = len(batch)
    d_s = d_logits_soft.copy()
    d_s[np.arange(b), np.arange(b)] -= 1.0 / (b * state.tau)

    d_zg = d_s @ z_text
    d_zt = d_s.T @ z_graph

    # graph blocks, accumulated in batch order
    pg_shape = state.graph_prompt.tokens.shape
    d_pg = np.zeros(pg_shape)
    d_w = np.zeros_like(state.w)
    d_b = np.zeros_like(state.b)
    parts = _map_samples(
        lambda ic: _graph_backward(caches[ic], state, d_zg[ic]), list(range(b)), threads
    )
    for part_pg, part_w, part_b in parts:
        d_pg += part_pg
        d_w += part_w
        d_b += part_b

    # text blocks: batch rows fold onto their candidate, then through
    # normalization and the centering mean
    d_zc = np.zeros_like(z_cand)
    for i, c in enumerate(classes):
        d_zc[c] += d_zt[i]
    d_vs = [
        (d_zc[c] - np.dot(z_cand[c], d_zc[c]) * z_cand[c]) / v_norms[c] for c in range(n_cand)
    ]
    if centered:
        mean_dv = np.mean(d_vs, axis=0)
        d_hs = [dv - mean_dv for dv in d_vs]
    else:
        d_hs = d_vs
    d_pt_row = sum(dh / (state.text_prompt.num_tokens + k) for dh, k in zip(d_hs, ks))
    d_pt = np.tile(d_pt_row, (state.text_prompt.num_tokens, 1))

    sims = z_graph @ z_cand.T
    return loss, Grads(graph_prompt=d_pg, text_prompt=d_pt, w=d_w, b=d_b), sims


def baseline_loss_and_grads(batch, state: PromptState, gnn: FrozenGnn, threads: int = 1):
    """Softmax cross-entropy through readout -> linear head; trains prompt + head."""
    if state.head is None:
        raise ValueError("baseline mode needs a task head on the state")
    graphs = [g for g, _ in batch]
    classes = np.array([c for _, c in batch])
    caches = _map_samples(lambda g: _graph_forward_unprojected(g, state, gnn), graphs, threads)
    feats = np.stack([c.readout for c in caches])
    logits = feats @ state.head.T + state.head_bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    b = len(batch)
    loss = -float(np.mean(log_p[np.arange(b), classes]))

    d_logits = np.exp(log_p) / b
    d_logits[np.arange(b), classes] -= 1.0 / b
    d_head = d_logits.T @ feats
    d_head_bias = d_logits.sum(axis=0)
    d_feats = d_logits @ state.head

    d_pg = np.zeros_like(state.graph_prompt.tokens)
    for i, cache in enumerate(caches):
        d_h2 = np.tile(d_feats[i] / cache.num_rows, (cache.num_rows, 1))
        d_xm = gcn_backward_features(cache.tape, d_h2)
        d_pg += d_xm[: state.graph_prompt.num_tokens]

    grads = Grads(
        graph_prompt=d_pg,
        text_prompt=np.zeros_like(state.text_prompt.tokens),
        w=np.zeros_like(state.w),
        b=np.zeros_like(state.b),
        head=d_head,
        head_bias=d_head_bias,
    )
    return loss, grads, logits


@dataclass
class _PlainCache:
    tape: object
    num_rows: int
    readout: np.ndarray


def _graph_forward_unprojected(graph, state, gnn) -> _PlainCache:
    pg = build_prompted(graph, state.graph_prompt, state.prompt_style)
    a_hat = normalize_adjacency(pg.adjacency())
    h2, tape = gcn_forward(a_hat, pg.features, gnn)
    return _PlainCache(tape=tape, num_rows=h2.shape[0], readout=readout_mean(h2))


# ---------------------------------------------------------------------------
# optimizer


def adam_step(params, grads, moments, t, lr, beta1=0.9, beta2=0.999, eps=1e-8,
              weight_decay=0.0):
    """One bias-corrected adaptive-moment update over a dict of arrays.

    ``moments`` maps each name to (m, v); pass {} on the first call.
    Returns (new_params, new_moments); inputs are not mutated.
    """
    if t < 1:
        raise ValueError("step counter starts at 1")
    new_params, new_moments = {}, {}
    for name, p in params.items():
        g = grads[name]
        if weight_decay:
            g = g + weight_decay * p
        m_prev, v_prev = moments.get(name, (np.zeros_like(p), np.zeros_like(p)))
        m = beta1 * m_prev + (1.0 - beta1) * g
        v = beta2 * v_prev + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_moments[name] = (m, v)
    return new_params, new_moments


# ---------------------------------------------------------------------------
# training loops


def init_prompt_state(
    feature_dim: int,
    gnn: FrozenGnn,
    store,
    config: TrainConfig,
    num_classes: int | None = None,
    phrase_encoder=None,
) -> PromptState:
    """Fresh parameters: Kaiming-uniform projector, zero bias, seeded prompts."""
    d_t = store.dim if hasattr(store, "dim") else store.d_t
    graph_prompt = init_graph_prompt(
        config.n_g,
        feature_dim,
        config.seed,
        std_multiplier=config.init_std_multiplier,
        delta_inner=config.delta_inner,
        delta_cross=config.delta_cross,
    )
    text_prompt = init_text_prompt(
        config.prompt_phrase, config.n_t, d_t, phrase_encoder or store, config.seed
    )
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xA11]))
    bound = np.sqrt(6.0 / gnn.out_dim)
    w = rng.uniform(-bound, bound, size=(d_t, gnn.out_dim))
    b = np.zeros(d_t)
    head = head_bias = None
    style = "improved"
    if config.mode != MODE_MORPHER:
        if num_classes is None:
            raise ValueError("baseline modes need the class count")
        hb = np.sqrt(6.0 / gnn.out_dim)
        head = rng.uniform(-hb, hb, size=(num_classes, gnn.out_dim))
        head_bias = np.zeros(num_classes)
        style = "aio" if config.mode == MODE_AIO_HEAD else "improved"
    return PromptState(graph_prompt, text_prompt, w, b, tau=config.tau,
                       prompt_style=style, head=head, head_bias=head_bias)


def _state_params(state: PromptState, mode: str):
    if mode == MODE_MORPHER:
        return {
            "graph_prompt": state.graph_prompt.tokens,
            "text_prompt": state.text_prompt.tokens,
            "w": state.w,
            "b": state.b,
        }
    return {
        "graph_prompt": state.graph_prompt.tokens,
        "head": state.head,
        "head_bias": state.head_bias,
    }


def _apply_params(state: PromptState, params) -> PromptState:
    new = state.copy()
    new.graph_prompt.tokens = params["graph_prompt"]
    if "text_prompt" in params:
        new.text_prompt.tokens = params["text_prompt"]
        new.w = params["w"]
        new.b = params["b"]
    else:
        new.head = params["head"]
        new.head_bias = params["head_bias"]
    return new


def _grad_dict(grads: Grads, mode: str):
    if mode == MODE_MORPHER:
        return {
            "graph_prompt": grads.graph_prompt,
            "text_prompt": grads.text_prompt,
            "w": grads.w,
            "b": grads.b,
        }
    return {"graph_prompt": grads.graph_prompt, "head": grads.head, "head_bias": grads.head_bias}


def _batches(n: int, batch_size: int, rng) -> list[list[int]]:
    if batch_size <= 0 or batch_size >= n:
        return [list(range(n))]
    order = list(rng.permutation(n))
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def predict_classes(graphs, state, gnn, store, candidate_texts, threads: int = 1):
    """Candidate index per graph under the trained similarity rule."""
    z_texts = candidate_text_vectors(candidate_texts, state, store)
    zs = _map_samples(lambda g: graph_branch(g, state, gnn), list(graphs), threads)
    return [rank_candidates(z, z_texts) for z in zs]


def train_morpher(
    bundle: DatasetBundle,
    gnn: FrozenGnn,
    store,
    config: TrainConfig,
    phrase_encoder=None,
    epoch_callback=None,
    initial_state: PromptState | None = None,
):
    """Contrastive prompt training over the bundle's train split.

    Each recorded epoch describes the state entering it (so row 0 is the
    untrained state); the update happens at the end of the epoch.  With a
    validation split, the returned state is the one with the best
    validation accuracy (ties keep the earlier epoch); without one, the
    final state is returned and callers rely on the per-epoch records.
    """
    if not bundle.train_idx:
        raise ValueError("train split is empty")
    if config.mode != MODE_MORPHER:
        raise ValueError(f"train_morpher drives mode {MODE_MORPHER!r} only")
    train_classes = sorted({bundle.labels[i] for i in bundle.train_idx})
    candidate_texts = [bundle.label_texts[c] for c in train_classes]
    class_to_cand = {c: i for i, c in enumerate(train_classes)}
    if hasattr(store, "covers") and not store.covers(candidate_texts):
        raise ValueError("store does not cover the training label vocabulary")

    train = [(bundle.graphs[i], class_to_cand[bundle.labels[i]]) for i in bundle.train_idx]
    val = [(bundle.graphs[i], bundle.labels[i]) for i in bundle.val_idx]

    if initial_state is not None:
        state = initial_state.copy()
    else:
        state = init_prompt_state(bundle.feature_dim, gnn, store, config,
                                  phrase_encoder=phrase_encoder)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xBA7C]))
    history = TrainHistory()
    moments: dict = {}
    step = 0
    best_acc, best_state = -1.0, None

    for epoch in range(config.epochs):
        if epoch_callback is not None:
            epoch_callback(epoch, state)
        if val:
            preds = predict_classes(
                [g for g, _ in val], state, gnn, store, candidate_texts,
                threads=config.threads,
            )
            acc = float(np.mean([train_classes[p] == y for p, (_, y) in zip(preds, val)]))
            history.val_acc.append(acc)
            if acc > best_acc:
                best_acc, best_state = acc, state.copy()
                history.best_epoch = epoch
        else:
            history.val_acc.append(float("nan"))
        epoch_loss, n_correct, n_seen = 0.0, 0, 0
        for batch_idx in _batches(len(train), config.batch_size, rng):
            batch = [train[i] for i in batch_idx]
            loss, grads, sims = backward_all(
                batch, state, gnn, store, candidate_texts, threads=config.threads
            )
            epoch_loss += loss * len(batch)
            preds = np.argmax(sims, axis=1)
            n_correct += int(np.sum(preds == np.array([c for _, c in batch])))
            n_seen += len(batch)
            step += 1
            params, moments = adam_step(
                _state_params(state, config.mode),
                _grad_dict(grads, config.mode),
                moments,
                step,
                config.lr,
                config.beta1,
                config.beta2,
                config.eps,
                config.weight_decay,
            )
            state = _apply_params(state, params)
        history.losses.append(epoch_loss / n_seen)
        history.train_acc.append(n_correct / n_seen)
    return (best_state if best_state is not None else state), history


def train_baseline(bundle: DatasetBundle, gnn: FrozenGnn, config: TrainConfig,
                   epoch_callback=None, initial_state: PromptState | None = None):
    """Single-modal path: prompted graph -> encoder -> readout -> task head."""
    if not bundle.train_idx:
        raise ValueError("train split is empty")
    if config.mode == MODE_MORPHER:
        raise ValueError("train_baseline drives the head modes only")
    train = [(bundle.graphs[i], bundle.labels[i]) for i in bundle.train_idx]
    val = [(bundle.graphs[i], bundle.labels[i]) for i in bundle.val_idx]

    if initial_state is not None:
        state = initial_state.copy()
    else:
        # the text side is inert in head modes; a 1-wide stub keeps state shapes valid
        state = init_prompt_state(bundle.feature_dim, gnn, _WidthOnlyStore(1), config,
                                  num_classes=bundle.num_classes)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xBA7C]))
    history = TrainHistory()
    moments: dict = {}
    step = 0
    best_acc, best_state = -1.0, None

    for epoch in range(config.epochs):
        if epoch_callback is not None:
            epoch_callback(epoch, state)
        if val:
            acc = float(np.mean([
                int(np.argmax(_baseline_logits(g, state, gnn))) == y for g, y in val
            ]))
            history.val_acc.append(acc)
            if acc > best_acc:
                best_acc, best_state = acc, state.copy()
                history.best_epoch = epoch
        else:
            history.val_acc.append(float("nan"))
        epoch_loss, n_correct, n_seen = 0.0, 0, 0
        for batch_idx in _batches(len(train), config.batch_size, rng):
            batch = [train[i] for i in batch_idx]
            loss, grads, logits = baseline_loss_and_grads(
                batch, state, gnn, threads=config.threads
            )
            epoch_loss += loss * len(batch)
            n_correct += int(np.sum(np.argmax(logits, axis=1) == [c for _, c in batch]))
            n_seen += len(batch)
            step += 1
            params, moments = adam_step(
                _state_params(state, config.mode),
                _grad_dict(grads, config.mode),
                moments,
                step,
                config.lr,
                config.beta1,
                config.beta2,
                config.eps,
                config.weight_decay,
            )
            state = _apply_params(state, params)
        history.losses.append(epoch_loss / n_seen)
        history.train_acc.append(n_correct / n_seen)
    return (best_state if best_state is not None else state), history


def _baseline_logits(graph, state, gnn):
    cache = _graph_forward_unprojected(graph, state, gnn)
    return state.head @ cache.readout + state.head_bias


class _WidthOnlyStore:
    """Stands in for a store when baseline modes never touch the text side."""

    def __init__(self, dim):
        self.dim = dim

    def try_encode(self, text):
        return None


# ---------------------------------------------------------------------------
# state files


def save_prompt_state(state: PromptState, path) -> None:
    gp, tp = state.graph_prompt, state.text_prompt
    n_g, d = gp.tokens.shape
    n_t, d_t = tp.tokens.shape
    d_g = state.w.shape[1]
    has_head = state.head is not None
    num_classes = state.head.shape[0] if has_head else 0
    with open(path, "wb") as fh:
        fh.write(MPST_MAGIC)
        fh.write(struct.pack("<IIIIII", MPST_VERSION, n_g, d, n_t, d_t, d_g))
        fh.write(struct.pack(
            "<dddd", gp.delta_inner, gp.delta_cross, gp.init_std_multiplier, state.tau
        ))
        fh.write(struct.pack("<BBI", state.prompt_style == "aio", has_head, num_classes))
        for arr in (gp.tokens, tp.tokens, state.w, state.b):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        if has_head:
            fh.write(np.ascontiguousarray(state.head, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(state.head_bias, dtype="<f8").tobytes())


def load_prompt_state(path) -> PromptState:
    with open(path, "rb") as fh:
        if fh.read(4) != MPST_MAGIC:
            raise StateFormatError(f"{path}: bad magic")
        version, n_g, d, n_t, d_t, d_g = struct.unpack("<IIIIII", fh.read(24))
        if version != MPST_VERSION:
            raise StateFormatError(f"{path}: unsupported version {version}")
        delta_inner, delta_cross, mult, tau = struct.unpack("<dddd", fh.read(32))
        is_aio, has_head, num_classes = struct.unpack("<BBI", fh.read(6))
        body = fh.read()
    sizes = [n_g * d, n_t * d_t, d_t * d_g, d_t]
    if has_head:
        sizes += [num_classes * d_g, num_classes]
    if len(body) != sum(sizes) * 8:
        raise StateFormatError(f"{path}: truncated payload")
    flat = np.frombuffer(body, dtype="<f8")
    arrays, off = [], 0
    for size in sizes:
        arrays.append(flat[off : off + size].copy())
        off += size
    gp = GraphPrompt(arrays[0].reshape(n_g, d), delta_inner, delta_cross, mult)
    tp = TextPrompt(arrays[1].reshape(n_t, d_t))
    head = arrays[4].reshape(num_classes, d_g) if has_head else None
    head_bias = arrays[5] if has_head else None
    return PromptState(
        gp, tp, arrays[2].reshape(d_t, d_g), arrays[3], tau=tau,
        prompt_style="aio" if is_aio else "improved", head=head, head_bias=head_bias,
    )
