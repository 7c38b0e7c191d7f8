"""Central finite-difference verification of every analytic gradient block.

Edge structure is thresholded and therefore non-differentiable; training
recomputes it each forward but lets gradients flow only through the
feature pathway.  The difference quotients here accordingly hold each
sample's prompted structure fixed at the base point while the parameter
blocks vary, which is exactly the function the analytic gradients
differentiate.  Instances whose layer-1 pre-activations sit too close to
the ReLU kink are resampled so the quotients stay clean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .align import (
    MODE_MORPHER,
    PromptState,
    backward_all,
    baseline_loss_and_grads,
    contrastive_loss,
)
from .gnn import FrozenGnn, gcn_forward, init_gnn_random, normalize_adjacency, readout_mean
from .graphs import make_graph
from .prompts import GraphPrompt, build_prompted
from .text import TextEmbeddingStore, TextPrompt, pseudo_encode

BLOCKS = ("graph_prompt", "text_prompt", "w", "b")
HEAD_BLOCKS = ("graph_prompt", "head", "head_bias")

RELU_MARGIN = 1e-3  # min |pre-activation| accepted at the base point


@dataclass
class _Instance:
    state: PromptState
    gnn: FrozenGnn
    store: TextEmbeddingStore
    classes: list[int]
    cand_tokens: list[np.ndarray]
    pinned: list[tuple[np.ndarray, np.ndarray]]  # (a_hat, input features) per sample
    graphs: list


def _random_instance(entropy, mode: str = MODE_MORPHER) -> _Instance | None:
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    d = int(rng.integers(4, 7))
    n_g = int(rng.integers(2, 4))
    n_t = 2
    d_t = int(rng.integers(5, 8))
    hidden = 5
    d_g = 4
    n_cand = int(rng.integers(2, 4))
    batch = 4

    gnn = init_gnn_random(d, hidden, d_g, int(rng.integers(1 << 31)))
    # unequal token counts per label: with equal counts the candidate
    # centering cancels the text prompt exactly and its gradient is zero
    enc_seed = int(rng.integers(1 << 31))
    texts = [f"label {i}" for i in range(n_cand)]
    cand_tokens = [
        pseudo_encode(t, d_t, int(rng.integers(2, 5)), enc_seed) for t in texts
    ]
    store = TextEmbeddingStore(dict(zip(texts, cand_tokens)))

    graphs = []
    for _ in range(batch):
        n = int(rng.integers(5, 9))
        edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.4]
        feats = rng.standard_normal((n, d))
        graphs.append(make_graph(n, edges, feats))
    classes = [int(rng.integers(n_cand)) for _ in range(batch)]

    prompt = GraphPrompt(0.5 * rng.standard_normal((n_g, d)))
    text_prompt = TextPrompt(0.3 * rng.standard_normal((n_t, d_t)))
    w = 0.5 * rng.standard_normal((d_t, d_g))
    b = 0.1 * rng.standard_normal(d_t)
    head = 0.5 * rng.standard_normal((n_cand, d_g)) if mode != MODE_MORPHER else None
    head_b = 0.1 * rng.standard_normal(n_cand) if mode != MODE_MORPHER else None
    state = PromptState(prompt, text_prompt, w, b, tau=0.5, prompt_style="improved",
                        head=head, head_bias=head_b)

    pinned = []
    for g in graphs:
        pg = build_prompted(g, prompt, state.prompt_style)
        a_hat = normalize_adjacency(pg.adjacency())
        z1 = a_hat @ pg.features @ gnn.w1
        if np.min(np.abs(z1)) < RELU_MARGIN:
            return None  # too close to the kink for clean quotients
        pinned.append((a_hat, g.features))
    return _Instance(state, gnn, store, classes, cand_tokens, pinned, graphs)


def _pinned_morpher_loss(inst: _Instance, pg_tokens, pt_tokens, w, b) -> float:
    """Training loss as a function of raw parameter arrays, structure fixed."""
    hs = []
    for toks in inst.cand_tokens:
        total = pt_tokens.sum(axis=0) + toks.sum(axis=0)
        hs.append(total / (pt_tokens.shape[0] + toks.shape[0]))
    if len(hs) >= 2:
        mu = np.mean(hs, axis=0)
        vs = [h - mu for h in hs]
    else:
        vs = hs
    z_cand = np.stack([v / np.linalg.norm(v) for v in vs])

    zs = []
    for a_hat, feats in inst.pinned:
        x_m = np.vstack([pg_tokens, feats])
        h2, _ = gcn_forward(a_hat, x_m, inst.gnn)
        h = readout_mean(h2)
        u = h / np.linalg.norm(h)
        zs.append(np.tanh(w @ u + b))
    z_graph = np.stack(zs)
    return contrastive_loss(z_graph, z_cand[inst.classes], inst.state.tau)


def _pinned_head_loss(inst: _Instance, pg_tokens, head, head_bias) -> float:
    feats_out = []
    for a_hat, feats in inst.pinned:
        x_m = np.vstack([pg_tokens, feats])
        h2, _ = gcn_forward(a_hat, x_m, inst.gnn)
        feats_out.append(readout_mean(h2))
    logits = np.stack(feats_out) @ head.T + head_bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    idx = np.arange(len(inst.classes))
    return -float(np.mean(log_p[idx, inst.classes]))


def _fd_block(loss_fn, arrays: dict, name: str, step: float) -> np.ndarray:
    """Central difference gradient of loss_fn w.r.t. one named array."""
    base = arrays[name]
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    g_flat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = loss_fn(**arrays)
        flat[i] = orig - step
        f_minus = loss_fn(**arrays)
        flat[i] = orig
        g_flat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad


def _worst_rel_err(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-8) -> float:
    worst = 0.0
    for a, f in zip(analytic.reshape(-1), numeric.reshape(-1)):
        denom = max(abs(a), abs(f))
        if denom < atol:
            continue
        worst = max(worst, abs(a - f) / denom)
    return worst


def check_instance(entropy, step: float = 1e-5) -> dict[str, float] | None:
    """Worst relative error per block on one random instance, or None to retry."""
    inst = _random_instance(entropy)
    if inst is None:
        return None
    state = inst.state
    texts = [f"label {i}" for i in range(len(inst.cand_tokens))]
    batch = list(zip(inst.graphs, inst.classes))
    _, grads, _ = backward_all(batch, state, inst.gnn, inst.store, texts)

    arrays = {
        "pg_tokens": state.graph_prompt.tokens.copy(),
        "pt_tokens": state.text_prompt.tokens.copy(),
        "w": state.w.copy(),
        "b": state.b.copy(),
    }

    def loss_fn(pg_tokens, pt_tokens, w, b):
        return _pinned_morpher_loss(inst, pg_tokens, pt_tokens, w, b)

    analytic = {
        "pg_tokens": grads.graph_prompt,
        "pt_tokens": grads.text_prompt,
        "w": grads.w,
        "b": grads.b,
    }
    out = {}
    for fd_name, block in zip(("pg_tokens", "pt_tokens", "w", "b"), BLOCKS):
        numeric = _fd_block(loss_fn, arrays, fd_name, step)
        out[block] = _worst_rel_err(analytic[fd_name], numeric)
    return out


def check_head_instance(entropy, step: float = 1e-5) -> dict[str, float] | None:
    """Same check for the single-modal head path (prompt + head blocks)."""
    inst = _random_instance(entropy, mode="improved_aio_head")
    if inst is None:
        return None
    state = inst.state
    batch = list(zip(inst.graphs, inst.classes))
    _, grads, _ = baseline_loss_and_grads(batch, state, inst.gnn)

    arrays = {
        "pg_tokens": state.graph_prompt.tokens.copy(),
        "head": state.head.copy(),
        "head_bias": state.head_bias.copy(),
    }

    def loss_fn(pg_tokens, head, head_bias):
        return _pinned_head_loss(inst, pg_tokens, head, head_bias)

    analytic = {
        "pg_tokens": grads.graph_prompt,
        "head": grads.head,
        "head_bias": grads.head_bias,
    }
    out = {}
    for fd_name, block in zip(("pg_tokens", "head", "head_bias"), HEAD_BLOCKS):
        numeric = _fd_block(loss_fn, arrays, fd_name, step)
        out[block] = _worst_rel_err(analytic[fd_name], numeric)
    return out


def run_gradcheck(num_instances: int = 20, seed: int = 0, step: float = 1e-5,
                  checker=check_instance) -> dict[str, float]:
    """Worst relative error per parameter block over seeded random instances."""
    worst: dict[str, float] = {}
    done = 0
    attempt = 0
    while done < num_instances:
        result = checker([seed, done, attempt], step=step)
        attempt += 1
        if result is None:
            if attempt > 50 * (done + 1):
                raise RuntimeError("could not sample a kink-free instance")
            continue
        for block, err in result.items():
            worst[block] = max(worst.get(block, 0.0), err)
        done += 1
        attempt = 0
    return worst
