"""Inference rule, classification metrics, cluster quality, and protocol drivers."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass

import numpy as np

from .align import (
    TrainConfig,
    TrainHistory,
    _graph_forward_unprojected,
    candidate_text_vectors,
    graph_branch,
    rank_candidates,
    train_morpher,
)
from .gnn import FrozenGnn
from .graphs import Graph, ZeroShotSpec, generate_zero_dataset

ZERO_CURVE_FIELDS = ("acc_train2", "acc_train3", "acc_test_zero")


def predict(graph: Graph, state, gnn: FrozenGnn, store, label_texts) -> int:
    """Most similar candidate label for one graph; ties go to the lower index."""
    z_texts = candidate_text_vectors(list(label_texts), state, store)
    return rank_candidates(graph_branch(graph, state, gnn), z_texts)


def predict_many(graphs, state, gnn, store, label_texts) -> list[int]:
    z_texts = candidate_text_vectors(list(label_texts), state, store)
    return [rank_candidates(graph_branch(g, state, gnn), z_texts) for g in graphs]


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    confusion: list[list[int]]
    silhouette: float | None = None
    trainable_params: int | None = None
    runtime_seconds: float | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)


def metrics(preds, golds, num_classes: int) -> EvalReport:
    """Accuracy, per-class precision/recall/F1, macro-F1, confusion matrix.

    Classes with a zero precision+recall denominator get F1 = 0; macro-F1
    is the unweighted mean over all classes.
    """
    preds = list(preds)
    golds = list(golds)
    if not preds or len(preds) != len(golds):
        raise ValueError("predictions and golds must be nonempty and equal length")
    conf = np.zeros((num_classes, num_classes), dtype=int)
    for p, g in zip(preds, golds):
        conf[g, p] += 1
    accuracy = float(np.trace(conf)) / len(preds)
    precision, recall, f1 = [], [], []
    for c in range(num_classes):
        tp = conf[c, c]
        pred_c = conf[:, c].sum()
        gold_c = conf[c, :].sum()
        p = tp / pred_c if pred_c else 0.0
        r = tp / gold_c if gold_c else 0.0
        precision.append(float(p))
        recall.append(float(r))
        f1.append(2 * p * r / (p + r) if (p + r) else 0.0)
    return EvalReport(
        accuracy=accuracy,
        macro_f1=float(np.mean(f1)),
        precision=precision,
        recall=recall,
        f1=f1,
        confusion=conf.tolist(),
    )


def silhouette(embeddings: np.ndarray, labels) -> float:
    """Mean silhouette coefficient under Euclidean distance.

    Per point: (b - a) / max(a, b) with a the mean distance to its own
    cluster and b the smallest mean distance to another cluster.  Points in
    singleton clusters score 0 by convention.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] != labels.shape[0]:
        raise ValueError("embeddings and labels disagree in length")
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least two clusters")
    diff = x[:, None, :] - x[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    scores = np.zeros(x.shape[0])
    masks = {c: labels == c for c in uniq}
    for i in range(x.shape[0]):
        own = masks[labels[i]]
        n_own = own.sum()
        if n_own == 1:
            continue  # singleton stays 0
        a = dist[i, own].sum() / (n_own - 1)
        b = min(dist[i, masks[c]].mean() for c in uniq if c != labels[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


def count_trainable(state) -> int:
    """Total learnable scalars: both prompts, the projector, and any head."""
    n = state.graph_prompt.tokens.size + state.text_prompt.tokens.size
    n += state.w.size + state.b.size
    if state.head is not None:
        n += state.head.size + state.head_bias.size
    return n


def evaluate_split(bundle, indices, state, gnn, store, with_silhouette=False) -> EvalReport:
    """Predict a split against the full label vocabulary and score it."""
    start = time.perf_counter()
    graphs = [bundle.graphs[i] for i in indices]
    golds = [bundle.labels[i] for i in indices]
    z_texts = candidate_text_vectors(list(bundle.label_texts), state, store)
    zs = [graph_branch(g, state, gnn) for g in graphs]
    preds = [rank_candidates(z, z_texts) for z in zs]
    report = metrics(preds, golds, bundle.num_classes)
    if with_silhouette and len(set(golds)) >= 2:
        report.silhouette = silhouette(np.stack(zs), golds)
    report.trainable_params = count_trainable(state)
    report.runtime_seconds = time.perf_counter() - start
    return report


def evaluate_split_baseline(bundle, indices, state, gnn, with_silhouette=False) -> EvalReport:
    """Score a split under the single-modal head (argmax of head logits)."""
    start = time.perf_counter()
    golds = [bundle.labels[i] for i in indices]
    feats, preds = [], []
    for i in indices:
        cache = _graph_forward_unprojected(bundle.graphs[i], state, gnn)
        feats.append(cache.readout)
        preds.append(int(np.argmax(state.head @ cache.readout + state.head_bias)))
    report = metrics(preds, golds, bundle.num_classes)
    if with_silhouette and len(set(golds)) >= 2:
        report.silhouette = silhouette(np.stack(feats), golds)
    report.trainable_params = count_trainable(state)
    report.runtime_seconds = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# unseen-class protocol


def zero_shot_protocol(spec: ZeroShotSpec, gnn: FrozenGnn, store, config: TrainConfig):
    """Train on the two seen classes; track three accuracy curves per epoch.

    acc_train2: train graphs scored against the two seen labels only.
    acc_train3: train graphs scored against all three labels.
    acc_test_zero: unseen-class test graphs scored against all three labels.
    Curves describe the state entering each epoch, so row 0 is untrained.
    """
    bundle = generate_zero_dataset(spec)
    seen_texts = list(bundle.label_texts[:2])
    all_texts = list(bundle.label_texts)
    if hasattr(store, "covers") and not store.covers(all_texts):
        raise ValueError("store must cover all three labels, including the unseen one")
    train_graphs = [bundle.graphs[i] for i in bundle.train_idx]
    train_golds = [bundle.labels[i] for i in bundle.train_idx]
    test_graphs = [bundle.graphs[i] for i in bundle.test_idx]
    test_golds = [bundle.labels[i] for i in bundle.test_idx]

    curves: dict[str, list[float]] = {k: [] for k in ZERO_CURVE_FIELDS}

    def record(epoch, state):
        z2 = candidate_text_vectors(seen_texts, state, store)
        z3 = candidate_text_vectors(all_texts, state, store)
        z_train = [graph_branch(g, state, gnn) for g in train_graphs]
        z_test = [graph_branch(g, state, gnn) for g in test_graphs]
        pred2 = [rank_candidates(z, z2) for z in z_train]
        pred3 = [rank_candidates(z, z3) for z in z_train]
        predz = [rank_candidates(z, z3) for z in z_test]
        curves["acc_train2"].append(float(np.mean([p == y for p, y in zip(pred2, train_golds)])))
        curves["acc_train3"].append(float(np.mean([p == y for p, y in zip(pred3, train_golds)])))
        curves["acc_test_zero"].append(float(np.mean([p == y for p, y in zip(predz, test_golds)])))

    state, history = train_morpher(bundle, gnn, store, config, epoch_callback=record)
    history.curves = curves
    return state, history


def write_zero_curves_csv(history: TrainHistory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch",) + ZERO_CURVE_FIELDS)
        for e in range(len(history.curves[ZERO_CURVE_FIELDS[0]])):
            writer.writerow(
                [e] + [f"{history.curves[k][e]:.17g}" for k in ZERO_CURVE_FIELDS]
            )


def write_history_csv(history: TrainHistory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "loss", "train_acc", "val_acc"))
        for e in range(len(history)):
            writer.writerow([
                e,
                f"{history.losses[e]:.17g}",
                f"{history.train_acc[e]:.17g}",
                f"{history.val_acc[e]:.17g}",
            ])
