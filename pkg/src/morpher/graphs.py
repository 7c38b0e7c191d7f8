"""Graph containers, dataset IO, ego-graph extraction, and synthetic generators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

GRAPH_TASK = "graph"
NODE_TASK = "node"
EDGE_TASK = "edge"
_TASK_LEVELS = (GRAPH_TASK, NODE_TASK, EDGE_TASK)


class DatasetFormatError(ValueError):
    """Malformed dataset file (bad JSON, bad labels file, bad edge list)."""


class GraphInvariantError(ValueError):
    """A graph violates a structural invariant (self-loop, bad index, bad feature)."""


class DimensionError(ValueError):
    """Feature dimensions disagree and no padding was requested."""


class LabelError(ValueError):
    """A class index falls outside the label vocabulary."""


def _canon_edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """Undirected graph with dense per-node feature rows.

    Edges are stored as canonical (min, max) index pairs; ``node_ids``
    optionally maps local indices back to a source graph (ego-graph
    provenance, centers first).
    """

    num_nodes: int
    edges: frozenset[tuple[int, int]]
    features: np.ndarray
    node_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.num_nodes < 1:
            raise GraphInvariantError("graph needs at least one node")
        for u, v in self.edges:
            if u == v:
                raise GraphInvariantError(f"self-loop on node {u}")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise GraphInvariantError(f"edge ({u}, {v}) out of range for n={self.num_nodes}")
            if u > v:
                raise GraphInvariantError(f"edge ({u}, {v}) not in canonical order")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.num_nodes:
            raise GraphInvariantError(
                f"feature matrix shape {feats.shape} does not match n={self.num_nodes}"
            )
        if not np.all(np.isfinite(feats)):
            raise GraphInvariantError("non-finite feature entry")
        feats = feats.copy()
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        if self.node_ids is not None and len(self.node_ids) != self.num_nodes:
            raise GraphInvariantError("node_ids length does not match node count")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix."""
        a = np.zeros((self.num_nodes, self.num_nodes))
        for u, v in self.edges:
            a[u, v] = 1.0
            a[v, u] = 1.0
        return a

    def neighbors(self) -> list[set[int]]:
        adj: list[set[int]] = [set() for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj


def make_graph(num_nodes, edges, features, node_ids=None) -> Graph:
    """Build a Graph from any edge-pair iterable, canonicalizing order."""
    canon = frozenset(_canon_edge(int(u), int(v)) for u, v in edges)
    return Graph(num_nodes, canon, np.asarray(features, dtype=np.float64),
                 tuple(node_ids) if node_ids is not None else None)


@dataclass
class DatasetBundle:
    """Labeled graphs, their text vocabulary, and disjoint split index lists."""

    graphs: list[Graph]
    labels: list[int]
    label_texts: list[str]
    train_idx: list[int] = field(default_factory=list)
    val_idx: list[int] = field(default_factory=list)
    test_idx: list[int] = field(default_factory=list)
    task_level: str = GRAPH_TASK

    def __post_init__(self):
        if len(self.graphs) != len(self.labels):
            raise LabelError("labels and graphs differ in length")
        c = len(self.label_texts)
        for y in self.labels:
            if not (0 <= y < c):
                raise LabelError(f"class index {y} outside [0, {c})")
        dims = {g.feature_dim for g in self.graphs}
        if len(dims) > 1:
            raise DimensionError(f"mixed feature dimensions in bundle: {sorted(dims)}")
        if self.task_level not in _TASK_LEVELS:
            raise ValueError(f"unknown task level {self.task_level!r}")
        seen: set[int] = set()
        for name, idx in (("train", self.train_idx), ("val", self.val_idx), ("test", self.test_idx)):
            for i in idx:
                if not (0 <= i < len(self.graphs)):
                    raise ValueError(f"{name} split index {i} out of range")
                if i in seen:
                    raise ValueError(f"index {i} appears in more than one split")
                seen.add(i)

    @property
    def num_classes(self) -> int:
        return len(self.label_texts)

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].feature_dim

    def subset(self, indices: list[int]) -> list[tuple[Graph, int]]:
        return [(self.graphs[i], self.labels[i]) for i in indices]


@dataclass(frozen=True)
class ZeroShotSpec:
    """Recipe for the synthetic unseen-class dataset built from a real network.

    Two feature-pure train classes plus a mixed-feature test class whose
    label never appears in training.
    """

    base_edges: tuple[tuple[int, int], ...]
    label_texts: tuple[str, str, str]
    seed: int
    num_samples: int = 120
    hops: int = 2
    train_per_class: int = 10
    num_test: int = 100

    def __post_init__(self):
        if len(self.label_texts) != 3:
            raise ValueError("exactly 3 label texts required (two seen, one unseen)")
        if 2 * self.train_per_class + self.num_test != self.num_samples:
            raise ValueError("train/test counts must add up to num_samples")


# ---------------------------------------------------------------------------
# dataset files


def load_labels(path) -> list[str]:
    """Read the label vocabulary: a JSON array of C strings, index = class id."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list) or not all(isinstance(t, str) for t in data) or not data:
        raise DatasetFormatError(f"{path}: labels file must be a nonempty JSON array of strings")
    return data


def load_dataset(data_path, labels_path, pad_to: int | None = None) -> DatasetBundle:
    """Load a JSON-lines graph file plus its sibling labels file.

    Each line holds one graph: {"n": int, "edges": [[u,v],...],
    "x": [[...],...], "y": int}.  With ``pad_to`` set, feature rows are
    zero-padded on the right to that width; otherwise all graphs must
    share one feature dimension.  Splits start out empty except test,
    which covers everything.
    """
    label_texts = load_labels(labels_path)
    graphs: list[Graph] = []
    labels: list[int] = []
    with open(data_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                n = int(rec["n"])
                edges = [(int(u), int(v)) for u, v in rec["edges"]]
                x = np.asarray(rec["x"], dtype=np.float64)
                y = int(rec["y"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetFormatError(f"{data_path}: line {lineno}: {exc}") from exc
            if x.ndim == 1:
                x = x.reshape(n, -1)
            if pad_to is not None:
                if x.shape[1] > pad_to:
                    raise DimensionError(
                        f"{data_path}: line {lineno}: d={x.shape[1]} exceeds pad_to={pad_to}"
                    )
                x = np.pad(x, ((0, 0), (0, pad_to - x.shape[1])))
            try:
                graphs.append(make_graph(n, edges, x))
            except GraphInvariantError as exc:
                raise GraphInvariantError(f"{data_path}: line {lineno}: {exc}") from exc
            if not (0 <= y < len(label_texts)):
                raise LabelError(
                    f"{data_path}: line {lineno}: class {y} outside [0, {len(label_texts)})"
                )
            labels.append(y)
    if not graphs:
        raise DatasetFormatError(f"{data_path}: no graphs")
    dims = {g.feature_dim for g in graphs}
    if len(dims) > 1:
        raise DimensionError(
            f"{data_path}: inconsistent feature dimensions {sorted(dims)}; set pad_to to unify"
        )
    return DatasetBundle(graphs, labels, label_texts, test_idx=list(range(len(graphs))))


def save_dataset(bundle: DatasetBundle, data_path, labels_path) -> None:
    """Write a bundle back out in the JSON-lines + labels-array format."""
    with open(data_path, "w", encoding="utf-8") as fh:
        for g, y in zip(bundle.graphs, bundle.labels):
            rec = {
                "n": g.num_nodes,
                "edges": [[u, v] for u, v in sorted(g.edges)],
                "x": [[float(v) for v in row] for row in g.features],
                "y": int(y),
            }
            fh.write(json.dumps(rec) + "\n")
    with open(labels_path, "w", encoding="utf-8") as fh:
        json.dump(list(bundle.label_texts), fh)


def load_edge_list(path) -> list[tuple[int, int]]:
    """Read whitespace-separated "u v" pairs, 0-based, one per line."""
    edges: list[tuple[int, int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DatasetFormatError(f"{path}: line {lineno}: expected 'u v'")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from exc
    return edges


def save_edge_list(edges, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in edges:
            fh.write(f"{u} {v}\n")


# ---------------------------------------------------------------------------
# ego-graph reformulation


def induce_ego_graph(source: Graph, centers, hops: int) -> Graph:
    """Induce the union of the centers' ``hops``-hop neighborhoods.

    One center reformulates a node task, two centers an edge task (the
    union contains both endpoints).  The returned graph keeps all source
    edges internal to the selected node set, copies feature rows, and
    records source indices in ``node_ids`` with the centers first.
    """
    centers = [int(c) for c in (centers if hasattr(centers, "__iter__") else [centers])]
    if not 1 <= len(centers) <= 2:
        raise ValueError("need one or two center nodes")
    for c in centers:
        if not (0 <= c < source.num_nodes):
            raise GraphInvariantError(f"center {c} out of range for n={source.num_nodes}")
    if hops < 0:
        raise ValueError("hop count must be >= 0")

    adj = source.neighbors()
    visited = set(centers)
    frontier = set(centers)
    for _ in range(hops):
        frontier = {w for u in frontier for w in adj[u]} - visited
        if not frontier:
            break
        visited |= frontier

    # centers first, remaining members in ascending source order
    ordered = centers + sorted(visited - set(centers))
    local = {src: i for i, src in enumerate(ordered)}
    edges = [
        (local[u], local[v]) for u, v in source.edges if u in local and v in local
    ]
    feats = source.features[ordered, :]
    return make_graph(len(ordered), edges, feats, node_ids=ordered)


# ---------------------------------------------------------------------------
# synthetic generators


def generate_zero_dataset(spec: ZeroShotSpec) -> DatasetBundle:
    """Sample ego-graphs from a base network and rewrite their features.

    ``num_samples`` distinct centers are drawn; the first two groups of
    ``train_per_class`` become the seen classes with pure [1,0] / [0,1]
    rows, the remainder becomes the unseen-class test set with each row
    drawn uniformly from those two vectors.
    """
    num_base = max(max(u, v) for u, v in spec.base_edges) + 1 if spec.base_edges else 0
    if num_base < spec.num_samples:
        raise ValueError(
            f"base network has {num_base} nodes; need at least {spec.num_samples}"
        )
    base = make_graph(num_base, spec.base_edges, np.zeros((num_base, 2)))
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x2E80]))
    centers = rng.choice(num_base, size=spec.num_samples, replace=False)

    graphs: list[Graph] = []
    labels: list[int] = []
    n_train = 2 * spec.train_per_class
    for rank, center in enumerate(centers):
        ego = induce_ego_graph(base, [int(center)], spec.hops)
        n = ego.num_nodes
        if rank < spec.train_per_class:
            feats = np.tile([1.0, 0.0], (n, 1))
            labels.append(0)
        elif rank < n_train:
            feats = np.tile([0.0, 1.0], (n, 1))
            labels.append(1)
        else:
            picks = rng.integers(0, 2, size=n)
            feats = np.zeros((n, 2))
            feats[np.arange(n), picks] = 1.0
            labels.append(2)
        graphs.append(make_graph(n, ego.edges, feats, node_ids=ego.node_ids))

    return DatasetBundle(
        graphs,
        labels,
        list(spec.label_texts),
        train_idx=list(range(n_train)),
        val_idx=[],
        test_idx=list(range(n_train, spec.num_samples)),
    )


def generate_separable_dataset(
    n_graphs: int,
    nodes_per_graph: int,
    dim: int,
    num_classes: int,
    seed: int,
    noise: float = 0.05,
    edge_prob: float = 0.3,
) -> DatasetBundle:
    """Random sparse graphs whose class-c feature rows sit near the axis e_c.

    With noise 0 the per-class mean feature is exactly e_c, so classes are
    linearly separable by construction.  Labels are assigned round-robin.
    """
    if num_classes > dim:
        raise ValueError(f"need num_classes <= dim, got {num_classes} > {dim}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5E9A]))
    graphs: list[Graph] = []
    labels: list[int] = []
    for i in range(n_graphs):
        c = i % num_classes
        feats = np.zeros((nodes_per_graph, dim))
        feats[:, c] = 1.0
        if noise > 0:
            feats = feats + noise * rng.standard_normal((nodes_per_graph, dim))
        edges = [
            (u, v)
            for u in range(nodes_per_graph)
            for v in range(u + 1, nodes_per_graph)
            if rng.random() < edge_prob
        ]
        graphs.append(make_graph(nodes_per_graph, edges, feats))
        labels.append(c)
    texts = [f"synthetic class {c}" for c in range(num_classes)]
    return DatasetBundle(graphs, labels, texts, test_idx=list(range(n_graphs)))


def generate_homophily_dataset(
    n_graphs: int,
    dim: int,
    seed: int,
    mix: float = 0.85,
    nodes_range: tuple[int, int] = (14, 35),
    edges_range: tuple[int, int] = (20, 46),
) -> DatasetBundle:
    """Graphs whose class signal lives in structure, not in feature statistics.

    Every graph draws one-hot rows from the same category law and a
    class-independent size and edge budget; class 0 wires a ``mix``
    fraction of its edges between same-category nodes, class 1 between
    different-category nodes.  Feature histograms carry no label
    information, so only models that preserve local structure can
    classify.
    """
    if not 0.5 < mix <= 1.0:
        raise ValueError("mix must lie in (0.5, 1]")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x407]))
    graphs: list[Graph] = []
    labels: list[int] = []
    for i in range(n_graphs):
        c = i % 2
        n = int(rng.integers(*nodes_range))
        m = int(rng.integers(*edges_range))
        while True:  # resample categories until the same-pair pool can supply m
            cats = rng.integers(0, dim, n)
            same = [(u, v) for u in range(n) for v in range(u + 1, n) if cats[u] == cats[v]]
            if len(same) >= m:
                break
        diff = [(u, v) for u in range(n) for v in range(u + 1, n) if cats[u] != cats[v]]
        main, alt = (same, diff) if c == 0 else (diff, same)
        k_main = min(int(round(mix * m)), len(main))
        edges = [main[p] for p in rng.choice(len(main), size=k_main, replace=False)]
        k_alt = min(m - k_main, len(alt))
        edges += [alt[p] for p in rng.choice(len(alt), size=k_alt, replace=False)]
        feats = np.zeros((n, dim))
        feats[np.arange(n), cats] = 1.0
        graphs.append(make_graph(n, set(edges), feats))
        labels.append(c)
    return DatasetBundle(
        graphs, labels, ["assortative", "disassortative"], test_idx=list(range(n_graphs))
    )


def random_network_edges(num_nodes: int, extra_edges: int, seed: int) -> list[tuple[int, int]]:
    """Connected random network: a ring backbone plus uniform extra chords."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA5E]))
    edges = {(i, (i + 1) % num_nodes) for i in range(num_nodes)}
    edges = {_canon_edge(u, v) for u, v in edges}
    while len(edges) < num_nodes + extra_edges:
        u, v = rng.integers(0, num_nodes, size=2)
        if u != v:
            edges.add(_canon_edge(int(u), int(v)))
    return sorted(edges)


def few_shot_split(bundle: DatasetBundle, shots_per_class: int, seed: int) -> DatasetBundle:
    """Select ``shots_per_class`` labeled graphs per class and split them ~1:1.

    Odd shot counts put the extra sample in train; everything not selected
    becomes test.  Shots are capped at 20 so no class ever exceeds 10
    labeled training samples.  Returns a new bundle sharing the graph
    objects.
    """
    if shots_per_class < 1:
        raise ValueError("shots_per_class must be >= 1")
    if (shots_per_class + 1) // 2 > 10:
        raise ValueError("shots_per_class > 20 would exceed 10 training samples per class")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF5]))
    by_class: dict[int, list[int]] = {c: [] for c in range(bundle.num_classes)}
    for i, y in enumerate(bundle.labels):
        by_class[y].append(i)

    train: list[int] = []
    val: list[int] = []
    chosen: set[int] = set()
    for c in range(bundle.num_classes):
        pool = by_class[c]
        if len(pool) < shots_per_class:
            raise ValueError(
                f"class {c} has {len(pool)} samples, fewer than {shots_per_class} shots"
            )
        picks = rng.choice(len(pool), size=shots_per_class, replace=False)
        picked = [pool[p] for p in picks]
        n_train = (shots_per_class + 1) // 2
        train.extend(picked[:n_train])
        val.extend(picked[n_train:])
        chosen.update(picked)
    test = [i for i in range(len(bundle.graphs)) if i not in chosen]
    return DatasetBundle(
        bundle.graphs,
        bundle.labels,
        bundle.label_texts,
        train_idx=train,
        val_idx=val,
        test_idx=test,
        task_level=bundle.task_level,
    )
