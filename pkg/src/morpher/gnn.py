"""Frozen two-layer graph convolution: forward with a tape, backward on features.

Weights never receive gradients; the backward pass exists so the prompt
token rows stacked into the feature matrix can be trained through the
frozen encoder.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MGNN_MAGIC = b"MGNN"
MGNN_VERSION = 1


class WeightFormatError(ValueError):
    """Weight file has a bad magic, version, or inconsistent shape."""


@dataclass(frozen=True)
class FrozenGnn:
    """Fixed weight matrices of the two-layer encoder (d -> h -> d_g)."""

    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        if w1.ndim != 2 or w2.ndim != 2 or w1.shape[1] != w2.shape[0]:
            raise WeightFormatError(f"inconsistent weight shapes {w1.shape}, {w2.shape}")
        if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(w2))):
            raise WeightFormatError("non-finite weight entry")
        w1 = w1.copy()
        w2 = w2.copy()
        w1.setflags(write=False)
        w2.setflags(write=False)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    @property
    def num_params(self) -> int:
        return self.w1.size + self.w2.size


@dataclass(frozen=True)
class ForwardTape:
    """Intermediates recorded by the forward pass, reused verbatim in backward."""

    a_hat: np.ndarray
    x_m: np.ndarray
    z1: np.ndarray  # layer-1 pre-activation
    h1: np.ndarray
    h2: np.ndarray
    gnn: FrozenGnn


def normalize_adjacency(a: np.ndarray) -> np.ndarray:
    """Symmetric renormalization D^{-1/2} (A + I) D^{-1/2}.

    Self-loops added here give isolated nodes degree 1, so no division
    guard is needed.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got {a.shape}")
    a_loop = a + np.eye(a.shape[0])
    d_inv_sqrt = 1.0 / np.sqrt(a_loop.sum(axis=1))
    return a_loop * np.outer(d_inv_sqrt, d_inv_sqrt)


def gcn_forward(a_hat: np.ndarray, x_m: np.ndarray, gnn: FrozenGnn):
    """ReLU(A X W1) -> A H W2 with no activation on the output layer."""
    if x_m.shape[0] != a_hat.shape[0] or x_m.shape[1] != gnn.in_dim:
        raise ValueError(
            f"shape mismatch: adjacency {a_hat.shape}, features {x_m.shape}, "
            f"weights expect d={gnn.in_dim}"
        )
    z1 = a_hat @ x_m @ gnn.w1
    h1 = np.maximum(z1, 0.0)
    h2 = a_hat @ h1 @ gnn.w2
    return h2, ForwardTape(a_hat=a_hat, x_m=x_m, z1=z1, h1=h1, h2=h2, gnn=gnn)


def readout_mean(h: np.ndarray) -> np.ndarray:
    if h.ndim != 2 or h.shape[0] == 0:
        raise ValueError("readout needs a nonempty matrix")
    return h.mean(axis=0)


def gcn_backward_features(tape: ForwardTape, d_h2: np.ndarray) -> np.ndarray:
    """Gradient of the recorded forward w.r.t. the input feature matrix.

    ReLU subgradient at exactly zero is taken as zero; the frozen weights
    receive nothing.
    """
    if d_h2.shape != tape.h2.shape:
        raise ValueError(f"gradient shape {d_h2.shape} != output shape {tape.h2.shape}")
    a_hat, gnn = tape.a_hat, tape.gnn
    d_h1 = a_hat @ d_h2 @ gnn.w2.T
    d_z1 = d_h1 * (tape.z1 > 0.0)
    return a_hat @ d_z1 @ gnn.w1.T


# ---------------------------------------------------------------------------
# weight files


def init_gnn_random(dim: int, hidden: int, out_dim: int, seed: int) -> FrozenGnn:
    """Seeded uniform init in [-sqrt(6/fan_in), +sqrt(6/fan_in)] per layer."""
    if min(dim, hidden, out_dim) < 1:
        raise ValueError("all dimensions must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6EE]))
    b1 = np.sqrt(6.0 / dim)
    b2 = np.sqrt(6.0 / hidden)
    w1 = rng.uniform(-b1, b1, size=(dim, hidden))
    w2 = rng.uniform(-b2, b2, size=(hidden, out_dim))
    return FrozenGnn(w1, w2)


def save_gnn_weights(gnn: FrozenGnn, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MGNN_MAGIC)
        fh.write(struct.pack("<IIII", MGNN_VERSION, gnn.in_dim, gnn.hidden_dim, gnn.out_dim))
        fh.write(np.ascontiguousarray(gnn.w1, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(gnn.w2, dtype="<f8").tobytes())


def load_gnn_weights(path, expect_dim: int | None = None) -> FrozenGnn:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MGNN_MAGIC:
            raise WeightFormatError(f"{path}: bad magic {magic!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise WeightFormatError(f"{path}: truncated header")
        version, d, h, d_g = struct.unpack("<IIII", header)
        if version != MGNN_VERSION:
            raise WeightFormatError(f"{path}: unsupported version {version}")
        body = fh.read()
    expected = (d * h + h * d_g) * 8
    if len(body) != expected:
        raise WeightFormatError(f"{path}: expected {expected} payload bytes, got {len(body)}")
    flat = np.frombuffer(body, dtype="<f8")
    w1 = flat[: d * h].reshape(d, h)
    w2 = flat[d * h :].reshape(h, d_g)
    if expect_dim is not None and d != expect_dim:
        raise WeightFormatError(f"{path}: weights expect d={d}, dataset has d={expect_dim}")
    return FrozenGnn(w1, w2)
