"""Fully-connected tanh networks on a flat parameter vector.

The parameter layout is fixed: for each layer, the weight matrix
(shape ``n_out x n_in``) flattened row-major, followed by the bias
(length ``n_out``), layers concatenated in order. All hidden layers
are tanh-activated; the final layer is affine with a single output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer widths of a tanh MLP, input dimension first, output width last."""

    layer_widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("architecture needs at least input and output widths")
        if any(w <= 0 for w in widths):
            raise ValueError(f"all layer widths must be positive, got {widths}")
        if widths[-1] != 1:
            raise ValueError(f"output width must be 1, got {widths[-1]}")

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def n_params(self) -> int:
        widths = self.layer_widths
        return sum((widths[i] + 1) * widths[i + 1] for i in range(len(widths) - 1))

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(n_out, n_in) per layer, in order."""
        w = self.layer_widths
        return [(w[i + 1], w[i]) for i in range(len(w) - 1)]


@dataclass
class MlpParams:
    """A flat parameter vector together with its architecture."""

    arch: MlpArchitecture
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.arch.n_params,):
            raise ValueError(
                f"theta has shape {self.theta.shape}, expected ({self.arch.n_params},)"
            )

    def unflatten(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Return [(W, b), ...] views into theta, one pair per layer."""
        out = []
        offset = 0
        for n_out, n_in in self.arch.layer_shapes():
            w = self.theta[offset : offset + n_out * n_in].reshape(n_out, n_in)
            offset += n_out * n_in
            b = self.theta[offset : offset + n_out]
            offset += n_out
            out.append((w, b))
        return out

    def replace_theta(self, theta: np.ndarray) -> "MlpParams":
        return MlpParams(self.arch, theta)


def flatten_layers(arch: MlpArchitecture, layers: list[tuple[np.ndarray, np.ndarray]]) -> MlpParams:
    """Inverse of MlpParams.unflatten."""
    parts = []
    for (n_out, n_in), (w, b) in zip(arch.layer_shapes(), layers):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if w.shape != (n_out, n_in) or b.shape != (n_out,):
            raise ValueError(f"layer shapes {w.shape}, {b.shape} do not match ({n_out}, {n_in})")
        parts.append(w.ravel())
        parts.append(b)
    return MlpParams(arch, np.concatenate(parts))


def init_params(arch: MlpArchitecture, seed: int) -> MlpParams:
    """Seeded init: weights U(-1/sqrt(n_in), 1/sqrt(n_in)), biases zero."""
    rng = np.random.default_rng(seed)
    layers = []
    for n_out, n_in in arch.layer_shapes():
        bound = 1.0 / np.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=(n_out, n_in))
        b = np.zeros(n_out)
        layers.append((w, b))
    return flatten_layers(arch, layers)


def forward_values(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Network values u(x) for a batch, no derivatives, no tape."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.arch.input_dim:
        raise ValueError(f"x has shape {x.shape}, expected (N, {params.arch.input_dim})")
    a = x
    layers = params.unflatten()
    for i, (w, b) in enumerate(layers):
        a = a @ w.T + b
        if i < len(layers) - 1:
            a = np.tanh(a)
    return a[:, 0]
