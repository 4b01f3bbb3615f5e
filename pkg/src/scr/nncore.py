"""Dense float64 MLPs with explicit forward/backward passes, Adam, and a
central-difference gradient checker.

Weights are stored ``(out_dim, in_dim)`` and a layer computes
``act(x @ W.T + b)`` on row-major batches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import CheckpointError, ContractError, NumericError

RELU = "relu"
IDENTITY = "identity"
ACTIVATIONS = (RELU, IDENTITY)


@dataclass
class DenseLayer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ContractError(
                f"layer weight {self.weight.shape} and bias {self.bias.shape} disagree"
            )
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


class Mlp:
    """An ordered stack of dense layers.

    ``version`` is bumped by :func:`mlp_adam_step` and :meth:`load_parameters`,
    so a cache taken before an update is detectably stale.
    """

    def __init__(self, layers: Sequence[DenseLayer]):
        layers = list(layers)
        if not layers:
            raise ContractError("an Mlp needs at least one layer")
        for k, (a, b) in enumerate(zip(layers[:-1], layers[1:])):
            if a.out_dim != b.in_dim:
                raise ContractError(
                    f"layer {k} outputs {a.out_dim} but layer {k + 1} expects {b.in_dim}"
                )
        for k, layer in enumerate(layers[:-1]):
            if layer.activation == IDENTITY:
                raise ContractError(f"identity activation on non-final layer {k}")
        self.layers = layers
        self.version = 0

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in ``[W0, b0, W1, b1, ...]`` order (live references)."""
        params = []
        for layer in self.layers:
            params.extend((layer.weight, layer.bias))
        return params

    def copy(self) -> "Mlp":
        return Mlp(
            [DenseLayer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def load_parameters(self, params: Sequence[np.ndarray]) -> None:
        for dst, src in zip(self.parameters(), params, strict=True):
            dst[...] = src
        self.version += 1

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]

    def __repr__(self):
        acts = ",".join(l.activation for l in self.layers)
        return f"Mlp(dims={self.dims}, activations=[{acts}])"


def init_mlp(
    dims: Sequence[int],
    rng: np.random.Generator,
    final_activation: str = IDENTITY,
) -> Mlp:
    """Glorot-uniform weights, zero biases, ReLU on every layer but the last."""
    layers = []
    n = len(dims) - 1
    for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        act = final_activation if k == n - 1 else RELU
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return Mlp(layers)


def concat_mlps(*nets: Mlp) -> Mlp:
    """A single Mlp sharing the layer objects of ``nets`` applied in order."""
    layers = []
    for net in nets:
        layers.extend(net.layers)
    return Mlp(layers)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activations
    post: list[np.ndarray]  # post-activations
    net_id: int = 0
    version: int = 0

    @property
    def batch_size(self) -> int:
        return self.inputs[0].shape[0]


def forward(net: Mlp, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ContractError(
            f"batch of shape {x.shape} does not match network input dim {net.input_dim}"
        )
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite entry in network input")
    cache = ForwardCache([], [], [], id(net), net.version)
    h = x
    for k, layer in enumerate(net.layers):
        cache.inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        h = np.maximum(z, 0.0) if layer.activation == RELU else z
        if not np.all(np.isfinite(h)):
            raise NumericError(f"non-finite activation in layer {k}")
        cache.pre.append(z)
        cache.post.append(h)
    return h, cache


def backward(
    net: Mlp, cache: ForwardCache, upstream_grad: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients of a scalar loss given ``d loss / d output``.

    Returns parameter gradients in :meth:`Mlp.parameters` order and the
    gradient with respect to the network input. ReLU'(0) is taken as 0.
    """
    if cache.net_id != id(net) or cache.version != net.version:
        raise ContractError("forward cache does not belong to this network state")
    if len(cache.pre) != len(net.layers):
        raise ContractError("forward cache depth does not match layer count")
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != cache.post[-1].shape:
        raise ContractError(
            f"upstream gradient {g.shape} does not match output {cache.post[-1].shape}"
        )
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))  # type: ignore[list-item]
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if layer.activation == RELU:
            g = g * (cache.pre[k] > 0.0)
        grads[2 * k] = g.T @ cache.inputs[k]
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ layer.weight
    return grads, g


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: Iterable[np.ndarray], learning_rate: float = 1e-3, **kw):
        params = list(params)
        return cls(
            [np.zeros_like(p) for p in params],
            [np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
            **kw,
        )


def adam_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState
) -> Sequence[np.ndarray]:
    """One bias-corrected Adam update, applied to ``params`` in place.

    A non-finite gradient raises before anything is modified.
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ContractError("params, grads and optimizer state have different lengths")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ContractError(f"shape mismatch: param {p.shape}, grad {g.shape}")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {i}; step refused")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params


def mlp_adam_step(net: Mlp, grads: Sequence[np.ndarray], state: AdamState) -> None:
    adam_step(net.parameters(), grads, state)
    net.version += 1


def grad_check(
    loss_fn: Callable[[], tuple[float, Sequence[np.ndarray]]],
    params: Sequence[np.ndarray],
    eps: float = 1e-6,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn()`` must return ``(loss, grads)`` evaluated at the current
    contents of ``params``; entries are perturbed in place and restored. The
    error per entry is ``|a - n| / max(1, |a|, |n|)``.
    """
    if not 0.0 < eps <= 1e-2:
        raise ContractError(f"eps must lie in (0, 1e-2], got {eps}")
    _, analytic = loss_fn()
    analytic = [np.array(g, dtype=np.float64, copy=True) for g in analytic]
    worst = 0.0
    for p, a in zip(params, analytic, strict=True):
        flat = p.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_fn()[0]
            flat[i] = orig - eps
            lm = loss_fn()[0]
            flat[i] = orig
            num = (lp - lm) / (2.0 * eps)
            err = abs(a_flat[i] - num) / max(1.0, abs(a_flat[i]), abs(num))
            worst = max(worst, err)
    return float(worst)


# --- checkpoint text container ----------------------------------------------
#
#   network <name> <n_layers>
#   layer <in_dim> <out_dim> <activation>
#   w <row-major weights, %.17g>
#   b <bias values>
#
# Other sections (vectors, metadata) share the same token stream; see
# ``pipeline.save_bundle``.


def fmt_values(values: np.ndarray) -> str:
    return " ".join("%.17g" % v for v in np.asarray(values, dtype=np.float64).ravel())


def write_mlp(name: str, net: Mlp) -> list[str]:
    lines = [f"network {name} {len(net.layers)}"]
    for layer in net.layers:
        lines.append(f"layer {layer.in_dim} {layer.out_dim} {layer.activation}")
        lines.append("w " + fmt_values(layer.weight))
        lines.append("b " + fmt_values(layer.bias))
    return lines


class LineReader:
    """Line-oriented tokenizer that tracks byte offsets for error messages."""

    def __init__(self, text: str):
        self._lines = []
        offset = 0
        for raw in text.encode("utf-8").splitlines(keepends=True):
            line = raw.decode("utf-8").rstrip("\r\n")
            if line.strip() and not line.lstrip().startswith("#"):
                self._lines.append((offset, line))
            offset += len(raw)
        self._end = offset
        self._pos = 0

    @property
    def offset(self) -> int:
        if self._pos < len(self._lines):
            return self._lines[self._pos][0]
        return self._end

    def at_end(self) -> bool:
        return self._pos >= len(self._lines)

    def peek_tag(self) -> str | None:
        if self.at_end():
            return None
        return self._lines[self._pos][1].split(maxsplit=1)[0]

    def next(self, tag: str) -> tuple[list[str], int]:
        if self.at_end():
            raise CheckpointError(f"unexpected end of file, expected '{tag}'", self._end)
        offset, line = self._lines[self._pos]
        parts = line.split()
        if parts[0] != tag:
            raise CheckpointError(f"expected '{tag}' but found '{parts[0]}'", offset)
        self._pos += 1
        return parts[1:], offset

    def floats(self, tag: str, count: int) -> np.ndarray:
        parts, offset = self.next(tag)
        if len(parts) != count:
            raise CheckpointError(
                f"'{tag}' line has {len(parts)} values, expected {count}", offset
            )
        try:
            return np.array([float(p) for p in parts], dtype=np.float64)
        except ValueError as exc:
            raise CheckpointError(f"bad number in '{tag}' line: {exc}", offset) from None

    def ints(self, tag: str, count: int) -> list[int]:
        parts, offset = self.next(tag)
        if len(parts) < count:
            raise CheckpointError(f"'{tag}' line is missing fields", offset)
        try:
            return [int(p) for p in parts[:count]]
        except ValueError:
            raise CheckpointError(f"bad integer in '{tag}' line", offset) from None


def read_mlp(reader: LineReader) -> tuple[str, Mlp]:
    parts, offset = reader.next("network")
    if len(parts) != 2:
        raise CheckpointError("malformed network header", offset)
    name = parts[0]
    try:
        n_layers = int(parts[1])
    except ValueError:
        raise CheckpointError("bad layer count", offset) from None
    if n_layers < 1:
        raise CheckpointError("network with no layers", offset)
    layers = []
    for _ in range(n_layers):
        parts, offset = reader.next("layer")
        if len(parts) != 3 or parts[2] not in ACTIVATIONS:
            raise CheckpointError("malformed layer header", offset)
        try:
            in_dim, out_dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise CheckpointError("bad layer dimensions", offset) from None
        w = reader.floats("w", in_dim * out_dim).reshape(out_dim, in_dim)
        b = reader.floats("b", out_dim)
        layers.append(DenseLayer(w, b, parts[2]))
    try:
        return name, Mlp(layers)
    except ContractError as exc:
        raise CheckpointError(str(exc), offset) from None
