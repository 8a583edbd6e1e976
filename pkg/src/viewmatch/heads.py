"""From-scratch differentiable MLP heads with verified gradients.

Two head kinds share one dense-stack implementation:

* match: 1024 -> 512 -> 256 -> 1, scores how well a (view, language)
  embedding pair goes together;
* view: 512 -> 256 -> 128 -> 64 -> 8, one logit per position on the view
  ring.

Hidden layers use ReLU, the output layer is linear. Parameters are stored
as float32; all forward/backward/optimizer arithmetic runs in float64 so
finite-difference gradient checks are stable. Initialization is He-uniform
fan-in scaling with zero biases.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MATCH_DIMS = (1024, 512, 256, 1)
VIEW_DIMS = (512, 256, 128, 64, 8)
_KIND_DIMS = {"match": MATCH_DIMS, "view": VIEW_DIMS}
_CKPT_MAGIC = b"VMHD"
_CKPT_VERSION = 1


class StaleCacheError(Exception):
    """A backward pass was attempted against activations from outdated parameters."""


class CheckpointError(Exception):
    pass


@dataclass
class Head:
    kind: str
    dims: tuple[int, ...]
    weights: list[np.ndarray]  # per layer, shape (fan_in, fan_out)
    biases: list[np.ndarray]   # per layer, shape (fan_out,)
    version: int = 0

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list, layer-major: [w0, b0, w1, b1, ...]."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def mark_updated(self) -> None:
        self.version += 1

    def copy(self) -> "Head":
        return Head(
            kind=self.kind,
            dims=self.dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            version=self.version,
        )

    def astype(self, dtype) -> "Head":
        return Head(
            kind=self.kind,
            dims=self.dims,
            weights=[w.astype(dtype) for w in self.weights],
            biases=[b.astype(dtype) for b in self.biases],
            version=self.version,
        )


def _init_head(kind: str, dims: tuple[int, ...], seed: int) -> Head:
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float32))
        biases.append(np.zeros(fan_out, dtype=np.float32))
    return Head(kind=kind, dims=dims, weights=weights, biases=biases)


def new_match_head(seed: int) -> Head:
    return _init_head("match", MATCH_DIMS, seed)


def new_view_head(seed: int) -> Head:
    return _init_head("view", VIEW_DIMS, seed)


@dataclass
class ForwardCache:
    version: int
    inputs: list[np.ndarray]  # activation entering each layer, float64
    pre: list[np.ndarray]     # pre-activation of each layer, float64


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def scale(self, factor: float) -> "Gradients":
        return Gradients(
            weights=[w * factor for w in self.weights],
            biases=[b * factor for b in self.biases],
        )

    def add(self, other: "Gradients") -> "Gradients":
        return Gradients(
            weights=[a + b for a, b in zip(self.weights, other.weights)],
            biases=[a + b for a, b in zip(self.biases, other.biases)],
        )


def forward(head: Head, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Batched forward pass: (batch, dims[0]) -> (batch, dims[-1]), in float64."""
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if a.shape[1] != head.dims[0]:
        raise ValueError(
            f"{head.kind} head expects input dimension {head.dims[0]}, got {a.shape[1]}"
        )
    inputs, pre = [a], []
    last = head.n_layers - 1
    for i, (w, b) in enumerate(zip(head.weights, head.biases)):
        z = a @ w.astype(np.float64) + b.astype(np.float64)
        pre.append(z)
        a = np.maximum(z, 0.0) if i < last else z
        if i < last:
            inputs.append(a)
    return a, ForwardCache(version=head.version, inputs=inputs, pre=pre)


def backward(head: Head, cache: ForwardCache, dout: np.ndarray) -> tuple[Gradients, np.ndarray]:
    """Backpropagate an upstream gradient; returns parameter and input gradients."""
    if cache.version != head.version:
        raise StaleCacheError(
            "activation cache is stale: parameters changed since the forward pass"
        )
    delta = np.atleast_2d(np.asarray(dout, dtype=np.float64))
    if delta.shape != (cache.inputs[0].shape[0], head.dims[-1]):
        raise ValueError(
            f"upstream gradient shape {delta.shape} does not match output "
            f"({cache.inputs[0].shape[0]}, {head.dims[-1]})"
        )
    grad_w = [np.empty(0)] * head.n_layers
    grad_b = [np.empty(0)] * head.n_layers
    for i in range(head.n_layers - 1, -1, -1):
        grad_w[i] = cache.inputs[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        delta = delta @ head.weights[i].astype(np.float64).T
        if i > 0:
            delta = delta * (cache.pre[i - 1] > 0.0)
    return Gradients(weights=grad_w, biases=grad_b), delta


def match_forward(head: Head, language: np.ndarray, view_feature: np.ndarray) -> float:
    """Score a (language, view) pair; input is the concatenation [view; language]."""
    if head.kind != "match":
        raise ValueError(f"expected a match head, got {head.kind!r}")
    language = np.asarray(language, dtype=np.float64).ravel()
    view_feature = np.asarray(view_feature, dtype=np.float64).ravel()
    if language.size + view_feature.size != head.dims[0]:
        raise ValueError(
            f"language dim {language.size} + view dim {view_feature.size} "
            f"!= head input dim {head.dims[0]}"
        )
    out, _ = forward(head, np.concatenate([view_feature, language])[None, :])
    score = float(out[0, 0])
    if not np.isfinite(score):
        raise ValueError("match score is not finite")
    return score


def view_forward(head: Head, view_feature: np.ndarray) -> np.ndarray:
    """Map a view embedding to 8 logits, one per position on the view ring."""
    if head.kind != "view":
        raise ValueError(f"expected a view head, got {head.kind!r}")
    view_feature = np.asarray(view_feature, dtype=np.float64).ravel()
    if view_feature.size != head.dims[0]:
        raise ValueError(
            f"view feature dim {view_feature.size} != head input dim {head.dims[0]}"
        )
    out, _ = forward(head, view_feature[None, :])
    logits = out[0]
    if not np.all(np.isfinite(logits)):
        raise ValueError("view logits are not finite")
    return logits


@dataclass
class AdamState:
    """Per-parameter first/second moment accumulators, kept in float64."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def new_adam(params: list[np.ndarray], learning_rate: float = 1e-3,
             beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        step=0,
        m=[np.zeros(p.shape, dtype=np.float64) for p in params],
        v=[np.zeros(p.shape, dtype=np.float64) for p in params],
    )


def adam_step(state: AdamState, params: list[np.ndarray],
              grads: list[np.ndarray]) -> tuple[list[np.ndarray], AdamState]:
    """Bias-corrected Adam update, applied to the parameter arrays in place."""
    if len(params) != len(state.m) or len(params) != len(grads):
        raise ValueError("parameter, gradient, and moment counts disagree")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ValueError(
                f"shape mismatch at parameter {i}: param {p.shape}, grad {g.shape}"
            )
        g64 = np.asarray(g, dtype=np.float64)
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g64
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g64 * g64
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        update = p.astype(np.float64) - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
        p[...] = update.astype(p.dtype)
    return params, state


def apply_gradients(head: Head, state: AdamState, grads: Gradients) -> None:
    flat = []
    for gw, gb in zip(grads.weights, grads.biases):
        flat.extend((gw, gb))
    adam_step(state, head.parameters(), flat)
    head.mark_updated()


@dataclass
class GradientCheckReport:
    kind: str
    probes: int
    resampled: int
    max_relative_error: float
    per_layer_max: dict[int, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def _relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-6)


def gradient_check(head: Head, tolerance: float = 1e-4, probes: int = 120,
                   seed: int = 0, step: float = 1e-3) -> GradientCheckReport:
    """Compare analytic gradients against central finite differences.

    Runs on a float64 copy of the head. Probe inputs are re-sampled whenever
    any pre-activation magnitude falls below 1e-4, and a probed coordinate is
    re-drawn if the +/-step perturbation flips any ReLU activation pattern;
    both guards keep the finite-difference quotient away from kink points.
    """
    probe = head.astype(np.float64)
    rng = np.random.default_rng(seed)
    per_layer_max = {i: 0.0 for i in range(probe.n_layers)}
    max_err = 0.0
    resampled = 0
    done = 0

    def loss_and_pattern(x: np.ndarray, upstream: np.ndarray):
        out, cache = forward(probe, x)
        pattern = tuple((z > 0.0).tobytes() for z in cache.pre[:-1])
        return float(np.sum(out * upstream)), pattern, cache

    while done < probes:
        x = rng.standard_normal((1, probe.dims[0]))
        upstream = rng.standard_normal((1, probe.dims[-1]))
        _, pattern, cache = loss_and_pattern(x, upstream)
        if any(np.min(np.abs(z)) < 1e-4 for z in cache.pre[:-1]):
            resampled += 1
            continue
        analytic, _ = backward(probe, cache, upstream)

        # Spread a handful of coordinates over every layer before moving on
        # to a fresh input.
        for layer in range(probe.n_layers):
            for arr, grad in ((probe.weights[layer], analytic.weights[layer]),
                              (probe.biases[layer], analytic.biases[layer])):
                for _attempt in range(8):
                    idx = tuple(rng.integers(0, s) for s in arr.shape)
                    original = arr[idx]
                    arr[idx] = original + step
                    loss_plus, pat_plus, _ = loss_and_pattern(x, upstream)
                    arr[idx] = original - step
                    loss_minus, pat_minus, _ = loss_and_pattern(x, upstream)
                    arr[idx] = original
                    if pat_plus != pattern or pat_minus != pattern:
                        resampled += 1
                        continue
                    numeric = (loss_plus - loss_minus) / (2.0 * step)
                    err = _relative_error(float(grad[idx]), numeric)
                    per_layer_max[layer] = max(per_layer_max[layer], err)
                    max_err = max(max_err, err)
                    done += 1
                    break

    return GradientCheckReport(
        kind=head.kind,
        probes=done,
        resampled=resampled,
        max_relative_error=max_err,
        per_layer_max=per_layer_max,
        tolerance=tolerance,
    )


def save_checkpoint(head: Head, path: str | Path, seed: int = 0, step_count: int = 0) -> None:
    """Header (kind, layer dims, seed, step count) followed by an f32 parameter blob."""
    kind_code = {"match": 0, "view": 1}[head.kind]
    blob = bytearray()
    blob += _CKPT_MAGIC
    blob += struct.pack("<IBQQB", _CKPT_VERSION, kind_code, seed, step_count, len(head.dims))
    blob += struct.pack(f"<{len(head.dims)}I", *head.dims)
    for w, b in zip(head.weights, head.biases):
        blob += np.ascontiguousarray(w, dtype="<f4").tobytes()
        blob += np.ascontiguousarray(b, dtype="<f4").tobytes()
    Path(path).write_bytes(blob)


def load_checkpoint(path: str | Path) -> tuple[Head, int, int]:
    """Load a head checkpoint; rejects unknown kinds and dimension mismatches."""
    data = Path(path).read_bytes()
    header_size = 4 + struct.calcsize("<IBQQB")
    if len(data) < header_size or data[:4] != _CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a head checkpoint")
    version, kind_code, seed, step_count, n_dims = struct.unpack(
        "<IBQQB", data[4:header_size]
    )
    if version != _CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    kinds = {0: "match", 1: "view"}
    if kind_code not in kinds:
        raise CheckpointError(f"{path}: unknown head kind code {kind_code}")
    kind = kinds[kind_code]
    dims_end = header_size + 4 * n_dims
    if len(data) < dims_end:
        raise CheckpointError(f"{path}: truncated header")
    dims = struct.unpack(f"<{n_dims}I", data[header_size:dims_end])
    if dims != _KIND_DIMS[kind]:
        raise CheckpointError(
            f"{path}: layer dimensions {dims} do not match the {kind} head {_KIND_DIMS[kind]}"
        )
    expected = sum(fi * fo + fo for fi, fo in zip(dims[:-1], dims[1:])) * 4
    payload = data[dims_end:]
    if len(payload) != expected:
        raise CheckpointError(
            f"{path}: parameter blob is {len(payload)} bytes, expected {expected}"
        )
    weights, biases = [], []
    offset = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w_bytes = fan_in * fan_out * 4
        weights.append(
            np.frombuffer(payload, dtype="<f4", count=fan_in * fan_out, offset=offset)
            .reshape(fan_in, fan_out).copy()
        )
        offset += w_bytes
        biases.append(
            np.frombuffer(payload, dtype="<f4", count=fan_out, offset=offset).copy()
        )
        offset += fan_out * 4
    head = Head(kind=kind, dims=dims, weights=weights, biases=biases)
    return head, seed, step_count
