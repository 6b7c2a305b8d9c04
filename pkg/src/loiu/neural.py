"""Small dense networks in numpy with hand-written reverse mode.

Networks are ReLU multilayer perceptrons with either a linear output or one
or more softmax ("simplex") heads that partition the output layer.  Batches
are row-major ``(batch, features)``; a 1-D input is treated as a batch of one.

Parameters are initialised uniformly in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class DenseNetSpec:
    layer_widths: tuple                 # (input, hidden..., output)
    output_head: str = "linear"         # "linear" or "simplex"
    head_sizes: tuple = ()              # simplex partition of the output; empty = one head
    hidden_activation: str = "relu"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 3:
            raise ValueError("need an input, at least one hidden layer and an output")
        if any(w <= 0 for w in widths):
            raise ValueError("layer widths must be positive")
        if self.output_head not in ("linear", "simplex"):
            raise ValueError("output_head must be 'linear' or 'simplex'")
        if self.hidden_activation != "relu":
            raise ValueError("only relu hidden layers are supported")
        heads = tuple(int(h) for h in self.head_sizes) or (widths[-1],)
        if sum(heads) != widths[-1]:
            raise ValueError("head sizes must sum to the output width")
        object.__setattr__(self, "head_sizes", heads)

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


class ParamSet:
    """Weights ``W[i]`` of shape (fan_in, fan_out) and biases ``b[i]``.

    ``version`` increases on every in-place update so stale forward caches can
    be detected.
    """

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        self.version = 0

    def arrays(self) -> list:
        return self.weights + self.biases

    def shapes(self) -> list:
        return [a.shape for a in self.arrays()]

    def copy(self) -> "ParamSet":
        return ParamSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def bump(self) -> None:
        self.version += 1

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())


def zeros_like(params: ParamSet) -> ParamSet:
    return ParamSet([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])


def init_params(spec: DenseNetSpec, rng: np.random.Generator) -> ParamSet:
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return ParamSet(weights, biases)


def _check_shapes(spec: DenseNetSpec, params: ParamSet) -> None:
    expected = [(a, b) for a, b in zip(spec.layer_widths[:-1], spec.layer_widths[1:])]
    if [w.shape for w in params.weights] != expected:
        raise ValueError("parameter shapes do not match the network spec")


# --------------------------------------------------------------------------
# softmax heads


def softmax_heads(z: np.ndarray, head_sizes: Sequence[int], temperature: float = 1.0) -> np.ndarray:
    out = np.empty_like(z)
    start = 0
    for size in head_sizes:
        block = z[..., start:start + size] / temperature
        block = block - block.max(axis=-1, keepdims=True)
        e = np.exp(block)
        out[..., start:start + size] = e / e.sum(axis=-1, keepdims=True)
        start += size
    return out


def softmax_heads_backward(p: np.ndarray, grad_p: np.ndarray, head_sizes: Sequence[int],
                           temperature: float = 1.0) -> np.ndarray:
    """Vector-Jacobian product of :func:`softmax_heads` w.r.t. its input."""
    out = np.empty_like(grad_p)
    start = 0
    for size in head_sizes:
        sl = slice(start, start + size)
        pg = p[..., sl] * grad_p[..., sl]
        out[..., sl] = (pg - p[..., sl] * pg.sum(axis=-1, keepdims=True)) / temperature
        start += size
    return out


# --------------------------------------------------------------------------
# forward / backward


@dataclass
class ForwardCache:
    activations: list          # inputs to each layer (post-ReLU), activations[0] is the input
    pre: list                  # pre-activations of each layer
    output: np.ndarray
    params_id: int
    params_version: int
    squeezed: bool = False

    @property
    def logits(self) -> np.ndarray:
        return self.pre[-1]


def forward(spec: DenseNetSpec, params: ParamSet, x: np.ndarray):
    """Returns ``(output, cache)``.  Simplex heads output probabilities."""
    _check_shapes(spec, params)
    x = np.asarray(x, dtype=float)
    squeezed = x.ndim == 1
    if squeezed:
        x = x[None, :]
    if x.shape[-1] != spec.layer_widths[0]:
        raise ValueError(f"input width {x.shape[-1]} != {spec.layer_widths[0]}")
    activations, pre = [x], []
    h = x
    last = spec.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = np.maximum(z, 0.0)
            activations.append(h)
    out = softmax_heads(pre[-1], spec.head_sizes) if spec.output_head == "simplex" else pre[-1]
    cache = ForwardCache(activations, pre, out, id(params), params.version, squeezed)
    return (out[0] if squeezed else out), cache


@dataclass
class Gradients:
    params: ParamSet
    input: np.ndarray


def backward(spec: DenseNetSpec, params: ParamSet, cache: ForwardCache, grad_output: np.ndarray,
             wrt_logits: bool = False) -> Gradients:
    """Reverse-mode gradients of ``sum(grad_output * output)``.

    Parameter gradients are summed over the batch.  With ``wrt_logits=True``
    ``grad_output`` is taken w.r.t. the pre-softmax output layer instead.
    """
    if cache.params_id != id(params) or cache.params_version != params.version:
        raise ValueError("stale forward cache: parameters changed since the forward pass")
    g = np.asarray(grad_output, dtype=float)
    if cache.squeezed and g.ndim == 1:
        g = g[None, :]
    if spec.output_head == "simplex" and not wrt_logits:
        g = softmax_heads_backward(cache.output, g, spec.head_sizes)
    grad_w, grad_b = [None] * spec.n_layers, [None] * spec.n_layers
    for i in range(spec.n_layers - 1, -1, -1):
        grad_w[i] = cache.activations[i].T @ g
        grad_b[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
        if i > 0:
            g = g * (cache.pre[i - 1] > 0)
    grad_in = g[0] if cache.squeezed else g
    return Gradients(ParamSet(grad_w, grad_b), grad_in)


# --------------------------------------------------------------------------
# Gumbel-Softmax


def gumbel_softmax_sample(logits: np.ndarray, temperature: float, rng: np.random.Generator,
                          head_sizes: Optional[Sequence[int]] = None, hard: bool = False):
    """Relaxed one-hot sample ``softmax((logits + G) / temperature)`` per head.

    Returns ``(sample, soft)``.  With ``hard=True`` the sample is the one-hot
    argmax of ``soft`` (straight-through use: gradients flow through ``soft``).
    """
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    logits = np.asarray(logits, dtype=float)
    heads = tuple(head_sizes) if head_sizes else (logits.shape[-1],)
    u = rng.uniform(np.finfo(float).tiny, 1.0, size=logits.shape)
    soft = softmax_heads(logits - np.log(-np.log(u)), heads, temperature)
    if not hard:
        return soft, soft
    return one_hot_heads(soft, heads), soft


def gumbel_softmax_backward(soft: np.ndarray, grad: np.ndarray, temperature: float,
                            head_sizes: Optional[Sequence[int]] = None) -> np.ndarray:
    heads = tuple(head_sizes) if head_sizes else (soft.shape[-1],)
    return softmax_heads_backward(soft, grad, heads, temperature)


def one_hot_heads(p: np.ndarray, head_sizes: Sequence[int]) -> np.ndarray:
    out = np.zeros_like(p)
    start = 0
    for size in head_sizes:
        idx = np.argmax(p[..., start:start + size], axis=-1)
        np.put_along_axis(out[..., start:start + size], idx[..., None], 1.0, axis=-1)
        start += size
    return out


def argmax_heads(p: np.ndarray, head_sizes: Sequence[int]) -> list:
    res, start = [], 0
    for size in head_sizes:
        res.append(np.argmax(p[..., start:start + size], axis=-1))
        start += size
    return res


# --------------------------------------------------------------------------
# target networks and optimisers


def soft_update(target: ParamSet, online: ParamSet, v: float) -> ParamSet:
    """theta' <- v * theta + (1 - v) * theta', in place on ``target``."""
    if not 0 < v <= 1:
        raise ValueError("soft update rate must be in (0, 1]")
    if target.shapes() != online.shapes():
        raise ValueError("target and online parameter shapes differ")
    for t, o in zip(target.arrays(), online.arrays()):
        if v == 1.0:
            t[...] = o
        else:
            t *= 1.0 - v
            t += v * o
    target.bump()
    return target


@dataclass
class OptimizerState:
    learning_rate: float = 0.01
    method: str = "adam"            # "adam" or "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_grad_norm: Optional[float] = None
    step: int = 0
    first: list = field(default_factory=list)
    second: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: ParamSet, **kwargs) -> "OptimizerState":
        st = cls(**kwargs)
        if st.method not in ("adam", "sgd"):
            raise ValueError("method must be 'adam' or 'sgd'")
        st.first = [np.zeros_like(a) for a in params.arrays()]
        st.second = [np.zeros_like(a) for a in params.arrays()]
        return st


class NonFiniteGradient(FloatingPointError):
    pass


def optimizer_step(params: ParamSet, grads: ParamSet, state: OptimizerState):
    """Descend along ``grads`` in place.  Returns ``(params, state)``."""
    g_arrays = grads.arrays()
    if [g.shape for g in g_arrays] != params.shapes():
        raise ValueError("gradient shapes do not match parameters")
    for i, g in enumerate(g_arrays):
        if not np.all(np.isfinite(g)):
            kind = "weight" if i < len(params.weights) else "bias"
            raise NonFiniteGradient(f"non-finite gradient in {kind} array {i % len(params.weights)}")
    if state.max_grad_norm is not None:
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in g_arrays))
        if norm > state.max_grad_norm:
            g_arrays = [g * (state.max_grad_norm / norm) for g in g_arrays]
    state.step += 1
    lr = state.learning_rate
    if state.method == "sgd":
        for p, g in zip(params.arrays(), g_arrays):
            p -= lr * g
    else:
        b1, b2 = state.beta1, state.beta2
        c1 = 1.0 - b1**state.step
        c2 = 1.0 - b2**state.step
        for p, g, m, v in zip(params.arrays(), g_arrays, state.first, state.second):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.bump()
    return params, state


# --------------------------------------------------------------------------
# checkpoints


def save_params(path, spec: DenseNetSpec, params: ParamSet, **meta) -> None:
    header = dict(spec=asdict(spec), spec_digest=spec.digest(), meta=meta)
    arrays = {f"W{i}": w for i, w in enumerate(params.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(params.biases)})
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_params(path, spec: DenseNetSpec) -> ParamSet:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header["spec_digest"] != spec.digest():
            raise ValueError("checkpoint was written for a different network spec")
        params = ParamSet([data[f"W{i}"] for i in range(spec.n_layers)],
                          [data[f"b{i}"] for i in range(spec.n_layers)])
    _check_shapes(spec, params)
    return params
