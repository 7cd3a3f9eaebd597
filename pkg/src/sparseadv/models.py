"""Small differentiable reference classifiers with a hand-written backward pass.

A :class:`ReferenceModel` is a stack of dense and ReLU layers applied to the
row-major flattened image.  It exposes the two oracle interfaces the attacks
rely on: ``logits`` (black-box scores) and ``input_gradient`` (white-box
gradient of the cross-entropy loss with respect to the input).
"""

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np


class LogitOracle(Protocol):
    def logits(self, batch: np.ndarray) -> np.ndarray: ...


class GradientOracle(Protocol):
    def input_gradient(self, x: np.ndarray, label: int) -> np.ndarray: ...


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def softmax(z):
    return np.exp(log_softmax(z))


def cross_entropy(logits, label):
    """``-log softmax(logits)[label]`` for one logit vector, stable for large magnitudes."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ValueError("cross_entropy expects a single logit vector")
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    return float(-log_softmax(logits)[label])


def glorot_uniform(fan_in, fan_out, rng):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class Dense:
    """``out = W @ in + b`` with ``W`` of shape ``(out, in)``."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise ValueError(f"dense layer shapes do not agree: w {self.w.shape}, b {self.b.shape}")

    @property
    def n_in(self):
        return self.w.shape[1]

    @property
    def n_out(self):
        return self.w.shape[0]


@dataclass
class ReLU:
    pass


class ReferenceModel:
    """Multi-layer perceptron on flattened images.

    Parameters
    ----------
    input_shape : tuple of int
        ``(H, W, C)`` of the images the model accepts.
    layers : list of Dense / ReLU
        Applied in order; the last dense layer's width is the number of
        classes.
    """

    def __init__(self, input_shape, layers):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.layers = list(layers)
        dense = [layer for layer in self.layers if isinstance(layer, Dense)]
        if not dense:
            raise ValueError("model needs at least one dense layer")
        width = int(np.prod(self.input_shape))
        for layer in self.layers:
            if isinstance(layer, Dense):
                if layer.n_in != width:
                    raise ValueError(f"dense layer expects {layer.n_in} inputs, previous width is {width}")
                width = layer.n_out
            elif not isinstance(layer, ReLU):
                raise TypeError(f"unsupported layer {layer!r}")
        self.n_classes = width

    @classmethod
    def mlp(cls, input_shape, hidden, n_classes, seed=0):
        """Glorot-initialised MLP with ReLU between the given hidden widths."""
        rng = np.random.default_rng(seed)
        sizes = [int(np.prod(input_shape)), *hidden, n_classes]
        layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            layers.append(Dense(glorot_uniform(n_in, n_out, rng), np.zeros(n_out)))
            if i < len(sizes) - 2:
                layers.append(ReLU())
        return cls(input_shape, layers)

    # -- parameters ---------------------------------------------------------

    def parameters(self):
        """Flat list of parameter arrays (views, in layer order: w, b, w, b, ...)."""
        params = []
        for layer in self.layers:
            if isinstance(layer, Dense):
                params.extend([layer.w, layer.b])
        return params

    def copy(self):
        layers = [Dense(l.w.copy(), l.b.copy()) if isinstance(l, Dense) else ReLU() for l in self.layers]
        return ReferenceModel(self.input_shape, layers)

    # -- forward / backward -------------------------------------------------

    def _flatten(self, batch):
        batch = np.asarray(batch, dtype=np.float64)
        single = batch.shape == self.input_shape
        if single:
            batch = batch[None]
        if batch.shape[1:] != self.input_shape:
            raise ValueError(f"model expects inputs of shape {self.input_shape}, got {batch.shape[1:]}")
        return batch.reshape(batch.shape[0], -1), single

    def _forward(self, h):
        cache = []
        for layer in self.layers:
            cache.append(h)
            if isinstance(layer, Dense):
                h = h @ layer.w.T + layer.b
            else:
                h = np.maximum(h, 0.0)
        return h, cache

    def logits(self, batch):
        """Logits for one image ``(H, W, C)`` or a batch ``(B, H, W, C)``."""
        flat, single = self._flatten(batch)
        out, _ = self._forward(flat)
        return out[0] if single else out

    def predict(self, batch):
        return np.argmax(self.logits(batch), axis=-1)

    def loss_and_gradients(self, batch, labels, need_params=True):
        """Mean cross-entropy over a batch and its gradients.

        Returns ``(loss, param_grads, input_grads)`` where ``param_grads``
        follows the order of :meth:`parameters` (``None`` when
        ``need_params`` is false) and ``input_grads`` has the batch's shape.
        The input gradient is that of each sample's own loss, not of the mean.
        """
        batch = np.asarray(batch, dtype=np.float64)
        flat, single = self._flatten(batch)
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        n = flat.shape[0]
        if labels.shape != (n,):
            raise ValueError("one label per input is required")
        if np.any((labels < 0) | (labels >= self.n_classes)):
            raise ValueError("label out of range")
        out, cache = self._forward(flat)
        logp = log_softmax(out)
        loss = float(-np.mean(logp[np.arange(n), labels]))

        # per-sample dL_i/dlogits
        delta = np.exp(logp)
        delta[np.arange(n), labels] -= 1.0
        grads = []
        for layer, h_in in zip(reversed(self.layers), reversed(cache)):
            if isinstance(layer, Dense):
                if need_params:
                    grads.append(delta.T @ h_in / n)
                    grads.append(delta.sum(axis=0) / n)
                delta = delta @ layer.w
            else:
                delta = delta * (h_in > 0)
        param_grads = None
        if need_params:
            # collected as (dW, db) pairs in reverse layer order
            pairs = [(grads[i], grads[i + 1]) for i in range(0, len(grads), 2)]
            param_grads = [g for pair in reversed(pairs) for g in pair]
        input_grads = delta.reshape((n, *self.input_shape))
        if single:
            input_grads = input_grads[0]
        return loss, param_grads, input_grads

    def input_gradient(self, x, label):
        """Gradient of ``cross_entropy(logits(x), label)`` with respect to ``x``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise ValueError(f"model expects inputs of shape {self.input_shape}, got {x.shape}")
        _, _, grad = self.loss_and_gradients(x, [label], need_params=False)
        return grad

    # -- serialisation ------------------------------------------------------

    def to_dict(self):
        layers = []
        for layer in self.layers:
            if isinstance(layer, Dense):
                layers.append({
                    "type": "dense",
                    "in": layer.n_in,
                    "out": layer.n_out,
                    "w": layer.w.ravel().tolist(),
                    "b": layer.b.tolist(),
                })
            else:
                layers.append({"type": "relu"})
        return {"k_classes": self.n_classes, "input": list(self.input_shape), "layers": layers}

    @classmethod
    def from_dict(cls, doc):
        try:
            layers = []
            for entry in doc["layers"]:
                if entry["type"] == "dense":
                    n_in, n_out = int(entry["in"]), int(entry["out"])
                    w = np.asarray(entry["w"], dtype=np.float64)
                    if w.size != n_in * n_out:
                        raise ValueError(f"dense layer declares {n_out}x{n_in} weights, found {w.size}")
                    layers.append(Dense(w.reshape(n_out, n_in), entry["b"]))
                elif entry["type"] == "relu":
                    layers.append(ReLU())
                else:
                    raise ValueError(f"unknown layer type {entry['type']!r}")
            model = cls(doc["input"], layers)
        except KeyError as exc:
            raise ValueError(f"model document is missing field {exc}") from None
        if int(doc["k_classes"]) != model.n_classes:
            raise ValueError(f"k_classes={doc['k_classes']} but final layer has {model.n_classes} outputs")
        return model


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state):
    """Update ``params`` in place with one bias-corrected Adam step."""
    if len(params) != len(grads):
        raise ValueError("one gradient per parameter is required")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    t = state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or m.shape != p.shape:
            raise ValueError(f"shape mismatch between parameter {p.shape} and gradient {g.shape}")
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


def sgd_step(params, grads, lr):
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch between parameter {p.shape} and gradient {g.shape}")
        p -= lr * g
    return params
