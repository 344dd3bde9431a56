"""Minimal feedforward network with reverse-mode gradients.

Small tanh MLPs in float64 numpy, with hand-rolled backprop, an Adam
optimizer over flat parameter vectors, and a binary checkpoint format.
This is the numeric substrate for the policy mean network and the
forward-dynamics model; there is deliberately no general graph autodiff.
"""

from dataclasses import dataclass, field
import struct

import numpy as np

from .errors import InputError, NumericError

CHECKPOINT_MAGIC = b"NNCKPT01"


@dataclass
class GradTape:
    """Activations recorded by one forward pass, enough to backprop a scalar loss.

    ``acts[0]`` is the input batch; ``acts[i+1]`` is the post-activation
    output of layer i (tanh for hidden layers, identity for the last).
    """

    acts: list


class Mlp:
    """Fully connected net: tanh hidden layers, identity output.

    Weights are stored as (fan_out, fan_in) matrices; the flat parameter
    vector concatenates ``W.ravel()`` then ``b`` for each layer in order.
    """

    def __init__(self, widths: list[int]):
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise InputError(f"invalid layer widths {widths}")
        self.widths = list(widths)
        self.weights = [np.zeros((widths[i + 1], widths[i])) for i in range(len(widths) - 1)]
        self.biases = [np.zeros(widths[i + 1]) for i in range(len(widths) - 1)]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def init_uniform_fan_in(self, rng: np.random.Generator) -> "Mlp":
        """Scaled-uniform fan-in init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), b = 0."""
        for i, w in enumerate(self.weights):
            bound = 1.0 / np.sqrt(w.shape[1])
            self.weights[i] = rng.uniform(-bound, bound, size=w.shape)
            self.biases[i] = np.zeros(w.shape[0])
        return self

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Single-vector forward pass."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.in_dim,):
            raise InputError(f"expected input shape ({self.in_dim},), got {x.shape}")
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = w @ h + b
            if i < last:
                h = np.tanh(h)
        return h

    def forward_batch(self, xs: np.ndarray) -> np.ndarray:
        """Batched forward pass, xs of shape (n, in_dim)."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.in_dim:
            raise InputError(f"expected input shape (n, {self.in_dim}), got {xs.shape}")
        h = xs
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i < last:
                h = np.tanh(h)
        return h

    def forward_tape(self, xs: np.ndarray) -> tuple[np.ndarray, GradTape]:
        """Batched forward pass that records activations for backprop."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.in_dim:
            raise InputError(f"expected input shape (n, {self.in_dim}), got {xs.shape}")
        acts = [xs]
        h = xs
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return h, GradTape(acts)

    def backward(self, tape: GradTape, grad_output: np.ndarray) -> np.ndarray:
        """Flat gradient of a scalar loss given dloss/doutput for the taped pass.

        Returns d(loss)/d(params) as one vector in flat-parameter order.
        """
        delta = np.asarray(grad_output, dtype=np.float64)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = delta.T @ tape.acts[i]
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                # tape.acts[i] is tanh(pre-activation) of the previous hidden layer
                delta = (delta @ self.weights[i]) * (1.0 - tape.acts[i] ** 2)
        return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in zip(grads_w, grads_b)])

    def params_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def set_params_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise InputError(f"expected {self.n_params} parameters, got {flat.shape}")
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos : pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = flat[pos : pos + b.size].copy()
            pos += b.size

    def clone(self) -> "Mlp":
        out = Mlp(self.widths)
        out.weights = [w.copy() for w in self.weights]
        out.biases = [b.copy() for b in self.biases]
        return out


@dataclass
class AdamState:
    """Adaptive-moment optimizer state over a flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))

    def copy(self) -> "AdamState":
        return AdamState(m=self.m.copy(), v=self.v.copy(), t=self.t,
                         beta1=self.beta1, beta2=self.beta2, eps=self.eps)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float) -> np.ndarray:
    """One Adam descent step on the flat vector; mutates ``state``, returns new params."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape:
        raise InputError(f"gradient shape {grads.shape} != parameter shape {params.shape}")
    if not np.all(np.isfinite(grads)):
        raise NumericError("non-finite gradient in optimizer step")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def save_checkpoint(path, widths: list[int], params: np.ndarray) -> None:
    """Write magic, layer widths (little-endian int32) and a flat float64 vector.

    ``params`` may be longer than the widths imply; trailing values are
    extra per-model floats (e.g. a policy's log-std vector).
    """
    params = np.ascontiguousarray(params, dtype="<f8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(widths)))
        f.write(struct.pack(f"<{len(widths)}i", *widths))
        f.write(params.tobytes())


def load_checkpoint(path) -> tuple[list[int], np.ndarray]:
    """Read a checkpoint; returns (widths, flat float64 vector)."""
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise InputError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (n_widths,) = struct.unpack("<I", f.read(4))
        widths = list(struct.unpack(f"<{n_widths}i", f.read(4 * n_widths)))
        params = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)
    return widths, params
