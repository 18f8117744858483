"""Small fully-connected networks with hand-written backprop and Adam.

Everything is float64.  Inputs are batched row-wise: ``x.shape == (batch, in)``;
a 1-D input is treated as a batch of one and returns a 1-D output.

Checkpoint format (``save``/``load``)::

    line 1   : b"FIPWC-MLP 1\\n"
    line 2   : JSON header {"input_dim", "hidden_layers", "output_dim",
               "output_activation", "extra"} + b"\\n"
    remainder: little-endian float64, for each layer in order the weight
               matrix (shape (fan_in, fan_out), row-major) then its bias
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"FIPWC-MLP 1\n"


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_layers: tuple[int, ...]
    output_dim: int
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        dims = (self.input_dim, *self.hidden_layers, self.output_dim)
        if min(dims) < 1:
            raise ValueError(f"all layer widths must be >= 1: {dims}")
        if self.output_activation not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layers, self.output_dim)


class Mlp:
    """ReLU hidden layers, linear or tanh output."""

    def __init__(self, spec: MlpSpec, rng: np.random.Generator | None = None, final_scale: float | None = None):
        self.spec = spec
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        rng = rng if rng is not None else np.random.default_rng(0)
        dims = spec.dims
        n = len(dims) - 1
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            if i == n - 1 and final_scale is not None:
                w = rng.uniform(-final_scale, final_scale, (fan_in, fan_out))
                b = rng.uniform(-final_scale, final_scale, fan_out)
            else:
                # He init for layers feeding a ReLU
                w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
                b = np.zeros(fan_out)
            self.weights.append(w)
            self.biases.append(b)
        self.grad_weights = [np.zeros_like(w) for w in self.weights]
        self.grad_biases = [np.zeros_like(b) for b in self.biases]
        self._cache = None

    # parameters as a flat list: W0, b0, W1, b1, ...
    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def grads(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.grad_weights, self.grad_biases):
            out += [w, b]
        return out

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.spec.input_dim:
            raise ValueError(f"expected input dim {self.spec.input_dim}, got {h.shape[1]}")
        acts = [h]
        pre = []
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ w + b
            pre.append(a)
            if i < n - 1:
                h = np.maximum(a, 0.0)
            elif self.spec.output_activation == "tanh":
                h = np.tanh(a)
            else:
                h = a
            acts.append(h)
        self._cache = (acts, pre, single)
        return h[0] if single else h

    __call__ = forward

    def backward(self, upstream) -> np.ndarray:
        """Backpropagate ``d loss / d output`` from the last ``forward``.

        Overwrites the gradient buffers and returns ``d loss / d input``.
        """
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        acts, pre, single = self._cache
        g = np.asarray(upstream, dtype=float)
        if single:
            g = g[None, :] if g.ndim == 1 else g.reshape(1, -1)
        if g.shape != acts[-1].shape:
            raise ValueError(f"upstream gradient shape {g.shape} != output shape {acts[-1].shape}")
        n = len(self.weights)
        if self.spec.output_activation == "tanh":
            g = g * (1.0 - acts[-1] ** 2)
        for i in range(n - 1, -1, -1):
            self.grad_weights[i][...] = acts[i].T @ g
            self.grad_biases[i][...] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (pre[i - 1] > 0.0)
        return g[0] if single else g

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.spec = self.spec
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other.grad_weights = [np.zeros_like(w) for w in self.weights]
        other.grad_biases = [np.zeros_like(b) for b in self.biases]
        other._cache = None
        return other

    def to_bytes(self, extra: dict | None = None) -> bytes:
        header = {
            "input_dim": self.spec.input_dim,
            "hidden_layers": list(self.spec.hidden_layers),
            "output_dim": self.spec.output_dim,
            "output_activation": self.spec.output_activation,
            "extra": extra or {},
        }
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for p in self.params:
            buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> tuple["Mlp", dict]:
        if not data.startswith(MAGIC):
            raise ValueError("not an MLP checkpoint")
        rest = data[len(MAGIC):]
        line, _, payload = rest.partition(b"\n")
        header = json.loads(line)
        spec = MlpSpec(header["input_dim"], tuple(header["hidden_layers"]), header["output_dim"], header["output_activation"])
        net = cls(spec)
        offset = 0
        for p in net.params:
            nbytes = p.size * 8
            chunk = payload[offset:offset + nbytes]
            if len(chunk) != nbytes:
                raise ValueError("truncated MLP checkpoint")
            p[...] = np.frombuffer(chunk, dtype="<f8").reshape(p.shape)
            offset += nbytes
        if offset != len(payload):
            raise ValueError("trailing bytes in MLP checkpoint")
        return net, header["extra"]

    def save(self, path, extra: dict | None = None) -> None:
        Path(path).write_bytes(self.to_bytes(extra))

    @classmethod
    def load(cls, path) -> tuple["Mlp", dict]:
        return cls.from_bytes(Path(path).read_bytes())


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in net.params], v=[np.zeros_like(p) for p in net.params], **kw)


def adam_step(net: Mlp, opt: AdamState, grads: list[np.ndarray] | None = None) -> Mlp:
    """Bias-corrected Adam update of ``net`` in place (defaults to its gradient buffers)."""
    grads = net.grads if grads is None else grads
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise FloatingPointError(f"non-finite gradient in parameter block {i} ({bad} entries), Adam step {opt.t + 1}")
    opt.t += 1
    c1 = 1.0 - opt.beta1**opt.t
    c2 = 1.0 - opt.beta2**opt.t
    for p, g, m, v in zip(net.params, grads, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    return net


def soft_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """``target <- tau * online + (1 - tau) * target``."""
    if target.spec != online.spec:
        raise ValueError(f"spec mismatch: {target.spec} vs {online.spec}")
    for t, o in zip(target.params, online.params):
        t *= 1.0 - tau
        t += tau * o
    return target
