"""Dense building blocks: MLPs, the two losses, SGD and checkpoints."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import GradientMap, Node, ShapeError, Tape

CHECKPOINT_MAGIC = "VFLCKPT 1"


@dataclass
class DenseLayer:
    weight: np.ndarray  # [in_dim, out_dim]
    bias: np.ndarray  # [out_dim]

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(f"inconsistent layer shapes: weight {self.weight.shape}, bias {self.bias.shape}")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("layer parameters must be finite")

    @property
    def in_dim(self):
        return self.weight.shape[0]

    @property
    def out_dim(self):
        return self.weight.shape[1]

    @classmethod
    def glorot(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "DenseLayer":
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        return cls(rng.uniform(-limit, limit, size=(in_dim, out_dim)), np.zeros(out_dim))


@dataclass
class Mlp:
    """Relu on hidden layers, identity on the output layer."""

    layers: List[DenseLayer]
    name: str = "mlp"

    def __post_init__(self):
        if not self.layers:
            raise ValueError("an Mlp needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")

    @classmethod
    def build(cls, dims: Sequence[int], rng: np.random.Generator, name: str = "mlp") -> "Mlp":
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        layers = [DenseLayer.glorot(i, o, rng) for i, o in zip(dims[:-1], dims[1:])]
        return cls(layers, name=name)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def dims(self) -> List[int]:
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def params(self) -> Dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"{self.name}.{i}.weight"] = layer.weight
            out[f"{self.name}.{i}.bias"] = layer.bias
        return out

    def copy(self, name: str | None = None) -> "Mlp":
        layers = [DenseLayer(l.weight.copy(), l.bias.copy()) for l in self.layers]
        return Mlp(layers, name=name or self.name)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Tape-free forward pass."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"{self.name}: expected input with {self.in_dim} columns, got shape {x.shape}")
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            # einsum, not BLAS: each row's result must not depend on the batch it sits in
            x = np.einsum("ij,jk->ik", x, layer.weight) + layer.bias
            if i < last:
                x = np.maximum(x, 0.0)
        return x

    def on_tape(self, tape: Tape, x: Node) -> Node:
        if x.value.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"{self.name}: expected input with {self.in_dim} columns, got shape {x.shape}")
        params = self.params()
        last = len(self.layers) - 1
        for i in range(len(self.layers)):
            w = tape.parameter(f"{self.name}.{i}.weight", params[f"{self.name}.{i}.weight"])
            b = tape.parameter(f"{self.name}.{i}.bias", params[f"{self.name}.{i}.bias"])
            x = ad.add(ad.matmul(x, w), b)
            if i < last:
                x = ad.relu(x)
        return x


def mlp_forward(m: Mlp, x) -> np.ndarray:
    return m(x)


def bce_with_logits(logit: Node, label) -> Node:
    """Mean of log(1 + exp(-l)) + (1 - y) l, arranged to avoid overflow."""
    tape = logit.tape
    y = np.asarray(label.value if isinstance(label, Node) else label, dtype=np.float64)
    if not np.all(np.isfinite(logit.value)):
        raise ValueError("bce_with_logits: non-finite logits")
    if y.shape != logit.shape:
        raise ShapeError(f"bce_with_logits: labels {y.shape} vs logits {logit.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("bce_with_logits: labels must be 0 or 1")
    # |l| written as 2 relu(l) - l so the slope at l = 0 comes out as sigmoid(0) - y
    abs_l = 2.0 * ad.relu(logit) - logit
    softplus_tail = ad.log(ad.exp(-abs_l) + 1.0)
    per_row = ad.relu(logit) - logit * tape.constant(y) + softplus_tail
    return ad.mean(per_row)


def mse_loss(a: Node, b) -> Node:
    b = a.tape.lift(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse_loss: shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    return ad.mean(d * d)


@dataclass
class SgdOptimizer:
    learning_rate: float
    momentum: float = 0.0
    clip_norm: Optional[float] = None  # global L2 norm cap over one step's gradients
    velocity: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive")


def sgd_step(params: Dict[str, np.ndarray], grads: GradientMap, opt: SgdOptimizer) -> Dict[str, np.ndarray]:
    """Update ``params`` in place: v <- mu v + g; p <- p - lr v."""
    for name, p in params.items():
        if name not in grads:
            raise KeyError(f"no gradient for parameter {name!r}")
        if grads[name].shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {grads[name].shape}, parameter {p.shape}")
    scale = 1.0
    if opt.clip_norm is not None:
        norm = np.sqrt(sum(float(np.sum(grads[name] ** 2)) for name in params))
        if norm > opt.clip_norm:
            scale = opt.clip_norm / norm
    for name, p in params.items():
        g = grads[name] if scale == 1.0 else grads[name] * scale
        if opt.momentum:
            v = opt.velocity.get(name)
            v = g.copy() if v is None else opt.momentum * v + g
            opt.velocity[name] = v
            step = v
        else:
            step = g
        p -= opt.learning_rate * step
    return params


# ---------------------------------------------------------------------------
# checkpoints: textual manifest, then raw little-endian f64 payload


def save_checkpoint(path, models: Sequence[Mlp]) -> None:
    lines = [CHECKPOINT_MAGIC]
    blobs = []
    for m in models:
        for name, arr in m.params().items():
            lines.append(name + " " + " ".join(str(d) for d in arr.shape))
            blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    lines.append("END")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for b in blobs:
            fh.write(b)


def load_checkpoint(path) -> Dict[str, Mlp]:
    data = Path(path).read_bytes()
    buf = io.BytesIO(data)
    header = buf.readline().decode("ascii").rstrip("\n")
    if header != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    manifest = []
    while True:
        line = buf.readline()
        if not line:
            raise ValueError(f"{path}: truncated manifest")
        line = line.decode("ascii").rstrip("\n")
        if line == "END":
            break
        name, *dims = line.split()
        manifest.append((name, tuple(int(d) for d in dims)))
    arrays = {}
    for name, shape in manifest:
        count = int(np.prod(shape))
        raw = buf.read(8 * count)
        if len(raw) != 8 * count:
            raise ValueError(f"{path}: truncated payload for {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)

    grouped: Dict[str, Dict[int, dict]] = {}
    for name, arr in arrays.items():
        model, idx, kind = name.rsplit(".", 2)
        grouped.setdefault(model, {}).setdefault(int(idx), {})[kind] = arr
    models = {}
    for model, layers in grouped.items():
        ordered = [DenseLayer(layers[i]["weight"], layers[i]["bias"]) for i in sorted(layers)]
        models[model] = Mlp(ordered, name=model)
    return models
