"""Parameter containers and differentiable building blocks.

Parameters live in a flat float64 vector with a named-shape index, so the
optimizer treats everything uniformly while model code addresses tensors by
name.  Forward functions are written against the :mod:`prbdyn.autodiff`
primitives and therefore run on plain arrays (fast inference), tape variables
(reverse-mode training), or dual numbers (forward-mode derivatives) without
modification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad

__all__ = [
    "ParamVector",
    "MlpSpec",
    "mlp_param_shapes",
    "gru_param_shapes",
    "init_params",
    "mlp_forward",
    "gru_cell",
    "residual_step",
    "value_and_grad",
    "grad",
    "jvp",
    "save_params",
    "load_params",
]

PARAMS_FORMAT = "prbdyn-params-v1"


class ParamVector:
    """Flat parameter array plus a name -> (offset, shape) index."""

    def __init__(self, data, index):
        self.data = np.asarray(data, dtype=float)
        self.index = dict(index)
        total = sum(int(np.prod(s)) for _, s in self.index.values())
        if total != self.data.size:
            raise ValueError(f"index covers {total} entries, data has {self.data.size}")

    @classmethod
    def from_arrays(cls, arrays: dict) -> "ParamVector":
        index, chunks, offset = {}, [], 0
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=float)
            index[name] = (offset, arr.shape)
            chunks.append(arr.ravel())
            offset += arr.size
        data = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(data, index)

    def __getitem__(self, name):
        offset, shape = self.index[name]
        return self.data[offset : offset + int(np.prod(shape))].reshape(shape)

    def __contains__(self, name):
        return name in self.index

    def names(self):
        return list(self.index.keys())

    def copy(self) -> "ParamVector":
        return ParamVector(self.data.copy(), self.index)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.data), self.index)

    def as_dict(self):
        return {name: self[name].copy() for name in self.index}

    @property
    def size(self):
        return self.data.size


@dataclass(frozen=True)
class MlpSpec:
    """Feed-forward network: affine-activation stack, last layer affine."""

    in_dim: int
    hidden: tuple = (64, 64)
    out_dim: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1 or any(w < 1 for w in self.hidden):
            raise ValueError("all layer widths must be >= 1")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def dims(self):
        return (self.in_dim, *self.hidden, self.out_dim)


_ACTIVATIONS = {"tanh": ad.tanh, "sigmoid": ad.sigmoid, "identity": lambda x: x}


def mlp_param_shapes(spec: MlpSpec, prefix=""):
    shapes = {}
    dims = spec.dims
    for i in range(len(dims) - 1):
        shapes[f"{prefix}W{i}"] = (dims[i], dims[i + 1])
        shapes[f"{prefix}b{i}"] = (dims[i + 1],)
    return shapes


def gru_param_shapes(input_dim: int, hidden_dim: int, prefix=""):
    shapes = {}
    for gate in ("z", "r", "h"):
        shapes[f"{prefix}W{gate}"] = (input_dim, hidden_dim)
        shapes[f"{prefix}U{gate}"] = (hidden_dim, hidden_dim)
        shapes[f"{prefix}b{gate}"] = (hidden_dim,)
    return shapes


def init_params(shapes: dict, seed: int) -> ParamVector:
    """Weights uniform in +-1/sqrt(fan_in); biases zero; deterministic."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in shapes.items():
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            arrays[name] = rng.uniform(-bound, bound, shape)
    return ParamVector.from_arrays(arrays)


def mlp_forward(spec: MlpSpec, params, u, prefix=""):
    """Evaluate the MLP; ``params`` is any name-indexable container."""
    act = _ACTIVATIONS[spec.activation]
    n_layers = len(spec.dims) - 1
    out = u
    for i in range(n_layers):
        out = ad.add(ad.matmul(out, params[f"{prefix}W{i}"]), params[f"{prefix}b{i}"])
        if i < n_layers - 1:
            out = act(out)
    return out


def gru_cell(params, h, u, prefix=""):
    """Gated recurrent unit: h' = (1 - z) * h + z * htilde."""
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(u, params[f"{prefix}Wz"]),
                                 ad.matmul(h, params[f"{prefix}Uz"])),
                          params[f"{prefix}bz"]))
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(u, params[f"{prefix}Wr"]),
                                 ad.matmul(h, params[f"{prefix}Ur"])),
                          params[f"{prefix}br"]))
    cand = ad.tanh(ad.add(ad.add(ad.matmul(u, params[f"{prefix}Wh"]),
                                 ad.matmul(ad.mul(r, h), params[f"{prefix}Uh"])),
                          params[f"{prefix}bh"]))
    return ad.add(ad.mul(ad.sub(1.0, z), h), ad.mul(z, cand))


def residual_step(spec: MlpSpec, params, h, u, prefix=""):
    """Residual update h' = h + MLP([h; u])."""
    stacked = ad.concat([h, u], axis=-1)
    return ad.add(h, mlp_forward(spec, params, stacked, prefix=prefix))


# --------------------------------------------------------------- gradients

class _TracedParams:
    """Name-indexable view handing out tape variables (or duals)."""

    def __init__(self, entries):
        self._entries = entries

    def __getitem__(self, name):
        return self._entries[name]

    def __contains__(self, name):
        return name in self._entries


def value_and_grad(fn, params: ParamVector):
    """Evaluate ``fn(params) -> scalar`` and its exact gradient.

    Returns ``(value, grad)`` with ``grad`` a ParamVector sharing the index.
    Parameters the function never touches get zero gradient.
    """
    tape = ad.Tape()
    leaves = {name: tape.leaf(params[name]) for name in params.index}
    out = fn(_TracedParams(leaves))
    if isinstance(out, ad.Dual):
        out = out.primal
    if not isinstance(out, ad.Var):
        value = float(np.asarray(out))
        return value, params.zeros_like()
    if out.value.ndim != 0:
        raise ValueError("objective must be scalar")
    grads = ad.backward(out)
    flat = np.zeros_like(params.data)
    for name, (offset, shape) in params.index.items():
        g = grads[leaves[name].slot]
        if g is not None:
            flat[offset : offset + int(np.prod(shape))] = np.asarray(g).ravel()
    return float(out.value), ParamVector(flat, params.index)


def grad(fn, params: ParamVector) -> ParamVector:
    """Exact reverse-mode gradient of a scalar function of the parameters."""
    return value_and_grad(fn, params)[1]


def jvp(fn, params: ParamVector, direction: ParamVector):
    """Exact forward-mode directional derivative of ``fn`` at ``params``.

    ``fn`` may return a scalar or an array; the tangent has the same shape.
    """
    if direction.data.shape != params.data.shape:
        raise ValueError("direction must match the parameter layout")
    duals = {
        name: ad.Dual(params[name], direction[name]) for name in params.index
    }
    out = fn(_TracedParams(duals))
    if not isinstance(out, ad.Dual):
        return np.zeros(np.shape(out)) if np.ndim(out) else 0.0
    tangent = out.tangent
    if tangent is None:
        shape = np.shape(out.primal)
        return np.zeros(shape) if shape else 0.0
    tangent = np.asarray(tangent, dtype=float)
    return tangent if tangent.ndim else float(tangent)


# ------------------------------------------------------------- checkpoints

def save_params(params: ParamVector, path, extra: dict | None = None):
    """Binary checkpoint: one-line JSON header, newline, little-endian f64."""
    header = {
        "format": PARAMS_FORMAT,
        "index": {k: [int(off), list(shape)] for k, (off, shape) in params.index.items()},
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header).encode() + b"\n" + params.data.astype("<f8").tobytes()
    Path(path).write_bytes(blob)


def load_params(path):
    """Load a checkpoint; returns ``(params, header_dict)``."""
    blob = Path(path).read_bytes()
    nl = blob.index(b"\n")
    header = json.loads(blob[:nl].decode())
    if header.get("format") != PARAMS_FORMAT:
        raise ValueError(f"unsupported checkpoint format in {path}")
    data = np.frombuffer(blob[nl + 1 :], dtype="<f8").astype(float)
    index = {k: (int(off), tuple(shape)) for k, (off, shape) in header["index"].items()}
    return ParamVector(data, index), header
