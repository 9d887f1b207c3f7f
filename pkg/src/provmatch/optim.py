"""Trainable parameter registry, Adam updates, init, and checkpoint I/O."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node
from .errors import GradMissing, IoFailure, ShapeMismatch

CHECKPOINT_VERSION = 1


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray | None = None
    m: np.ndarray | None = None
    v: np.ndarray | None = None


@dataclass
class ParamSet:
    """Named trainable tensors with gradient and Adam moment buffers."""

    params: dict[str, Param] = field(default_factory=dict)
    t: int = 0

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise ValueError(f"parameter {name!r} registered twice")
        self.params[name] = Param(np.asarray(value, dtype=np.float64))

    def __getitem__(self, name: str) -> Param:
        return self.params[name]

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = np.zeros_like(p.value)

    def copy(self) -> "ParamSet":
        out = ParamSet(t=self.t)
        for name, p in self.params.items():
            out.params[name] = Param(p.value.copy())
        return out


class ParamTape:
    """Per-forward-pass leaf nodes for a ParamSet.

    Build one per loss evaluation: ``tape.node(name)`` yields the leaf node
    for a parameter, and ``tape.backward(loss)`` runs reverse mode and adds
    the resulting leaf gradients into the ParamSet's grad buffers.
    """

    def __init__(self, ps: ParamSet):
        self.ps = ps
        self._leaves: dict[str, Node] = {}

    def node(self, name: str) -> Node:
        if name not in self._leaves:
            self._leaves[name] = Node(self.ps[name].value)
        return self._leaves[name]

    def backward(self, loss: Node) -> None:
        from .autodiff import backward as run_backward

        run_backward(loss)
        for name, leaf in self._leaves.items():
            if leaf.grad is not None:
                p = self.ps[name]
                if p.grad is None:
                    p.grad = np.zeros_like(p.value)
                p.grad += leaf.grad


def adam_step(
    ps: ParamSet,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam update over every parameter from its populated gradient."""
    for name, p in ps.params.items():
        if p.grad is None:
            raise GradMissing(f"no gradient for parameter {name!r}")
    ps.t += 1
    t = ps.t
    for p in ps.params.values():
        if p.m is None:
            p.m = np.zeros_like(p.value)
            p.v = np.zeros_like(p.value)
        p.m = beta1 * p.m + (1.0 - beta1) * p.grad
        p.v = beta2 * p.v + (1.0 - beta2) * p.grad * p.grad
        m_hat = p.m / (1.0 - beta1 ** t)
        v_hat = p.v / (1.0 - beta2 ** t)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)


def xavier_init(shape: tuple[int, ...], seed) -> np.ndarray:
    """Uniform Glorot init, deterministic for a given seed (or Generator)."""
    if not shape:
        raise ValueError("shape must be nonempty")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    fan_in = shape[0]
    fan_out = shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def save_checkpoint(path: str, ps: ParamSet, config: dict | None = None) -> None:
    """Bit-exact checkpoint: names, shapes, raw little-endian float64 data."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "t": ps.t,
        "config": config or {},
        "params": [
            {
                "name": name,
                "shape": list(p.value.shape),
                "data": base64.b64encode(
                    np.ascontiguousarray(p.value, dtype="<f8").tobytes()
                ).decode("ascii"),
            }
            for name, p in ps.params.items()
        ],
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}")


def load_checkpoint(path: str) -> tuple[ParamSet, dict]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}")
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise IoFailure(f"unsupported checkpoint version in {path}")
    ps = ParamSet(t=payload.get("t", 0))
    for entry in payload["params"]:
        raw = base64.b64decode(entry["data"])
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(entry["shape"])
        if arr.size != int(np.prod(entry["shape"]) if entry["shape"] else 1):
            raise ShapeMismatch(f"corrupt checkpoint entry {entry['name']!r}")
        ps.add(entry["name"], arr.copy())
    return ps, payload.get("config", {})
