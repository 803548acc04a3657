"""Tape-based reverse-mode differentiation over whole numpy arrays.

A :class:`Graph` records every operation applied to its :class:`Var` values in
creation order, which is already a topological order.  ``Graph.backward``
walks the tape once in reverse and accumulates vector-Jacobian products.
Parameters used several times (the shared data module, for instance) receive
the sum of all their contributions.

Operations in :mod:`lgteun.tensor.ops` accept plain ``np.ndarray`` as well as
``Var``; when no input is a ``Var`` nothing is recorded, so the same model code
serves inference and training.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from lgteun.errors import ContractError

VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Var:
    """A node on a tape: a value plus the recipe to push gradients upstream."""

    __slots__ = ("value", "graph", "index", "parents", "vjp", "name")
    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, value, graph, index, parents=(), vjp=None, name=None):
        self.value = value
        self.graph = graph
        self.index = index
        self.parents = parents
        self.vjp = vjp
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Var(shape={self.shape}, dtype={self.dtype}{tag})"

    # arithmetic sugar; the heavy lifting lives in ops
    def __add__(self, other):
        from lgteun.tensor import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from lgteun.tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from lgteun.tensor import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from lgteun.tensor import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from lgteun.tensor import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from lgteun.tensor import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from lgteun.tensor import ops
        return ops.matmul(other, self)

    def __getitem__(self, key):
        from lgteun.tensor import ops
        return ops.getitem(self, key)

    def reshape(self, *shape):
        from lgteun.tensor import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


class Graph:
    """Single-writer tape.  Record and differentiate on one thread."""

    def __init__(self):
        self.nodes: list[Var] = []
        self.leaves: dict[str, Var] = {}

    def param(self, name: str, value) -> Var:
        """Register a differentiable leaf."""
        if name in self.leaves:
            raise ContractError(f"parameter {name!r} registered twice")
        v = Var(np.asarray(value), self, len(self.nodes), name=name)
        self.nodes.append(v)
        self.leaves[name] = v
        return v

    def params(self, values) -> dict[str, Var]:
        return {k: self.param(k, v) for k, v in values.items()}

    def record(self, value, inputs, vjp: VJP) -> Var:
        parents = tuple(a if isinstance(a, Var) else None for a in inputs)
        v = Var(value, self, len(self.nodes), parents, vjp)
        self.nodes.append(v)
        return v

    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        return backward(self, loss)


def backward(graph: Graph, loss: Var) -> dict[str, np.ndarray]:
    """Gradient of scalar ``loss`` with respect to every leaf of ``graph``.

    Leaves that do not influence ``loss`` get an all-zero gradient.
    """
    if not isinstance(loss, Var) or loss.graph is not graph:
        raise ContractError("loss must be a Var recorded on this graph")
    if loss.value.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.value)}
    for node in reversed(graph.nodes[: loss.index + 1]):
        g = grads.pop(node.index, None)
        if g is None or node.vjp is None:
            if g is not None:
                grads[node.index] = g  # leaf: keep it
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if parent is None or pg is None:
                continue
            if parent.index in grads:
                grads[parent.index] = grads[parent.index] + pg
            else:
                grads[parent.index] = pg

    out = {}
    for name, leaf in graph.leaves.items():
        g = grads.get(leaf.index)
        out[name] = np.zeros_like(leaf.value) if g is None else np.asarray(g, dtype=leaf.value.dtype)
    return out


def value(x):
    """Underlying array of a Var, or ``x`` itself."""
    return x.value if isinstance(x, Var) else x


def record(out, inputs, vjp: VJP):
    """Attach ``out`` to the tape of the first Var among ``inputs`` (if any)."""
    graph = None
    for a in inputs:
        if isinstance(a, Var):
            graph = a.graph
            break
    if graph is None:
        return out
    return graph.record(out, inputs, vjp)
