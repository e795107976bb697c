"""Minimal reverse-mode differentiation over numpy arrays.

Every primitive in :mod:`tadaconv.ops` is written as a forward function that
returns ``(value, backward)``.  When any positional input is a :class:`Var`
the result is recorded on an implicit tape (the parent links of the output
``Var``) and gradients can be pulled back with :func:`backward`.  Plain
ndarrays go through the same forward code with no recording, so the numeric
result of a forward pass does not depend on whether gradients are requested.

Parameter containers are frozen dataclasses.  :func:`tree_map` walks them so
whole parameter trees can be lifted to ``Var`` leaves and their gradients
collected back into the same structure.
"""
from __future__ import annotations

import dataclasses
import functools
from typing import Any, Callable

import numpy as np


class Var:
    """An ndarray that remembers how it was computed."""

    __slots__ = ("value", "parents", "backward_fn", "name")

    def __init__(self, value, parents=(), backward_fn=None, name=None):
        self.value = np.asarray(value)
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape}, dtype={self.value.dtype}, name={self.name!r})"

    # Arithmetic sugar so composites read like numpy code.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)


def value_of(x):
    """Strip a ``Var`` down to its ndarray (no-op for arrays and None)."""
    return x.value if isinstance(x, Var) else x


def is_traced(*xs) -> bool:
    return any(isinstance(x, Var) for x in xs)


def primitive(fwd: Callable) -> Callable:
    """Turn ``fwd(*arrays, **static) -> (out, backward)`` into a traced op.

    ``backward(g)`` must return one cotangent per positional argument (``None``
    for arguments that are not differentiable or were passed as ``None``).
    """

    @functools.wraps(fwd)
    def wrapper(*args, **kwargs):
        raw = [value_of(a) for a in args]
        out, bwd = fwd(*raw, **kwargs)
        if not is_traced(*args):
            return out
        parents = tuple((i, a) for i, a in enumerate(args) if isinstance(a, Var))
        return Var(out, parents=parents, backward_fn=bwd, name=fwd.__name__.lstrip("_"))

    wrapper.raw = fwd
    return wrapper


def _toposort(root: Var) -> list[Var]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for _, parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(out: Var, cotangent) -> dict[int, np.ndarray]:
    """Propagate ``cotangent`` from ``out`` to every ancestor.

    Returns a mapping ``id(var) -> gradient``.  Leaves that ``out`` does not
    depend on are absent from the mapping.
    """
    cot = np.asarray(cotangent, dtype=out.value.dtype)
    if cot.shape != out.value.shape:
        raise ValueError(f"cotangent shape {cot.shape} does not match output shape {out.value.shape}")
    grads: dict[int, np.ndarray] = {id(out): cot}
    for node in reversed(_toposort(out)):
        g = grads.get(id(node))
        if g is None or node.backward_fn is None:
            continue
        in_grads = node.backward_fn(g)
        for i, parent in node.parents:
            gi = in_grads[i]
            if gi is None:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = gi if prev is None else prev + gi
    return grads


# ---------------------------------------------------------------------------
# Parameter trees
# ---------------------------------------------------------------------------

def nograd(**kwargs):
    """Dataclass field marker for arrays that are constants (e.g. running stats)."""
    metadata = dict(kwargs.pop("metadata", {}) or {})
    metadata["nograd"] = True
    return dataclasses.field(metadata=metadata, **kwargs)


def tree_map(fn: Callable[[np.ndarray | Var, str], Any], tree, path: str = "", *, trainable_only=True):
    """Apply ``fn(leaf, path)`` to every array leaf of a parameter tree.

    Dataclasses, tuples, lists and dicts are traversed; fields marked with
    :func:`nograd` are left untouched when ``trainable_only`` is set.
    """
    if isinstance(tree, (np.ndarray, Var)):
        return fn(tree, path)
    if dataclasses.is_dataclass(tree) and not isinstance(tree, type):
        changes = {}
        for f in dataclasses.fields(tree):
            if trainable_only and f.metadata.get("nograd"):
                continue
            sub = getattr(tree, f.name)
            new = tree_map(fn, sub, f"{path}.{f.name}" if path else f.name, trainable_only=trainable_only)
            if new is not sub:
                changes[f.name] = new
        return dataclasses.replace(tree, **changes) if changes else tree
    if isinstance(tree, (tuple, list)):
        items = [tree_map(fn, t, f"{path}[{i}]", trainable_only=trainable_only) for i, t in enumerate(tree)]
        return type(tree)(items)
    if isinstance(tree, dict):
        return {k: tree_map(fn, v, f"{path}.{k}" if path else str(k), trainable_only=trainable_only)
                for k, v in tree.items()}
    return tree


def tree_leaves(tree, *, trainable_only=True) -> list[tuple[str, np.ndarray]]:
    out = []

    def collect(leaf, path):
        out.append((path, leaf))
        return leaf

    tree_map(collect, tree, trainable_only=trainable_only)
    return out


def vjp(fn: Callable, args: tuple, cotangent):
    """Reverse-mode vector-Jacobian product of ``fn`` at ``args``.

    ``args`` may mix arrays and parameter trees.  Returns ``(out, grads)`` where
    ``grads`` mirrors ``args`` with each trainable array replaced by its
    cotangent (zeros when the output does not depend on it).
    """
    lifted = tuple(tree_map(lambda a, p: Var(a, name=p or "arg"), a, f"arg{i}") for i, a in enumerate(args))
    out = fn(*lifted)
    if not isinstance(out, Var):
        # Output independent of every input.
        zeros = tuple(tree_map(lambda v, p: np.zeros_like(v.value), a) for a in lifted)
        return np.asarray(out), zeros
    grads = backward(out, cotangent)

    def pick(v, _):
        g = grads.get(id(v))
        return np.zeros_like(v.value) if g is None else g

    return out.value, tuple(tree_map(pick, a) for a in lifted)


# Named ops for ``vjp_op``; populated by the modules that define composites.
REGISTRY: dict[str, Callable] = {}


def register(name: str):
    def deco(fn):
        REGISTRY[name] = fn
        return fn
    return deco


def vjp_op(op_id: str, args: tuple, cotangent):
    """Look up a registered op by name and return its cotangents for ``args``."""
    try:
        fn = REGISTRY[op_id]
    except KeyError:
        raise KeyError(f"unregistered op {op_id!r}; known: {sorted(REGISTRY)}") from None
    return vjp(fn, args, cotangent)[1]
