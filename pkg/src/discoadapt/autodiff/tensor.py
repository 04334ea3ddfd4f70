"""Dense float64 tensors and the recording tape for reverse-mode gradients."""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

_local = threading.local()


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""


class NumericError(FloatingPointError):
    """A NaN or Inf reached a place where it must not."""


def _tape_stack() -> list["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense array plus the bookkeeping needed to differentiate through it.

    Leaves are created directly; every other tensor is the output of a
    primitive and remembers its parents and a backward rule.
    """

    __slots__ = ("data", "requires_grad", "name", "_parents", "_backward", "_op", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=DTYPE)  # always copies
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._op: str | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr if arr.dtype == DTYPE else arr.astype(DTYPE)
        t.requires_grad = False
        t.name = None
        t._parents = ()
        t._backward = None
        t._op = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{flag}{label})"

    def __len__(self) -> int:
        return len(self.data)

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops
        return ops.matmul(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __getitem__(self, key):
        from . import ops
        return ops.getitem(self, key)

    @property
    def T(self) -> "Tensor":
        from . import ops
        return ops.transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor._wrap(np.asarray(x, dtype=DTYPE))


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def make_node(
    op: str,
    data: np.ndarray,
    parents: tuple[Tensor, ...],
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    """Wrap a primitive's output and record it on the active tape if needed."""
    out = Tensor._wrap(data)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        # parents that are constants now stay constants, even if unfrozen later
        out._parents = tuple(p if p.requires_grad else Tensor._wrap(p.data) for p in parents)
        out._backward = backward
        out._op = op
        tape._record(out)
    return out


class Tape:
    """Define-by-run record of primitive applications.

    Nodes are appended in creation order, which is already a topological
    order; ``gradient`` walks them exactly once, in reverse.

    >>> x = parameter(3.0)
    >>> with Tape() as tape:
    ...     y = x * x
    >>> float(tape.gradient(y, [x])[0])
    6.0
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.visits = 0

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        assert stack and stack[-1] is self, "tapes must be exited in LIFO order"
        stack.pop()

    def _record(self, node: Tensor) -> None:
        self.nodes.append(node)

    def __len__(self) -> int:
        return len(self.nodes)

    def gradient(self, loss: Tensor, sources: Iterable[Tensor]) -> list[np.ndarray]:
        """Gradients of a scalar ``loss`` with respect to each of ``sources``.

        Sources that do not influence the loss get an all-zero gradient.
        """
        sources = list(sources)
        if loss.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaf_grads: dict[int, np.ndarray] = {}
        if loss.is_leaf:
            leaf_grads[id(loss)] = grads[id(loss)]
        self.visits = 0
        for node in reversed(self.nodes):
            g = grads.get(id(node))
            if g is None:
                continue
            self.visits += 1
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                store = leaf_grads if parent.is_leaf else grads
                prev = store.get(key)
                store[key] = pg if prev is None else prev + pg
        out = []
        for s in sources:
            g = leaf_grads.get(id(s))
            if g is None:
                g = grads.get(id(s))
            out.append(np.zeros_like(s.data) if g is None else np.asarray(g, dtype=DTYPE).reshape(s.shape))
        return out


class no_tape:
    """Temporarily suspend recording (inference, fixed targets)."""

    def __enter__(self):
        self._saved = list(_tape_stack())
        _tape_stack().clear()
        return self

    def __exit__(self, *exc):
        _tape_stack().extend(self._saved)
