"""Reverse-mode automatic differentiation over dense float64 tensors.

A forward pass runs inside a ``Tape`` context; every primitive that touches
a gradient-requiring Value appends one application record. ``backward``
sweeps the records in reverse, accumulating gradients into the leaves. The
tape is rebuilt for every forward pass and can be consumed exactly once.
"""

import numpy as np

from ..errors import NumericError, ShapeError, StateError

MAX_RANK = 3

_tape_stack = []

_finite_checks = True


def set_finite_checks(enabled):
    """Globally enable/disable per-kernel non-finite input checks.

    Checks are on by default; the training loop disables them for speed
    after validating the first epoch and monitors the loss instead.
    """
    global _finite_checks
    previous = _finite_checks
    _finite_checks = bool(enabled)
    return previous


def finite_checks_enabled():
    return _finite_checks


def check_finite(name, *arrays):
    if not _finite_checks:
        return
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"{name}: non-finite input")


class Value:
    """Node in the computation graph: data buffer plus gradient metadata."""

    __slots__ = ("data", "requires_grad", "grad", "producer")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > MAX_RANK:
            raise ShapeError(f"rank {arr.ndim} exceeds maximum rank {MAX_RANK}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.producer = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Value(shape={self.shape}, requires_grad={self.requires_grad})"


class Application:
    """One recorded primitive application."""

    __slots__ = ("name", "output", "inputs", "backward_fn")

    def __init__(self, name, output, inputs, backward_fn):
        self.name = name
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    def __init__(self):
        self.ops = []
        self._consumed = False

    def __enter__(self):
        _tape_stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack.pop()
        assert popped is self
        return False

    def record(self, name, output, inputs, backward_fn):
        output.requires_grad = True
        app = Application(name, output, inputs, backward_fn)
        output.producer = app
        self.ops.append(app)

    def backward(self, loss, leaves=None):
        """Populate .grad on every requires_grad leaf reachable on this tape.

        `leaves` (optional iterable of Values) additionally get zero grads
        when they did not participate in the loss.
        """
        if self._consumed:
            raise StateError("backward already called on this tape; build a new tape")
        self._consumed = True
        if not self.ops:
            raise StateError("tape is empty; run a forward pass inside the tape first")
        if loss.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        if loss.producer is None or not any(app is loss.producer for app in self.ops):
            raise StateError("loss was not produced on this tape")

        grads = {id(loss): np.ones_like(loss.data)}
        touched_leaves = {}
        for app in reversed(self.ops):
            for inp in app.inputs:
                if inp.requires_grad and inp.producer is None:
                    touched_leaves[id(inp)] = inp
            g = grads.pop(id(app.output), None)
            if g is None:
                continue
            input_grads = app.backward_fn(g)
            for inp, gi in zip(app.inputs, input_grads):
                if gi is None or not inp.requires_grad:
                    continue
                acc = grads.get(id(inp))
                grads[id(inp)] = gi if acc is None else acc + gi

        for key, leaf in touched_leaves.items():
            g = grads.get(key)
            leaf.grad = np.zeros_like(leaf.data) if g is None else np.reshape(g, leaf.shape)
        if leaves is not None:
            for leaf in leaves:
                if leaf.requires_grad and id(leaf) not in touched_leaves:
                    leaf.grad = np.zeros_like(leaf.data)


def current_tape():
    return _tape_stack[-1] if _tape_stack else None


def record(name, output, inputs, backward_fn):
    """Attach `output` to the active tape when any input requires grad.

    `inputs` must contain only Values (constants are closed over by the
    backward function). Outside a tape nothing is recorded, which makes
    evaluation passes free of bookkeeping.
    """
    tape = current_tape()
    if tape is None:
        return output
    if not any(x.requires_grad for x in inputs):
        return output
    tape.record(name, output, list(inputs), backward_fn)
    return output


def backward(loss, leaves=None):
    """Run the reverse sweep on the active tape."""
    tape = current_tape()
    if tape is None:
        raise StateError("backward requires an active tape")
    tape.backward(loss, leaves=leaves)


def as_value(x):
    return x if isinstance(x, Value) else Value(x)


def constant(data):
    """Non-differentiable Value wrapping `data`."""
    return Value(data, requires_grad=False)


def parameter(data):
    """Differentiable leaf."""
    return Value(np.array(data, dtype=np.float64), requires_grad=True)
