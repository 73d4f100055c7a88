"""Minimal reverse-mode differentiation over dense float64 arrays.

A :class:`Graph` is an append-only list of primitive nodes. Inputs are bound
by name at evaluation time, so one graph can be built once and evaluated many
times (the optimizer loop does exactly that).

    >>> g = Graph()
    >>> x = g.input("x", (2,), trainable=True)
    >>> g.set_output(g.sum(g.mul(x, x)))
    >>> gradient(g, {"x": np.array([3.0, 4.0])})["x"]
    array([6., 8.])
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

Tensor = np.ndarray


class GraphError(Exception):
    """Base class for graph construction and evaluation errors."""


class ShapeError(GraphError):
    pass


class UnboundInputError(GraphError):
    pass


class NonFiniteError(GraphError):
    pass


class UnsupportedPrimitiveError(GraphError):
    pass


@dataclass(eq=False)
class Node:
    index: int
    op: str
    operands: tuple[int, ...]
    attrs: dict[str, Any] = field(default_factory=dict)
    name: str | None = None
    trainable: bool = False

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<Node {self.index} {self.op}{label}>"


# -- primitive rules --------------------------------------------------------
#
# forward(attrs, *values) -> value
# backward(attrs, out_grad, out_value, *values) -> tuple of operand grads


def _unbroadcast(grad: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def _add_fwd(attrs, a, b):
    _check_broadcast(a, b, "add")
    return a + b


def _add_bwd(attrs, g, out, a, b):
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _mul_fwd(attrs, a, b):
    _check_broadcast(a, b, "mul")
    return a * b


def _mul_bwd(attrs, g, out, a, b):
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def _scale_fwd(attrs, a):
    return attrs["c"] * a


def _scale_bwd(attrs, g, out, a):
    return (attrs["c"] * g,)


def _matmul_fwd(attrs, a, b):
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _matmul_bwd(attrs, g, out, a, b):
    if a.ndim == 2 and b.ndim == 2:
        return g @ b.T, a.T @ g
    if a.ndim == 2:  # matrix @ vector
        return np.outer(g, b), a.T @ g
    if b.ndim == 2:  # vector @ matrix
        return b @ g, np.outer(a, g)
    return g * b, g * a


def _conv_taps(x: Tensor, kh: int, kw: int):
    """Yield (a, b, shifted view) for a zero-padded 'same' convolution."""
    ph, pw = kh // 2, kw // 2
    h, w = x.shape[1:]
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    for a in range(kh):
        for b in range(kw):
            yield a, b, xp[:, a : a + h, b : b + w]


def _conv2d_fwd(attrs, x, w):
    if x.ndim != 3 or w.ndim != 4 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
    if w.shape[2] % 2 == 0 or w.shape[3] % 2 == 0:
        raise ShapeError("conv2d: kernel extents must be odd")
    co = w.shape[0]
    h, wd = x.shape[1:]
    out = np.zeros((co, h * wd))
    for a, b, xs in _conv_taps(x, w.shape[2], w.shape[3]):
        out += w[:, :, a, b] @ xs.reshape(x.shape[0], -1)
    return out.reshape(co, h, wd)


def _conv2d_bwd(attrs, g, out, x, w):
    ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    g2 = g.reshape(co, -1)
    gw = np.empty_like(w)
    gxp = np.zeros((ci, h + 2 * ph, wd + 2 * pw))
    for a, b, xs in _conv_taps(x, kh, kw):
        gw[:, :, a, b] = g2 @ xs.reshape(ci, -1).T
        gxp[:, a : a + h, b : b + wd] += (w[:, :, a, b].T @ g2).reshape(ci, h, wd)
    return gxp[:, ph : ph + h, pw : pw + wd], gw


def _upsample2_fwd(attrs, x):
    if x.ndim < 2:
        raise ShapeError("upsample2 needs at least 2 dims")
    return x.repeat(2, axis=-2).repeat(2, axis=-1)


def _upsample2_bwd(attrs, g, out, x):
    s = g.shape
    return (g.reshape(*s[:-2], s[-2] // 2, 2, s[-1] // 2, 2).sum(axis=(-3, -1)),)


def _leaky_fwd(attrs, x):
    return np.where(x > 0, x, attrs["slope"] * x)


def _leaky_bwd(attrs, g, out, x):
    # left derivative at 0
    return (np.where(x > 0, g, attrs["slope"] * g),)


def _sigmoid_fwd(attrs, x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _sigmoid_bwd(attrs, g, out, x):
    return (g * out * (1.0 - out),)


def _tanh_fwd(attrs, x):
    return np.tanh(x)


def _tanh_bwd(attrs, g, out, x):
    return (g * (1.0 - out * out),)


def _sum_fwd(attrs, x):
    return np.asarray(x.sum())


def _sum_bwd(attrs, g, out, x):
    return (np.full(x.shape, float(g)),)


def _abspow_fwd(attrs, x):
    p = attrs["p"]
    if p == 1:
        return np.abs(x)
    if p == 2:
        return x * x
    raise UnsupportedPrimitiveError(f"abs_pow: p must be 1 or 2, got {p}")


def _abspow_bwd(attrs, g, out, x):
    if attrs["p"] == 1:
        return (g * np.sign(x),)  # sign(0) == 0
    return (2.0 * g * x,)


def _row_fwd(attrs, x):
    if x.ndim != 2:
        raise ShapeError(f"row: expected a matrix, got {x.shape}")
    return x[attrs["i"]].copy()


def _row_bwd(attrs, g, out, x):
    gx = np.zeros_like(x)
    gx[attrs["i"]] = g
    return (gx,)


def _reshape_fwd(attrs, x):
    try:
        return x.reshape(attrs["shape"])
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {attrs['shape']}") from None


def _reshape_bwd(attrs, g, out, x):
    return (g.reshape(x.shape),)


def _transpose_fwd(attrs, x):
    return np.transpose(x, attrs["axes"])


def _transpose_bwd(attrs, g, out, x):
    return (np.transpose(g, np.argsort(attrs["axes"])),)


def _resample_fwd(attrs, x):
    return attrs["resampler"].apply(x)


def _resample_bwd(attrs, g, out, x):
    return (attrs["resampler"].adjoint_apply(g),)


def _custom_fwd(attrs, *xs):
    return attrs["forward"](*xs)


def _custom_bwd(attrs, g, out, *xs):
    return attrs["backward"](g, *xs)


@dataclass(frozen=True)
class Primitive:
    forward: Callable[..., Tensor]
    backward: Callable[..., tuple[Tensor, ...]]
    arity: int


PRIMITIVES: dict[str, Primitive] = {
    "add": Primitive(_add_fwd, _add_bwd, 2),
    "mul": Primitive(_mul_fwd, _mul_bwd, 2),
    "scale": Primitive(_scale_fwd, _scale_bwd, 1),
    "matmul": Primitive(_matmul_fwd, _matmul_bwd, 2),
    "conv2d": Primitive(_conv2d_fwd, _conv2d_bwd, 2),
    "upsample2": Primitive(_upsample2_fwd, _upsample2_bwd, 1),
    "leaky_relu": Primitive(_leaky_fwd, _leaky_bwd, 1),
    "sigmoid": Primitive(_sigmoid_fwd, _sigmoid_bwd, 1),
    "tanh": Primitive(_tanh_fwd, _tanh_bwd, 1),
    "sum": Primitive(_sum_fwd, _sum_bwd, 1),
    "abs_pow": Primitive(_abspow_fwd, _abspow_bwd, 1),
    "row": Primitive(_row_fwd, _row_bwd, 1),
    "reshape": Primitive(_reshape_fwd, _reshape_bwd, 1),
    "transpose": Primitive(_transpose_fwd, _transpose_bwd, 1),
    "resample": Primitive(_resample_fwd, _resample_bwd, 1),
    # fused op with caller-supplied rules; used for the pairwise style penalties
    "custom": Primitive(_custom_fwd, _custom_bwd, -1),
}


class Graph:
    """Append-only computation graph.

    Node constructors return :class:`Node` handles; operands must already
    belong to this graph, so node order is always a valid topological order.
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.output: Node | None = None
        self._inputs: dict[str, Node] = {}
        self._names: dict[str, Node] = {}

    # -- construction -------------------------------------------------------

    def _push(self, op, operands=(), name=None, trainable=False, **attrs) -> Node:
        if op not in PRIMITIVES and op not in ("input", "const"):
            raise UnsupportedPrimitiveError(op)
        for o in operands:
            if not isinstance(o, Node) or o.index >= len(self.nodes) or self.nodes[o.index] is not o:
                raise GraphError(f"{op}: operand {o!r} does not belong to this graph")
        if name is not None:
            if name in self._names:
                raise GraphError(f"duplicate node name {name!r}")
        node = Node(len(self.nodes), op, tuple(o.index for o in operands), attrs, name, trainable)
        self.nodes.append(node)
        if name is not None:
            self._names[name] = node
        return node

    def input(self, name: str, shape: Sequence[int] | None = None, trainable: bool = False) -> Node:
        node = self._push("input", name=name, trainable=trainable,
                          shape=None if shape is None else tuple(shape))
        self._inputs[name] = node
        return node

    def const(self, value, name: str | None = None) -> Node:
        arr = np.array(value, dtype=np.float64)
        arr.flags.writeable = False
        return self._push("const", name=name, value=arr)

    def add(self, a, b, name=None):
        return self._push("add", (a, b), name)

    def sub(self, a, b, name=None):
        return self._push("add", (a, self.scale(b, -1.0)), name)

    def mul(self, a, b, name=None):
        return self._push("mul", (a, b), name)

    def scale(self, a, c: float, name=None):
        return self._push("scale", (a,), name, c=float(c))

    def matmul(self, a, b, name=None):
        return self._push("matmul", (a, b), name)

    def conv2d(self, x, w, name=None):
        return self._push("conv2d", (x, w), name)

    def upsample2(self, x, name=None):
        return self._push("upsample2", (x,), name)

    def leaky_relu(self, x, slope: float = 0.2, name=None):
        return self._push("leaky_relu", (x,), name, slope=float(slope))

    def sigmoid(self, x, name=None):
        return self._push("sigmoid", (x,), name)

    def tanh(self, x, name=None):
        return self._push("tanh", (x,), name)

    def sum(self, x, name=None):
        return self._push("sum", (x,), name)

    def abs_pow(self, x, p: int, name=None):
        if p not in (1, 2):
            raise UnsupportedPrimitiveError(f"abs_pow: p must be 1 or 2, got {p}")
        return self._push("abs_pow", (x,), name, p=p)

    def row(self, x, i: int, name=None):
        return self._push("row", (x,), name, i=int(i))

    def reshape(self, x, shape, name=None):
        return self._push("reshape", (x,), name, shape=tuple(shape))

    def transpose(self, x, axes, name=None):
        return self._push("transpose", (x,), name, axes=tuple(axes))

    def resample(self, x, resampler, name=None):
        return self._push("resample", (x,), name, resampler=resampler)

    def custom(self, operands, forward, backward, name=None):
        """Fused primitive with explicit rules.

        ``forward(*values)`` returns the output; ``backward(g, *values)``
        returns one gradient per operand.
        """
        return self._push("custom", tuple(operands), name, forward=forward, backward=backward)

    def set_output(self, node: Node) -> None:
        self.output = node

    # -- lookup -------------------------------------------------------------

    @property
    def input_names(self) -> list[str]:
        return list(self._inputs)

    @property
    def trainable(self) -> list[Node]:
        return [n for n in self._inputs.values() if n.trainable]

    def __getitem__(self, name: str) -> Node:
        return self._names[name]

    # -- execution ----------------------------------------------------------

    def forward(self, bindings: Mapping[str, Tensor]) -> list[Tensor]:
        """Compute every node's value, in order."""
        values: list[Tensor] = []
        for node in self.nodes:
            if node.op == "input":
                if node.name not in bindings:
                    raise UnboundInputError(node.name)
                v = np.asarray(bindings[node.name], dtype=np.float64)
                shape = node.attrs["shape"]
                if shape is not None and v.shape != shape:
                    raise ShapeError(f"input {node.name!r}: expected {shape}, got {v.shape}")
            elif node.op == "const":
                v = node.attrs["value"]
            else:
                args = [values[i] for i in node.operands]
                # overflow is reported below as NonFiniteError, not as a warning
                with np.errstate(over="ignore", invalid="ignore"):
                    v = np.asarray(PRIMITIVES[node.op].forward(node.attrs, *args), dtype=np.float64)
            if not np.all(np.isfinite(v)):
                raise NonFiniteError(f"non-finite value at {node!r}")
            values.append(v)
        return values

    def backward(self, values: list[Tensor], output: Node | None = None) -> dict[str, Tensor]:
        out = output if output is not None else self.output
        if out is None:
            raise GraphError("graph has no output node")
        if values[out.index].shape != ():
            raise ShapeError(f"gradient needs a scalar output, got shape {values[out.index].shape}")
        grads: list[Tensor | None] = [None] * len(self.nodes)
        grads[out.index] = np.ones(())
        for node in reversed(self.nodes[: out.index + 1]):
            g = grads[node.index]
            if g is None or node.op in ("input", "const"):
                continue
            args = [values[i] for i in node.operands]
            parts = PRIMITIVES[node.op].backward(node.attrs, g, values[node.index], *args)
            for i, gi in zip(node.operands, parts):
                if self.nodes[i].op == "const":
                    continue
                grads[i] = gi if grads[i] is None else grads[i] + gi
        result = {}
        for n in self.trainable:
            g = grads[n.index]
            result[n.name] = np.zeros_like(values[n.index]) if g is None else g
        return result

    def value_and_grad(self, bindings: Mapping[str, Tensor]) -> tuple[dict[str, Tensor], dict[str, Tensor]]:
        """Named forward values plus gradients of the output w.r.t. trainable inputs."""
        values = self.forward(bindings)
        grads = self.backward(values)
        named = {name: values[n.index] for name, n in self._names.items()}
        return named, grads


def evaluate(graph: Graph, bindings: Mapping[str, Tensor], names: Sequence[str] | None = None) -> dict[str, Tensor]:
    """Forward values of the named nodes (all named nodes by default)."""
    values = graph.forward(bindings)
    if names is None:
        names = list(graph._names)
    return {name: values[graph[name].index] for name in names}


def gradient(graph: Graph, bindings: Mapping[str, Tensor]) -> dict[str, Tensor]:
    """Gradients of the scalar output w.r.t. every trainable input."""
    return graph.backward(graph.forward(bindings))


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tol: float

    @property
    def passed(self) -> bool:
        return all(e <= self.tol for e in self.errors.values())

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)


def relative_error(analytic: Tensor, numeric: Tensor) -> float:
    """Max element-wise relative error.

    Denominators are floored at 1e-6 of the largest numeric entry so that
    near-zero gradient entries are judged on an absolute scale.
    """
    a = np.asarray(analytic, dtype=np.float64)
    f = np.asarray(numeric, dtype=np.float64)
    floor = 1e-6 * max(float(np.max(np.abs(f), initial=0.0)), 1e-12)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
    return float(np.max(np.abs(a - f) / denom, initial=0.0))


def numeric_gradient(graph: Graph, bindings: Mapping[str, Tensor], name: str, step: float) -> Tensor:
    out = graph.output
    base = {k: np.array(v, dtype=np.float64) for k, v in bindings.items()}
    x = base[name]
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(graph.forward(base)[out.index])
        flat[i] = orig - step
        lo = float(graph.forward(base)[out.index])
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def finite_difference_check(graph: Graph, bindings: Mapping[str, Tensor],
                            step: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare reverse-mode gradients with central differences, per trainable input."""
    if step <= 0:
        raise ValueError("step must be positive")
    analytic = gradient(graph, bindings)
    errors = {
        name: relative_error(g, numeric_gradient(graph, bindings, name, step))
        for name, g in analytic.items()
    }
    return GradCheckReport(errors, tol)
