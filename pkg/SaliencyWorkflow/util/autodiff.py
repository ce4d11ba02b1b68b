"""
Reverse-mode differentiation over dense float64 numpy arrays.

A Tape records the operations of one forward pass in topological order.
`backward` walks it in reverse and returns the gradient of a scalar output
with respect to every node marked as a target. Tapes are single-owner and
are discarded after use; parameters bound onto a tape are never mutated.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np


class ShapeError(ValueError):
    """An operation received operands whose shapes it cannot combine."""


class NonFiniteError(ArithmeticError):
    """A forward operation produced NaN or Inf."""


class OpKind(str, Enum):
    LEAF = 'leaf'
    CONSTANT = 'constant'
    MATMUL = 'matmul'
    ADD = 'add'
    SUB = 'sub'
    MUL = 'mul'
    SIGMOID = 'sigmoid'
    TANH = 'tanh'
    EXP = 'exp'
    LOG = 'log'
    POW = 'pow'
    GELU = 'gelu'
    SOFTMAX = 'softmax'
    LOG_SOFTMAX = 'log_softmax'
    CONCAT = 'concat'
    SLICE = 'slice'
    GATHER = 'gather'
    INDEX = 'index'
    SUM = 'sum'
    MEAN = 'mean'
    RESHAPE = 'reshape'
    TRANSPOSE = 'transpose'


@dataclass
class Node:
    index: int
    kind: OpKind
    parents: Tuple[int, ...]
    value: np.ndarray
    attrs: Dict[str, Any] = field(default_factory=dict)
    cache: Dict[str, Any] = field(default_factory=dict)
    requires_grad: bool = False


@dataclass(frozen=True)
class OpRule:
    """Forward and backward of one operation kind.

    forward(values, attrs) -> (output, cache)
    backward(g, node, values) -> one gradient (or None) per parent
    """
    forward: Callable[[List[np.ndarray], Dict[str, Any]], Tuple[np.ndarray, Dict[str, Any]]]
    backward: Callable[[np.ndarray, Node, List[np.ndarray]], List[Optional[np.ndarray]]]
    arity: Optional[int] = 1


def _as_array(value) -> np.ndarray:
    return np.array(value, dtype=np.float64)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum grad over the axes that broadcasting added or stretched to reach it from shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _expand_reduced(grad: np.ndarray, shape: Tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape).copy()


def _broadcast_shape(kind: OpKind, a: np.ndarray, b: np.ndarray) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind.value}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ----- forward / backward rules -----

def _matmul_forward(values, attrs):
    a, b = values
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions of {a.shape} and {b.shape} do not broadcast") from None
    return np.matmul(a, b), {}


def _matmul_backward(g, node, values):
    a, b = values
    ga = np.matmul(g, np.swapaxes(b, -1, -2))
    gb = np.matmul(np.swapaxes(a, -1, -2), g)
    return [unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)]


def _add_forward(values, attrs):
    _broadcast_shape(OpKind.ADD, *values)
    return values[0] + values[1], {}


def _add_backward(g, node, values):
    return [unbroadcast(g, values[0].shape), unbroadcast(g, values[1].shape)]


def _sub_forward(values, attrs):
    _broadcast_shape(OpKind.SUB, *values)
    return values[0] - values[1], {}


def _sub_backward(g, node, values):
    return [unbroadcast(g, values[0].shape), unbroadcast(-g, values[1].shape)]


def _mul_forward(values, attrs):
    _broadcast_shape(OpKind.MUL, *values)
    return values[0] * values[1], {}


def _mul_backward(g, node, values):
    a, b = values
    return [unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)]


def _sigmoid_forward(values, attrs):
    # tanh form stays finite for any finite input and gives exactly 0.5 at 0
    return 0.5 * (1.0 + np.tanh(0.5 * values[0])), {}


def _sigmoid_backward(g, node, values):
    s = node.value
    return [g * s * (1.0 - s)]


def _tanh_forward(values, attrs):
    return np.tanh(values[0]), {}


def _tanh_backward(g, node, values):
    return [g * (1.0 - node.value ** 2)]


def _exp_forward(values, attrs):
    return np.exp(values[0]), {}


def _exp_backward(g, node, values):
    return [g * node.value]


def _log_forward(values, attrs):
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.log(values[0]), {}


def _log_backward(g, node, values):
    return [g / values[0]]


def _pow_forward(values, attrs):
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.power(values[0], attrs['exponent']), {}


def _pow_backward(g, node, values):
    p = node.attrs['exponent']
    return [g * p * np.power(values[0], p - 1.0)]


_GELU_C = np.sqrt(2.0 / np.pi)


def _gelu_forward(values, attrs):
    x = values[0]
    inner = np.tanh(_GELU_C * (x + 0.044715 * x ** 3))
    return 0.5 * x * (1.0 + inner), {'inner': inner}


def _gelu_backward(g, node, values):
    x = values[0]
    inner = node.cache['inner']
    d_inner = (1.0 - inner ** 2) * _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
    return [g * (0.5 * (1.0 + inner) + 0.5 * x * d_inner)]


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def _softmax_forward(values, attrs):
    return _softmax(values[0], attrs.get('axis', -1)), {}


def _softmax_backward(g, node, values):
    axis = node.attrs.get('axis', -1)
    s = node.value
    return [s * (g - np.sum(g * s, axis=axis, keepdims=True))]


def _log_softmax_forward(values, attrs):
    x = values[0]
    axis = attrs.get('axis', -1)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    return out, {}


def _log_softmax_backward(g, node, values):
    axis = node.attrs.get('axis', -1)
    return [g - np.exp(node.value) * np.sum(g, axis=axis, keepdims=True)]


def _concat_forward(values, attrs):
    axis = attrs.get('axis', -1)
    try:
        out = np.concatenate(values, axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[v.shape for v in values]} do not line up on axis {axis}") from None
    return out, {'sizes': [v.shape[axis] for v in values]}


def _concat_backward(g, node, values):
    axis = node.attrs.get('axis', -1)
    bounds = np.cumsum(node.cache['sizes'])[:-1]
    return list(np.split(g, bounds, axis=axis))


def _slice_forward(values, attrs):
    x = values[0]
    try:
        out = x[attrs['key']]
    except (IndexError, TypeError):
        raise ShapeError(f"slice: key {attrs['key']!r} is invalid for shape {x.shape}") from None
    return np.array(out, dtype=np.float64), {}


def _slice_backward(g, node, values):
    grad = np.zeros_like(values[0])
    grad[node.attrs['key']] = g
    return [grad]


def _gather_forward(values, attrs):
    table = values[0]
    ids = np.asarray(attrs['ids'], dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"gather: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"gather: ids outside [0, {table.shape[0]}) for table {table.shape}")
    return table[ids], {'ids': ids}


def _gather_backward(g, node, values):
    if not node.attrs.get('accumulate', True):
        # per-occurrence mode: the gathered rows are themselves the target
        return [None]
    grad = np.zeros_like(values[0])
    np.add.at(grad, node.cache['ids'], g)
    return [grad]


def _index_forward(values, attrs):
    x = values[0]
    try:
        out = x[attrs['index']]
    except (IndexError, TypeError):
        raise ShapeError(f"index: {attrs['index']!r} is invalid for shape {x.shape}") from None
    return np.array(out, dtype=np.float64), {}


def _index_backward(g, node, values):
    grad = np.zeros_like(values[0])
    np.add.at(grad, node.attrs['index'], g)
    return [grad]


def _sum_forward(values, attrs):
    return np.array(np.sum(values[0], axis=attrs.get('axis'), keepdims=attrs.get('keepdims', False))), {}


def _sum_backward(g, node, values):
    return [_expand_reduced(g, values[0].shape, node.attrs.get('axis'), node.attrs.get('keepdims', False))]


def _mean_forward(values, attrs):
    x = values[0]
    axis = attrs.get('axis')
    if x.size == 0:
        raise ShapeError(f"mean: empty operand of shape {x.shape}")
    return np.array(np.mean(x, axis=axis, keepdims=attrs.get('keepdims', False))), {}


def _mean_backward(g, node, values):
    x = values[0]
    axis = node.attrs.get('axis')
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return [_expand_reduced(g, x.shape, axis, node.attrs.get('keepdims', False)) / count]


def _reshape_forward(values, attrs):
    x = values[0]
    try:
        return x.reshape(attrs['shape']), {}
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {attrs['shape']}") from None


def _reshape_backward(g, node, values):
    return [g.reshape(values[0].shape)]


def _transpose_forward(values, attrs):
    x = values[0]
    axes = attrs.get('axes')
    if axes is not None and sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} do not permute shape {x.shape}")
    return np.transpose(x, axes), {}


def _transpose_backward(g, node, values):
    axes = node.attrs.get('axes')
    if axes is None:
        return [np.transpose(g)]
    return [np.transpose(g, np.argsort(axes))]


OP_RULES: Dict[OpKind, OpRule] = {
    OpKind.MATMUL: OpRule(_matmul_forward, _matmul_backward, arity=2),
    OpKind.ADD: OpRule(_add_forward, _add_backward, arity=2),
    OpKind.SUB: OpRule(_sub_forward, _sub_backward, arity=2),
    OpKind.MUL: OpRule(_mul_forward, _mul_backward, arity=2),
    OpKind.SIGMOID: OpRule(_sigmoid_forward, _sigmoid_backward),
    OpKind.TANH: OpRule(_tanh_forward, _tanh_backward),
    OpKind.EXP: OpRule(_exp_forward, _exp_backward),
    OpKind.LOG: OpRule(_log_forward, _log_backward),
    OpKind.POW: OpRule(_pow_forward, _pow_backward),
    OpKind.GELU: OpRule(_gelu_forward, _gelu_backward),
    OpKind.SOFTMAX: OpRule(_softmax_forward, _softmax_backward),
    OpKind.LOG_SOFTMAX: OpRule(_log_softmax_forward, _log_softmax_backward),
    OpKind.CONCAT: OpRule(_concat_forward, _concat_backward, arity=None),
    OpKind.SLICE: OpRule(_slice_forward, _slice_backward),
    OpKind.GATHER: OpRule(_gather_forward, _gather_backward),
    OpKind.INDEX: OpRule(_index_forward, _index_backward),
    OpKind.SUM: OpRule(_sum_forward, _sum_backward),
    OpKind.MEAN: OpRule(_mean_forward, _mean_backward),
    OpKind.RESHAPE: OpRule(_reshape_forward, _reshape_backward),
    OpKind.TRANSPOSE: OpRule(_transpose_forward, _transpose_backward),
}


class Tape:
    """Ordered record of one forward pass."""

    def __init__(self):
        self.nodes: List[Node] = []
        self.targets: List[int] = []

    def __len__(self):
        return len(self.nodes)

    def _append(self, kind, parents, value, attrs=None, cache=None, requires_grad=False) -> int:
        node = Node(
            index=len(self.nodes),
            kind=kind,
            parents=tuple(parents),
            value=value,
            attrs=attrs or {},
            cache=cache or {},
            requires_grad=requires_grad,
        )
        self.nodes.append(node)
        return node.index

    def leaf(self, value, target: bool = False) -> int:
        """Record a differentiable input; target leaves are reported by backward."""
        node_id = self._append(OpKind.LEAF, (), _as_array(value), requires_grad=True)
        if target:
            self.targets.append(node_id)
        return node_id

    def constant(self, value) -> int:
        return self._append(OpKind.CONSTANT, (), _as_array(value))

    def value(self, node_id: int) -> np.ndarray:
        return self.nodes[node_id].value

    def mark_target(self, node_id: int):
        node = self.nodes[node_id]
        node.requires_grad = True
        if node_id not in self.targets:
            self.targets.append(node_id)

    def apply(self, kind: OpKind, *inputs: int, **attrs) -> int:
        return forward_op(self, kind, inputs, **attrs)

    # Convenience wrappers used by the model code

    def matmul(self, a, b):
        return self.apply(OpKind.MATMUL, a, b)

    def add(self, a, b):
        return self.apply(OpKind.ADD, a, b)

    def sub(self, a, b):
        return self.apply(OpKind.SUB, a, b)

    def mul(self, a, b):
        return self.apply(OpKind.MUL, a, b)

    def scale(self, a, factor: float):
        return forward_op(self, OpKind.MUL, (a,), constants=[np.float64(factor)])

    def sigmoid(self, a):
        return self.apply(OpKind.SIGMOID, a)

    def tanh(self, a):
        return self.apply(OpKind.TANH, a)

    def exp(self, a):
        return self.apply(OpKind.EXP, a)

    def log(self, a):
        return self.apply(OpKind.LOG, a)

    def pow(self, a, exponent: float):
        return self.apply(OpKind.POW, a, exponent=float(exponent))

    def gelu(self, a):
        return self.apply(OpKind.GELU, a)

    def softmax(self, a, axis: int = -1):
        return self.apply(OpKind.SOFTMAX, a, axis=axis)

    def log_softmax(self, a, axis: int = -1):
        return self.apply(OpKind.LOG_SOFTMAX, a, axis=axis)

    def concat(self, nodes: Sequence[int], axis: int = -1):
        return forward_op(self, OpKind.CONCAT, tuple(nodes), axis=axis)

    def slice(self, a, key):
        return self.apply(OpKind.SLICE, a, key=key)

    def gather(self, table, ids, accumulate: bool = True):
        return self.apply(OpKind.GATHER, table, ids=ids, accumulate=accumulate)

    def index(self, a, index):
        return self.apply(OpKind.INDEX, a, index=index)

    def sum(self, a, axis=None, keepdims: bool = False):
        return self.apply(OpKind.SUM, a, axis=axis, keepdims=keepdims)

    def mean(self, a, axis=None, keepdims: bool = False):
        return self.apply(OpKind.MEAN, a, axis=axis, keepdims=keepdims)

    def reshape(self, a, shape):
        return self.apply(OpKind.RESHAPE, a, shape=tuple(shape))

    def transpose(self, a, axes=None):
        return self.apply(OpKind.TRANSPOSE, a, axes=None if axes is None else tuple(axes))


def forward_op(tape: Tape, kind: OpKind, inputs: Sequence[int], constants: Optional[Sequence] = None, **attrs) -> int:
    """
    Evaluate one operation and record it on the tape.

    Args:
        tape: Tape to record on
        kind: Operation kind (any registered OpKind)
        inputs: Node ids of the operands, in order
        constants: Extra operand arrays appended after inputs as constant nodes
        **attrs: Operation attributes (axis, key, ids, exponent, ...)

    Returns:
        Node id of the result
    """
    kind = OpKind(kind)
    rule = OP_RULES.get(kind)
    if rule is None:
        raise ValueError(f"{kind.value} is not a computable operation")

    parents = list(inputs) + [tape.constant(c) for c in (constants or [])]
    for parent in parents:
        if not 0 <= parent < len(tape.nodes):
            raise ValueError(f"{kind.value}: unknown node id {parent}")
    if rule.arity is not None and len(parents) != rule.arity:
        raise ShapeError(f"{kind.value}: expected {rule.arity} operand(s), got {len(parents)}")
    if rule.arity is None and not parents:
        raise ShapeError(f"{kind.value}: needs at least one operand")

    values = [tape.nodes[p].value for p in parents]
    out, cache = rule.forward(values, attrs)
    out = np.asarray(out, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{kind.value} produced non-finite values from operands of shape {[v.shape for v in values]}")

    injection = kind is OpKind.GATHER and not attrs.get('accumulate', True)
    requires_grad = injection or any(tape.nodes[p].requires_grad for p in parents)
    node_id = tape._append(kind, parents, out, attrs=attrs, cache=cache, requires_grad=requires_grad)
    if injection:
        tape.mark_target(node_id)
    return node_id


def backward(tape: Tape, output: int) -> Dict[int, np.ndarray]:
    """
    Reverse accumulation from a scalar output.

    Returns a map from every target node id to d(output)/d(target), with zeros
    for targets the output does not depend on. The tape is left untouched, so
    repeated calls give identical results.
    """
    out_node = tape.nodes[output]
    if out_node.value.size != 1:
        raise ShapeError(f"backward: output must be scalar, got shape {out_node.value.shape}")

    grads: Dict[int, np.ndarray] = {output: np.ones_like(out_node.value)}
    for node in reversed(tape.nodes[:output + 1]):
        g = grads.get(node.index)
        if g is None or not node.parents or not node.requires_grad:
            continue
        values = [tape.nodes[p].value for p in node.parents]
        parent_grads = OP_RULES[node.kind].backward(g, node, values)
        for parent, parent_grad in zip(node.parents, parent_grads):
            if parent_grad is None or not tape.nodes[parent].requires_grad:
                continue
            if parent in grads:
                grads[parent] = grads[parent] + parent_grad
            else:
                grads[parent] = parent_grad

    return {
        target: grads[target].reshape(tape.nodes[target].value.shape) if target in grads
        else np.zeros_like(tape.nodes[target].value)
        for target in tape.targets
    }


def _evaluate_scalar(fn, x: np.ndarray) -> float:
    tape = Tape()
    out = fn(tape, tape.leaf(x))
    return float(tape.value(out).reshape(()))


def gradient_check(fn: Callable[[Tape, int], int], point, epsilon: float = 1e-5) -> float:
    """
    Compare backward against central finite differences at point.

    fn(tape, x_node) must build a scalar node from the leaf x_node. Returns
    max |analytic - numeric| / (|analytic| + |numeric| + 1e-12) over all
    coordinates; non-finite evaluations come back as inf (or nan).
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    point = _as_array(point)

    try:
        tape = Tape()
        x = tape.leaf(point, target=True)
        analytic = backward(tape, fn(tape, x))[x]

        numeric = np.zeros_like(point)
        for idx in np.ndindex(*point.shape):
            plus = point.copy()
            minus = point.copy()
            plus[idx] += epsilon
            minus[idx] -= epsilon
            numeric[idx] = (_evaluate_scalar(fn, plus) - _evaluate_scalar(fn, minus)) / (2.0 * epsilon)
    except NonFiniteError:
        return float('inf')

    if point.size == 0:
        return 0.0
    error = np.abs(analytic - numeric) / (np.abs(analytic) + np.abs(numeric) + 1e-12)
    return float(np.max(error))


def directional_check(fn: Callable[[Tape, int], int], point, direction, epsilon: float = 1e-5) -> float:
    """
    Relative error of the analytic directional derivative along direction.

    One central difference instead of one per coordinate; used for models
    too large for a full coordinate sweep.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    point = _as_array(point)
    direction = _as_array(direction)

    try:
        tape = Tape()
        x = tape.leaf(point, target=True)
        analytic = float(np.sum(backward(tape, fn(tape, x))[x] * direction))
        numeric = (_evaluate_scalar(fn, point + epsilon * direction)
                   - _evaluate_scalar(fn, point - epsilon * direction)) / (2.0 * epsilon)
    except NonFiniteError:
        return float('inf')
    return abs(analytic - numeric) / (abs(analytic) + abs(numeric) + 1e-12)
