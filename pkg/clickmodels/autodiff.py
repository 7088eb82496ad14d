"""
Reverse-mode automatic differentiation over a closed set of log-space ops.

Node values are float64 arrays: a scalar or one entry per session of a batch.
Every op is elementwise with numpy broadcasting, ``sum`` reduces a vector to the
scalar loss, and parameter leaves gather rows of a parameter table by index.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import logspace
from .errors import ClickModelError, UsageError

# log1mexp inputs above zero by at most this much are rounding noise from
# log_sum_exp over complementary events and are treated as exactly zero
ROUNDING_SLACK = 1e-12


class Op(str, Enum):
    """Operations a tape can record."""
    CONSTANT = "constant"
    LEAF = "parameter-leaf"
    ADD = "add"
    SCALE = "scale"
    NEGATE = "negate"
    LOG_SIGMOID = "log_sigmoid"
    LOG1M_SIGMOID = "log1m_sigmoid"
    LOG_SUM_EXP = "log_sum_exp"
    LOG1MEXP = "log1mexp"
    SUM = "sum"


@dataclass(frozen=True)
class LeafRef:
    """Which rows of which parameter table a leaf node gathered."""
    table: str
    index: np.ndarray
    valid: Optional[np.ndarray] = None

    def rows(self) -> np.ndarray:
        """Row indices that contribute gradients."""
        if self.valid is None:
            return np.atleast_1d(self.index)
        return self.index[self.valid]


@dataclass
class Node:
    """A recorded value with the op and inputs that produced it."""
    op: Op
    inputs: Tuple[int, ...]
    value: np.ndarray
    payload: Any = None


def _scaled(coefficient: np.ndarray, x: np.ndarray) -> np.ndarray:
    # 0 * -inf must stay 0: masked slots and untaken branches carry infinities
    with np.errstate(invalid="ignore"):
        return np.where(coefficient == 0, 0.0, coefficient * x)


def _unbroadcast(adjoint: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum an adjoint down to the shape of the input it flows into."""
    if adjoint.shape == shape:
        return adjoint
    extra = adjoint.ndim - len(shape)
    if extra > 0:
        adjoint = adjoint.sum(axis=tuple(range(extra)))
    for axis, size in enumerate(shape):
        if size == 1 and adjoint.shape[axis] != 1:
            adjoint = adjoint.sum(axis=axis, keepdims=True)
    return adjoint


class Tape:
    """
    Append-only record of a forward computation.

    One tape is used per batch and discarded after the optimizer step.
    """

    def __init__(self):
        self.nodes: List[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def clear(self):
        """Drop all recorded nodes."""
        self.nodes = []

    def value(self, node_id: int) -> np.ndarray:
        """Return the forward value of a node."""
        return self.nodes[node_id].value

    def record(self, op: Op, inputs: Sequence[int] = (), payload: Any = None) -> int:
        """
        Append a node and compute its value.

        Args:
            op: Operation to record
            inputs: Ids of input nodes, all already on the tape
            payload: Constant value (constant), coefficient (scale) or
                (LeafRef, gathered values) for parameter leaves

        Returns:
            int: Id of the new node

        Raises:
            UsageError: On unknown inputs, arity errors or domain violations
        """
        op = Op(op)
        inputs = tuple(int(i) for i in inputs)
        for node_id in inputs:
            if node_id < 0 or node_id >= len(self.nodes):
                raise UsageError(f"{op.value}: unknown input node {node_id}")
        values = [self.nodes[i].value for i in inputs]

        if op in (Op.CONSTANT, Op.LEAF):
            if inputs:
                raise UsageError(f"{op.value}: takes no inputs")
        elif op in (Op.ADD, Op.LOG_SUM_EXP):
            if not inputs:
                raise UsageError(f"{op.value}: needs at least one input")
        elif len(inputs) != 1:
            raise UsageError(f"{op.value}: takes exactly one input")

        if op == Op.CONSTANT:
            value = np.array(payload, dtype=np.float64)
        elif op == Op.LEAF:
            ref, gathered = payload
            value = np.array(gathered, dtype=np.float64)
            payload = ref
        elif op == Op.ADD:
            value = values[0]
            for other in values[1:]:
                value = value + other
        elif op == Op.SCALE:
            payload = np.asarray(payload, dtype=np.float64)
            value = _scaled(payload, values[0])
        elif op == Op.NEGATE:
            value = -values[0]
        elif op == Op.LOG_SIGMOID:
            value = np.asarray(logspace.log_sigmoid(values[0]))
        elif op == Op.LOG1M_SIGMOID:
            value = np.asarray(logspace.log1m_sigmoid(values[0]))
        elif op == Op.LOG_SUM_EXP:
            stacked = np.stack(np.broadcast_arrays(*values))
            value = np.asarray(logspace.log_sum_exp(stacked, axis=0))
        elif op == Op.LOG1MEXP:
            if (values[0] > ROUNDING_SLACK).any():
                raise UsageError("log1mexp: input must be <= 0")
            value = np.asarray(logspace.log1mexp(np.minimum(values[0], 0.0)))
        else:
            value = np.asarray(values[0].sum())

        self.nodes.append(Node(op=op, inputs=inputs, value=np.asarray(value), payload=payload))
        return len(self.nodes) - 1

    # Convenience wrappers, one per op.

    def constant(self, value) -> int:
        """Record a constant."""
        return self.record(Op.CONSTANT, payload=value)

    def leaf(self, table: str, rows: np.ndarray, index, valid=None) -> int:
        """
        Record a parameter leaf gathering ``rows[index]``.

        Args:
            table: Name of the parameter table
            rows: The table's current values
            index: Integer index array (or scalar) into the table
            valid: Optional boolean array; only valid entries receive gradients

        Returns:
            int: Id of the leaf node
        """
        index = np.asarray(index, dtype=np.int64)
        if valid is not None:
            valid = np.asarray(valid, dtype=bool)
        ref = LeafRef(table=table, index=index, valid=valid)
        return self.record(Op.LEAF, payload=(ref, rows[index]))

    def add(self, *node_ids: int) -> int:
        """Record an elementwise sum."""
        return self.record(Op.ADD, node_ids)

    def scale(self, node_id: int, coefficient) -> int:
        """Record multiplication by a constant (scalar or array)."""
        return self.record(Op.SCALE, (node_id,), payload=coefficient)

    def negate(self, node_id: int) -> int:
        """Record negation."""
        return self.record(Op.NEGATE, (node_id,))

    def subtract(self, left: int, right: int) -> int:
        """Record left - right as add(left, negate(right))."""
        return self.add(left, self.negate(right))

    def log_sigmoid(self, node_id: int) -> int:
        """Record log(sigmoid(x))."""
        return self.record(Op.LOG_SIGMOID, (node_id,))

    def log1m_sigmoid(self, node_id: int) -> int:
        """Record log(1 - sigmoid(x))."""
        return self.record(Op.LOG1M_SIGMOID, (node_id,))

    def log_sum_exp(self, *node_ids: int) -> int:
        """Record an elementwise log_sum_exp over several inputs."""
        return self.record(Op.LOG_SUM_EXP, node_ids)

    def log1mexp(self, node_id: int) -> int:
        """Record log(1 - exp(a))."""
        return self.record(Op.LOG1MEXP, (node_id,))

    def sum(self, node_id: int) -> int:
        """Record the sum of all entries of a node."""
        return self.record(Op.SUM, (node_id,))

    def leaves(self) -> Dict[int, LeafRef]:
        """Map of leaf node id to its parameter reference."""
        return {i: n.payload for i, n in enumerate(self.nodes) if n.op == Op.LEAF}

    def backward(self, loss: int) -> Dict[int, np.ndarray]:
        """
        Propagate adjoints from a scalar loss node.

        Args:
            loss: Id of the scalar loss node

        Returns:
            Dict[int, np.ndarray]: Gradient of the loss for every parameter leaf,
            shaped like the leaf value (zeros for leaves the loss does not reach)

        Raises:
            UsageError: If the loss node does not exist or is not scalar
        """
        if loss < 0 or loss >= len(self.nodes):
            raise UsageError(f"backward: unknown loss node {loss}")
        if self.nodes[loss].value.size != 1:
            raise UsageError("backward: loss must be a scalar")

        adjoints: List[Optional[np.ndarray]] = [None] * len(self.nodes)
        adjoints[loss] = np.ones_like(self.nodes[loss].value)

        for node_id in range(loss, -1, -1):
            adjoint = adjoints[node_id]
            if adjoint is None:
                continue
            node = self.nodes[node_id]
            for input_id, local in zip(node.inputs, self._local_adjoints(node, adjoint)):
                if input_id >= node_id:
                    raise ClickModelError("backward: tape is not topologically ordered")
                shaped = _unbroadcast(local, self.nodes[input_id].value.shape)
                if adjoints[input_id] is None:
                    adjoints[input_id] = shaped.astype(np.float64, copy=True)
                else:
                    adjoints[input_id] = adjoints[input_id] + shaped

        gradients = {}
        for leaf_id in self.leaves():
            adjoint = adjoints[leaf_id]
            if adjoint is None:
                adjoint = np.zeros_like(self.nodes[leaf_id].value)
            gradients[leaf_id] = adjoint
        return gradients

    def _local_adjoints(self, node: Node, adjoint: np.ndarray) -> List[np.ndarray]:
        """Adjoint contribution of ``node`` to each of its inputs."""
        values = [self.nodes[i].value for i in node.inputs]
        if node.op == Op.ADD:
            return [adjoint for _ in values]
        if node.op == Op.SCALE:
            return [_scaled(np.broadcast_to(node.payload, adjoint.shape), adjoint)]
        if node.op == Op.NEGATE:
            return [-adjoint]
        if node.op == Op.LOG_SIGMOID:
            return [adjoint * np.exp(logspace.log_sigmoid(-values[0]))]
        if node.op == Op.LOG1M_SIGMOID:
            return [-adjoint * np.exp(logspace.log_sigmoid(values[0]))]
        if node.op == Op.LOG_SUM_EXP:
            out = node.value
            local = []
            for value in values:
                with np.errstate(invalid="ignore"):
                    weight = np.where(np.isneginf(value), 0.0, np.exp(value - out))
                local.append(_scaled(adjoint, weight))
            return local
        if node.op == Op.LOG1MEXP:
            a = np.minimum(values[0], 0.0)
            with np.errstate(over="ignore", invalid="ignore"):
                derivative = -np.exp(a - node.value)
            return [_scaled(adjoint, derivative)]
        if node.op == Op.SUM:
            return [np.broadcast_to(adjoint, values[0].shape)]
        return []
