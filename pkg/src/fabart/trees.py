"""Binary regression trees stored in flat heap arrays.

A tree is three parallel arrays indexed by heap position (root at 0,
children of node i at 2i+1 and 2i+2):

* ``var``  -- int32, split variable at internal nodes, ``LEAF`` (-1) at
  terminal nodes, ``ABSENT`` (-2) at unused slots.
* ``threshold`` -- split point c at internal nodes (rows with value <= c
  route left, ties included).
* ``leaf_value`` -- terminal-node level at leaves.

The flat layout keeps proposal moves cheap and lets the hot routing /
sufficient-statistic loops run through the numba kernels in
``fabart._kernels``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import route_rows

LEAF = -1
ABSENT = -2


@dataclass(frozen=True)
class SplitRule:
    """One binary splitting rule: route left when column value <= threshold."""

    variable_index: int
    threshold: float


class RegressionTree:
    """Binary decision tree with terminal-node values.

    Terminal regions partition the regressor space: every input row routes
    to exactly one leaf. ``n_leaves == n_internal + 1`` always holds.
    """

    __slots__ = ("var", "threshold", "leaf_value")

    def __init__(self, var, threshold, leaf_value):
        self.var = np.asarray(var, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.leaf_value = np.asarray(leaf_value, dtype=np.float64)

    @classmethod
    def stump(cls, value: float = 0.0, capacity: int = 15) -> "RegressionTree":
        var = np.full(capacity, ABSENT, dtype=np.int32)
        var[0] = LEAF
        thr = np.zeros(capacity)
        leaf = np.zeros(capacity)
        leaf[0] = value
        return cls(var, thr, leaf)

    def copy(self) -> "RegressionTree":
        return RegressionTree(self.var.copy(), self.threshold.copy(), self.leaf_value.copy())

    # -- structure queries ------------------------------------------------

    @staticmethod
    def depth_of(index: int) -> int:
        return int(index + 1).bit_length() - 1

    def is_leaf(self, index: int) -> bool:
        return self.var[index] == LEAF

    def is_internal(self, index: int) -> bool:
        return self.var[index] >= 0

    def leaf_indices(self) -> np.ndarray:
        return np.flatnonzero(self.var == LEAF)

    def internal_indices(self) -> np.ndarray:
        return np.flatnonzero(self.var >= 0)

    def prunable_indices(self) -> np.ndarray:
        """Internal nodes whose children are both terminal."""
        idx = np.flatnonzero(self.var >= 0)
        if idx.size == 0:
            return idx
        keep = (self.var[2 * idx + 1] == LEAF) & (self.var[2 * idx + 2] == LEAF)
        return idx[keep]

    def swap_pairs(self) -> list[tuple[int, int]]:
        """Parent-child pairs where both nodes are internal."""
        idx = np.flatnonzero(self.var >= 0)
        pairs = []
        for i in idx:
            for child in (2 * i + 1, 2 * i + 2):
                if self.var[child] >= 0:
                    pairs.append((int(i), int(child)))
        return pairs

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.var == LEAF))

    @property
    def n_internal(self) -> int:
        return int(np.sum(self.var >= 0))

    @property
    def max_depth(self) -> int:
        occupied = np.flatnonzero(self.var != ABSENT)
        return self.depth_of(int(occupied[-1]))

    def rule_at(self, index: int) -> SplitRule:
        if not self.is_internal(index):
            raise ValueError(f"node {index} carries no splitting rule")
        return SplitRule(int(self.var[index]), float(self.threshold[index]))

    def node_depths(self) -> dict[int, int]:
        return {int(i): self.depth_of(int(i)) for i in np.flatnonzero(self.var != ABSENT)}

    # -- structural edits (used by the proposal moves) --------------------

    def _ensure_capacity(self, index: int) -> None:
        if index < len(self.var):
            return
        new_cap = len(self.var)
        while new_cap <= index:
            new_cap = 2 * new_cap + 1
        var = np.full(new_cap, ABSENT, dtype=np.int32)
        thr = np.zeros(new_cap)
        leaf = np.zeros(new_cap)
        var[: len(self.var)] = self.var
        thr[: len(self.var)] = self.threshold
        leaf[: len(self.var)] = self.leaf_value
        self.var, self.threshold, self.leaf_value = var, thr, leaf

    def grow(self, index: int, rule: SplitRule) -> None:
        if not self.is_leaf(index):
            raise ValueError(f"grow target {index} is not a leaf")
        self._ensure_capacity(2 * index + 2)
        self.var[index] = rule.variable_index
        self.threshold[index] = rule.threshold
        for child in (2 * index + 1, 2 * index + 2):
            self.var[child] = LEAF
            self.leaf_value[child] = 0.0
            self.threshold[child] = 0.0

    def prune(self, index: int) -> None:
        left, right = 2 * index + 1, 2 * index + 2
        if not (self.is_internal(index) and self.var[left] == LEAF and self.var[right] == LEAF):
            raise ValueError(f"node {index} is not prunable")
        self.var[index] = LEAF
        self.threshold[index] = 0.0
        self.leaf_value[index] = 0.0
        for child in (left, right):
            self.var[child] = ABSENT
            self.threshold[child] = 0.0
            self.leaf_value[child] = 0.0

    def set_rule(self, index: int, rule: SplitRule) -> None:
        if not self.is_internal(index):
            raise ValueError(f"node {index} is not internal")
        self.var[index] = rule.variable_index
        self.threshold[index] = rule.threshold

    def swap_rules(self, parent: int, child: int) -> None:
        if child not in (2 * parent + 1, 2 * parent + 2):
            raise ValueError(f"{child} is not a child of {parent}")
        if not (self.is_internal(parent) and self.is_internal(child)):
            raise ValueError("swap needs an internal parent-child pair")
        self.var[parent], self.var[child] = self.var[child], self.var[parent]
        pt = self.threshold[parent]
        self.threshold[parent] = self.threshold[child]
        self.threshold[child] = pt

    # -- evaluation --------------------------------------------------------

    def route(self, rows: np.ndarray) -> np.ndarray:
        """Heap index of the leaf each row lands in."""
        rows = np.ascontiguousarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError("rows must be a 2-d regressor matrix")
        if int(self.var.max()) >= rows.shape[1]:
            raise IndexError(
                f"tree splits on column {int(self.var.max())} but rows has {rows.shape[1]} columns"
            )
        return route_rows(self.var, self.threshold, rows)

    def predict(self, rows: np.ndarray) -> np.ndarray:
        return self.leaf_value[self.route(rows)]


def predict_tree(tree: RegressionTree, rows: np.ndarray) -> np.ndarray:
    """Terminal-node value of the unique leaf each row routes to."""
    return tree.predict(rows)


def predict_forest(trees, rows: np.ndarray) -> np.ndarray:
    """Elementwise sum of the individual tree fits."""
    trees = list(trees)
    if not trees:
        raise ValueError("empty forest")
    total = trees[0].predict(rows)
    for tree in trees[1:]:
        total = total + tree.predict(rows)
    return total


def dump_tree(tree: RegressionTree) -> str:
    """Structured text dump of one tree (node, depth, kind, rule, value)."""
    lines = []
    for i in np.flatnonzero(tree.var != ABSENT):
        i = int(i)
        depth = tree.depth_of(i)
        if tree.var[i] == LEAF:
            lines.append(f"{i},{depth},leaf,,,{float(tree.leaf_value[i])!r}")
        else:
            lines.append(f"{i},{depth},split,{int(tree.var[i])},{float(tree.threshold[i])!r},")
    return "\n".join(lines)


def parse_tree(text: str) -> RegressionTree:
    """Inverse of :func:`dump_tree`."""
    records = []
    for line in text.strip().splitlines():
        node, _depth, kind, var, thr, leaf = line.split(",")
        records.append((int(node), kind, var, thr, leaf))
    capacity = 15
    top = max(r[0] for r in records)
    while capacity <= top:
        capacity = 2 * capacity + 1
    var = np.full(capacity, ABSENT, dtype=np.int32)
    thr = np.zeros(capacity)
    leaf = np.zeros(capacity)
    for node, kind, v, t, value in records:
        if kind == "leaf":
            var[node] = LEAF
            leaf[node] = float(value)
        else:
            var[node] = int(v)
            thr[node] = float(t)
    return RegressionTree(var, thr, leaf)
