"""Callback-driven constraint-optimization search.

The engine owns the node tree, the open list and the beam loop. It knows
nothing about what variables or values mean; the application supplies the
five callbacks and an opaque ``state`` object with a ``copy()`` method.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass
from typing import Any, Callable, Optional

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 200_000


class SearchNode:
    __slots__ = ("id", "parent", "assignment", "state", "score", "priority", "depth", "variable", "values",
                 "cursor")

    def __init__(self, id, state, parent=None, assignment=None, score=0.0, depth=0):
        self.id = id
        self.parent = parent
        self.assignment = assignment  # (variable, value) or None at the root
        self.state = state
        self.score = score
        self.priority = score  # open-list rank; a re-inserted parent ranks as its pending child
        self.depth = depth
        self.variable = None
        self.values = None
        self.cursor = 0

    def path(self) -> list:
        """Assignments from the root down to this node."""
        out = []
        node = self
        while node is not None and node.assignment is not None:
            out.append(node.assignment)
            node = node.parent
        out.reverse()
        return out

    def __repr__(self):
        return f"SearchNode(id={self.id}, depth={self.depth}, score={self.score:.6g})"


class OpenNodes:
    """Open list supporting both best-score and newest-first selection."""

    def __init__(self):
        self._live = {}  # id -> (node, version)
        self._heap = []
        self._stack = []
        self._version = itertools.count()

    def add(self, node: SearchNode) -> None:
        v = next(self._version)
        self._live[node.id] = (node, v)
        heapq.heappush(self._heap, (-node.priority, node.id, v))
        self._stack.append((node.id, v))

    def _take(self, nid, v):
        entry = self._live.get(nid)
        if entry is None or entry[1] != v:
            return None
        del self._live[nid]
        return entry[0]

    def pop_best(self, n: Optional[int]) -> list:
        out = []
        while self._heap and (n is None or len(out) < n):
            _, nid, v = heapq.heappop(self._heap)
            node = self._take(nid, v)
            if node is not None:
                out.append(node)
        self._compact()
        return out

    def pop_newest(self, n: Optional[int]) -> list:
        out = []
        while self._stack and (n is None or len(out) < n):
            nid, v = self._stack.pop()
            node = self._take(nid, v)
            if node is not None:
                out.append(node)
        self._compact()
        return out

    def evict_worst(self, keep: int) -> list:
        """Drop the lowest-ranked nodes (newest first among ties) down to ``keep``."""
        excess = len(self._live) - keep
        if excess <= 0:
            return []
        ranked = sorted(self._live.values(), key=lambda e: (e[0].priority, -e[0].id))
        dropped = [node for node, _ in ranked[:excess]]
        for node in dropped:
            del self._live[node.id]
        self._compact(force=True)
        return dropped

    def _compact(self, force=False):
        if force or len(self._heap) > 4 * len(self._live) + 64:
            self._heap = [e for e in self._heap if self._live.get(e[1], (None, None))[1] == e[2]]
            heapq.heapify(self._heap)
        if force or len(self._stack) > 4 * len(self._live) + 64:
            self._stack = [e for e in self._stack if self._live.get(e[0], (None, None))[1] == e[1]]

    def __len__(self):
        return len(self._live)

    def __bool__(self):
        return bool(self._live)

    def __iter__(self):
        return (node for node, _ in self._live.values())


def choose_nodes_objective(open_nodes: OpenNodes, beam_width: Optional[int]) -> list:
    """The ``beam_width`` highest-ranked open nodes; earlier-created nodes win ties.

    A fresh node ranks by its score. A parent waiting to yield its next value
    ranks by the score that child will have, so lazily expanding siblings
    orders the beam as if every sibling had been created up front.
    """
    return open_nodes.pop_best(beam_width)


def choose_nodes_dfs(open_nodes: OpenNodes, beam_width: Optional[int]) -> list:
    """The ``beam_width`` most recently added open nodes, newest first."""
    return open_nodes.pop_newest(beam_width)


GLOBAL_STRATEGIES = {"objective": choose_nodes_objective, "dfs": choose_nodes_dfs}


@dataclass
class Callbacks:
    choose_nodes: Callable[[OpenNodes, Optional[int]], list]
    choose_variable: Callable[[SearchNode], Any]
    choose_value: Callable[[SearchNode, Any], list]
    propagate_choices: Callable[[SearchNode, Any, Any], None]
    is_feasible: Callable[[SearchNode], bool]
    # score a value would add to the node; lets re-inserted parents rank as their next child
    value_gain: Optional[Callable[[SearchNode, Any], float]] = None


@dataclass
class SearchResult:
    best: SearchNode
    nodes_created: int
    iterations: int
    truncated: bool
    solutions: int

    @property
    def complete(self) -> bool:
        return self.solutions > 0


class _Counter:
    def __init__(self):
        self.value = 0

    def __call__(self):
        self.value += 1
        return self.value - 1


def create_child_node(node: SearchNode, variable, value, new_id) -> SearchNode:
    """A child sharing the parent's ancestry with a private copy of its state."""
    return SearchNode(new_id(), node.state.copy(), parent=node, assignment=(variable, value),
                      score=node.score, depth=node.depth + 1)


def plan_it(root_state, callbacks: Callbacks, beam_width: Optional[int] = 1,
            budget: Optional[int] = DEFAULT_BUDGET, *, exhaustive: bool = False,
            max_open: Optional[int] = None, root_score: float = 0.0) -> SearchResult:
    """Beam-managed search over the node tree.

    Each iteration pops a beam of open nodes; every beam node yields one
    child for its next value and goes back on the open list while values
    remain. A node is terminal once ``choose_variable`` has nothing left to
    assign. The search stops after the first iteration that produced a
    terminal node, or, with ``exhaustive``, when the open list is empty.
    ``beam_width=None`` expands every open node each iteration.
    """
    if beam_width is not None and beam_width < 1:
        raise ValueError("beam width must be positive")
    new_id = _Counter()
    root = SearchNode(new_id(), root_state, score=root_score)
    created = 1
    best_terminal = None
    best_seen = root
    n_terminal = 0

    root.variable = callbacks.choose_variable(root)
    if root.variable is None:
        return SearchResult(root, created, 0, False, 1)

    open_nodes = OpenNodes()
    open_nodes.add(root)
    iterations = 0
    truncated = False
    while open_nodes:
        iterations += 1
        beam = callbacks.choose_nodes(open_nodes, beam_width)
        reinsert, children = [], []
        found = False
        for node in beam:
            if node.values is None:
                node.values = list(callbacks.choose_value(node, node.variable))
                node.cursor = 0
            if node.cursor >= len(node.values):
                _release(node)
                continue
            value = node.values[node.cursor]
            node.cursor += 1
            child = create_child_node(node, node.variable, value, new_id)
            created += 1
            callbacks.propagate_choices(child, node.variable, value)
            if callbacks.is_feasible(child):
                if child.score > best_seen.score:
                    best_seen = child
                child.variable = callbacks.choose_variable(child)
                if child.variable is None:
                    n_terminal += 1
                    found = True
                    if best_terminal is None or child.score > best_terminal.score:
                        best_terminal = child
                    _release(child)
                else:
                    children.append(child)
            if node.cursor < len(node.values):
                reinsert.append(node)
            else:
                _release(node)
            if budget is not None and created >= budget:
                truncated = True
                break
        # parents first so that children sit on top of the stack
        for node in reversed(reinsert):
            if callbacks.value_gain is not None:
                node.priority = node.score + callbacks.value_gain(node, node.values[node.cursor])
            open_nodes.add(node)
        for node in reversed(children):
            node.priority = node.score
            open_nodes.add(node)
        if max_open is not None and len(open_nodes) > max_open:
            for node in open_nodes.evict_worst(max_open):
                _release(node)
        if truncated or (found and not exhaustive):
            break

    if truncated:
        log.info("node budget %s exhausted after %d iterations", budget, iterations)
    best = best_terminal if best_terminal is not None else best_seen
    return SearchResult(best, created, iterations, truncated, n_terminal)


def _release(node: SearchNode) -> None:
    # ancestry links stay for path(); the heavy state does not
    node.state = None
    node.values = None
