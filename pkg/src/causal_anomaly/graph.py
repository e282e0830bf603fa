"""DAG over latent nodes, intervention mutilation and an equivalence checker.

Every latent node ``j`` has an implicit observed child ``X_j``.  In the
extended ``2d``-node graph built by :func:`mutilate`, latent nodes keep their
indices ``0..d-1`` and observed nodes are ``d..2d-1``.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAX_SIGNATURE_NODES = 8


class GraphError(ValueError):
    """Invalid graph structure or graph file."""


class CycleError(GraphError):
    pass


@dataclass(frozen=True)
class Dag:
    node_count: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.node_count) != self.node_count or self.node_count < 0:
            raise GraphError(f"node_count must be a non-negative integer, got {self.node_count!r}")
        edges = frozenset((int(p), int(c)) for p, c in self.edges)
        for p, c in edges:
            if not (0 <= p < self.node_count and 0 <= c < self.node_count):
                raise GraphError(f"edge ({p}, {c}) out of range for {self.node_count} nodes")
            if p == c:
                raise GraphError(f"self-loop on node {p}")
        object.__setattr__(self, "node_count", int(self.node_count))
        object.__setattr__(self, "edges", edges)
        # fails loudly on cycles
        _ = self.order

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[Sequence[int]]) -> "Dag":
        return cls(node_count, frozenset(tuple(e) for e in edges))

    @cached_property
    def _parents(self):
        pa = [[] for _ in range(self.node_count)]
        for p, c in self.edges:
            pa[c].append(p)
        return tuple(tuple(sorted(x)) for x in pa)

    @cached_property
    def _children(self):
        ch = [[] for _ in range(self.node_count)]
        for p, c in self.edges:
            ch[p].append(c)
        return tuple(tuple(sorted(x)) for x in ch)

    @cached_property
    def order(self) -> tuple:
        """Topological order, ties broken by ascending index (Kahn)."""
        indeg = [0] * self.node_count
        children = [[] for _ in range(self.node_count)]
        for p, c in self.edges:
            indeg[c] += 1
            children[p].append(c)
        heap = [j for j in range(self.node_count) if indeg[j] == 0]
        heapq.heapify(heap)
        out = []
        while heap:
            j = heapq.heappop(heap)
            out.append(j)
            for c in children[j]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        if len(out) != self.node_count:
            raise CycleError("graph contains a directed cycle")
        return tuple(out)

    def parents(self, j: int) -> tuple:
        self._check_index(j)
        return self._parents[j]

    def children(self, j: int) -> tuple:
        self._check_index(j)
        return self._children[j]

    @cached_property
    def _descendants(self):
        desc = [set() for _ in range(self.node_count)]
        for j in reversed(self.order):
            for c in self._children[j]:
                desc[j].add(c)
                desc[j] |= desc[c]
        return tuple(frozenset(s) for s in desc)

    def descendants(self, j: int) -> frozenset:
        self._check_index(j)
        return self._descendants[j]

    def sinks(self) -> tuple:
        return tuple(j for j in range(self.node_count) if not self._children[j])

    def roots(self) -> tuple:
        return tuple(j for j in range(self.node_count) if not self._parents[j])

    def _check_index(self, j):
        if not 0 <= j < self.node_count:
            raise IndexError(f"node {j} out of range [0, {self.node_count})")

    def relabel(self, perm: Sequence[int]) -> "Dag":
        """Graph with node ``j`` renamed to ``perm[j]``."""
        return Dag(self.node_count, frozenset((perm[p], perm[c]) for p, c in self.edges))

    # -- serialization -----------------------------------------------------

    def to_text(self) -> str:
        lines = [f"nodes {self.node_count}"]
        lines += [f"{p} {c}" for p, c in sorted(self.edges)]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"nodes": self.node_count, "edges": [list(e) for e in sorted(self.edges)]})

    @classmethod
    def from_text(cls, text: str) -> "Dag":
        stripped = text.lstrip()
        if stripped.startswith("{"):
            try:
                obj = json.loads(text)
                return cls.from_edges(int(obj["nodes"]), obj.get("edges", []))
            except (KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, GraphError):
                    raise
                raise GraphError(f"malformed JSON graph: {exc}") from exc
        node_count = None
        edges = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "nodes":
                if node_count is not None or len(parts) != 2:
                    raise GraphError(f"line {lineno}: bad header {raw!r}")
                node_count = _parse_int(parts[1], lineno)
                continue
            if len(parts) != 2:
                raise GraphError(f"line {lineno}: expected 'parent child', got {raw!r}")
            edges.append((_parse_int(parts[0], lineno), _parse_int(parts[1], lineno)))
        if node_count is None:
            raise GraphError("missing 'nodes <d>' header")
        if len(set(edges)) != len(edges):
            raise GraphError("duplicate edges")
        return cls.from_edges(node_count, edges)


def _parse_int(tok, lineno):
    try:
        return int(tok)
    except ValueError:
        raise GraphError(f"line {lineno}: not an integer: {tok!r}") from None


def read_dag(path) -> Dag:
    return Dag.from_text(Path(path).read_text())


def write_dag(dag: Dag, path) -> None:
    path = Path(path)
    text = dag.to_json() + "\n" if path.suffix == ".json" else dag.to_text()
    path.write_text(text)


def topo_order(dag: Dag) -> list:
    return list(dag.order)


def parents(dag: Dag, j: int) -> set:
    return set(dag.parents(j))


def children(dag: Dag, j: int) -> set:
    return set(dag.children(j))


# ---------------------------------------------------------------------------
# interventions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InterventionPattern:
    """Mechanistic (``mech``, z) and measurement (``meas``, w) indicators."""

    mech: tuple
    meas: tuple

    def __post_init__(self):
        mech = tuple(bool(v) for v in self.mech)
        meas = tuple(bool(v) for v in self.meas)
        if len(mech) != len(meas):
            raise ValueError("mech and meas must have the same length")
        object.__setattr__(self, "mech", mech)
        object.__setattr__(self, "meas", meas)

    @classmethod
    def empty(cls, d):
        return cls((False,) * d, (False,) * d)

    def __len__(self):
        return len(self.mech)

    def __str__(self):
        z = "".join("1" if v else "0" for v in self.mech)
        w = "".join("1" if v else "0" for v in self.meas)
        return f"z={z},w={w}"

    def relabel(self, perm):
        d = len(self)
        mech = [False] * d
        meas = [False] * d
        for j in range(d):
            mech[perm[j]] = self.mech[j]
            meas[perm[j]] = self.meas[j]
        return InterventionPattern(tuple(mech), tuple(meas))


def all_patterns(d: int, max_order: int | None = None) -> list:
    """All patterns over ``d`` nodes with at most ``max_order`` indicators set."""
    out = []
    for bits in itertools.product((False, True), repeat=2 * d):
        if max_order is not None and sum(bits) > max_order:
            continue
        out.append(InterventionPattern(bits[:d], bits[d:]))
    return out


def mutilate(dag: Dag, pattern: InterventionPattern) -> Dag:
    d = dag.node_count
    if len(pattern) != d:
        raise ValueError(f"pattern has length {len(pattern)}, graph has {d} nodes")
    edges = set()
    for p, c in dag.edges:
        if not pattern.mech[c]:
            edges.add((p, c))
    for j in range(d):
        if not pattern.meas[j]:
            edges.add((j, d + j))
    return Dag(2 * d, frozenset(edges))


def d_separated(dag: Dag, x: int, y: int, given: Iterable[int]) -> bool:
    """Reachability ("Bayes-ball") test of ``x`` d-separated from ``y`` given ``given``."""
    given = set(given)
    if x in given or y in given:
        return True
    # ancestors of the conditioning set (collider activation)
    anc = set()
    stack = list(given)
    while stack:
        v = stack.pop()
        if v in anc:
            continue
        anc.add(v)
        stack.extend(dag.parents(v))
    # state: (node, arrived_from_child) ; "up" = travelling against edges
    visited = set()
    stack = [(x, True)]
    while stack:
        v, up = stack.pop()
        if (v, up) in visited:
            continue
        visited.add((v, up))
        if v == y:
            return False
        if up and v not in given:
            for p in dag.parents(v):
                stack.append((p, True))
            for c in dag.children(v):
                stack.append((c, False))
        elif not up:
            if v not in given:
                for c in dag.children(v):
                    stack.append((c, False))
            if v in anc:
                for p in dag.parents(v):
                    stack.append((p, True))
    return True


def observed_ci_signature(dag: Dag, pattern: InterventionPattern) -> tuple:
    """Sorted tuple of ``(i, j, S)`` with ``X_i`` independent of ``X_j`` given ``X_S``.

    Indices refer to observed variables ``0..d-1``; only observed nodes are
    conditioned on.
    """
    d = dag.node_count
    if d > MAX_SIGNATURE_NODES:
        raise ValueError(
            f"signature enumeration is desk-scale only (d <= {MAX_SIGNATURE_NODES}), got d={d}"
        )
    g = mutilate(dag, pattern)
    out = []
    for i, j in itertools.combinations(range(d), 2):
        rest = [k for k in range(d) if k not in (i, j)]
        for size in range(len(rest) + 1):
            for cond in itertools.combinations(rest, size):
                if d_separated(g, d + i, d + j, [d + k for k in cond]):
                    out.append((i, j, cond))
    return tuple(sorted(out))


def equivalence_classes(dag: Dag, patterns: Sequence[InterventionPattern]) -> list:
    """Group patterns with equal observed CI signatures, in first-seen order."""
    groups = {}
    for pat in patterns:
        groups.setdefault(observed_ci_signature(dag, pat), []).append(pat)
    return list(groups.values())


def adjacency(dag: Dag) -> np.ndarray:
    a = np.zeros((dag.node_count, dag.node_count), dtype=bool)
    for p, c in dag.edges:
        a[p, c] = True
    return a
