"""Constructors for the named chain families and random reversible test chains."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

import numpy as np

from .chain_core import MarkovChain, lazy

FAMILIES = (
    "biased_cycle",
    "greasy_ladder",
    "glued_cliques",
    "path_walk",
    "binary_tree_walk",
    "weighted_graph_walk",
    "two_state",
    "random_reversible",
)


def _check_prob(name: str, p: float, *, allow_one: bool = False) -> None:
    hi_ok = p <= 1.0 if allow_one else p < 1.0
    if not (p > 0.0 and hi_ok):
        bound = "(0, 1]" if allow_one else "(0, 1)"
        raise ValueError(f"{name} must lie in {bound}, got {p!r}")


def biased_cycle(n: int, p: float = 2 / 3, *, lazy_walk: bool = False) -> MarkovChain:
    """Walk on the n-cycle stepping +1 w.p. ``p`` and -1 w.p. ``1 - p``.

    Non-reversible for ``n >= 3`` and ``p != 1/2``; the stationary law is
    uniform because the kernel is doubly stochastic. Mixing statements about
    this family refer to the lazy walk (``lazy_walk=True``).
    """
    if n < 2:
        raise ValueError("cycle needs n >= 2")
    _check_prob("p", p)
    P = np.zeros((n, n))
    for i in range(n):
        P[i, (i + 1) % n] += p
        P[i, (i - 1) % n] += 1.0 - p
    chain = MarkovChain(P, name=f"biased_cycle(n={n})")
    return lazy(chain) if lazy_walk else chain


def greasy_ladder(n: int) -> MarkovChain:
    """Climb one rung w.p. 1/2 or fall to the bottom; the top rung always falls."""
    if n < 2:
        raise ValueError("greasy ladder needs n >= 2")
    P = np.zeros((n, n))
    for i in range(n - 1):
        P[i, i + 1] = 0.5
        P[i, 0] += 0.5
    P[n - 1, 0] = 1.0
    return MarkovChain(P, name=f"greasy_ladder(n={n})")


def graph_walk(n: int, edges: Iterable, name: Optional[str] = None) -> MarkovChain:
    """Walk moving to a neighbour with probability proportional to conductance.

    ``edges`` holds ``(u, v)`` or ``(u, v, c)`` items; ``u == v`` is a loop
    contributing ``c`` to the holding weight. Parallel edges accumulate.
    """
    W = np.zeros((n, n))
    for e in edges:
        u, v = int(e[0]), int(e[1])
        c = float(e[2]) if len(e) > 2 else 1.0
        if c <= 0:
            raise ValueError(f"conductance on edge ({u}, {v}) must be positive")
        W[u, v] += c
        if u != v:
            W[v, u] += c
    deg = W.sum(axis=1)
    if np.any(deg <= 0):
        raise ValueError("every vertex needs at least one incident edge")
    return MarkovChain(W / deg[:, None], name=name)


def glued_cliques(n: int) -> MarkovChain:
    """Simple random walk on two ``K_n`` joined by a single bridge edge."""
    if n < 2:
        raise ValueError("glued cliques needs n >= 2")
    edges = []
    for off in (0, n):
        edges += [(off + i, off + j) for i in range(n) for j in range(i + 1, n)]
    edges.append((n - 1, n))
    return graph_walk(2 * n, edges, name=f"glued_cliques(n={n})")


def path_walk(n: int) -> MarkovChain:
    """Simple random walk on the path ``0 - 1 - ... - (n-1)``."""
    if n < 2:
        raise ValueError("path needs n >= 2")
    return graph_walk(n, [(i, i + 1) for i in range(n - 1)], name=f"path_walk(n={n})")


def binary_tree_walk(depth: int) -> MarkovChain:
    """Simple random walk on the complete binary tree with ``2^(depth+1) - 1`` vertices."""
    from .trees import binary_tree

    return binary_tree(depth).chain


def weighted_graph_walk(edges: Iterable, n: Optional[int] = None) -> MarkovChain:
    edges = [tuple(e) for e in edges]
    if n is None:
        n = 1 + max(max(int(e[0]), int(e[1])) for e in edges)
    return graph_walk(n, edges, name="weighted_graph_walk")


def two_state(p: float, q: float) -> MarkovChain:
    """``[[1-p, p], [q, 1-q]]``; ``p = q = 1`` is the period-2 flip chain."""
    _check_prob("p", p, allow_one=True)
    _check_prob("q", q, allow_one=True)
    return MarkovChain([[1.0 - p, p], [q, 1.0 - q]], name=f"two_state(p={p:g},q={q:g})")


def flip_chain() -> MarkovChain:
    return MarkovChain([[0.0, 1.0], [1.0, 0.0]], name="flip2")


def random_tree_edges(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Uniform spanning tree of ``K_n`` decoded from a random Pruefer sequence."""
    if n == 1:
        return []
    if n == 2:
        return [(0, 1)]
    seq = rng.integers(0, n, size=n - 2)
    degree = np.ones(n, dtype=int)
    for v in seq:
        degree[v] += 1
    edges = []
    for v in seq:
        leaf = int(np.flatnonzero(degree == 1)[0])
        edges.append((leaf, int(v)))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = np.flatnonzero(degree == 1)
    edges.append((int(u), int(w)))
    return edges


def random_reversible(
    n: int,
    seed: int = 0,
    *,
    extra_edge_prob: float = 0.3,
    loop_prob: float = 0.2,
    c_low: float = 1.0,
    c_high: float = 2.0,
) -> MarkovChain:
    """Conductance walk on a random spanning tree plus random extra edges.

    Irreducible (the tree spans) and reversible (any conductance walk is).
    Loops are added at random vertices so the corpus mixes periodic and
    aperiodic chains.
    """
    if n < 2:
        raise ValueError("random_reversible needs n >= 2")
    rng = np.random.default_rng(np.random.SeedSequence([seed, n]))
    tree = random_tree_edges(n, rng)
    present = {frozenset(e) for e in tree}
    extra = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if frozenset((i, j)) not in present and rng.random() < extra_edge_prob
    ]
    loops = [(i, i) for i in range(n) if rng.random() < loop_prob]
    edges = tree + extra + loops
    conductances = rng.uniform(c_low, c_high, size=len(edges))
    weighted = [(u, v, c) for (u, v), c in zip(edges, conductances)]
    return graph_walk(n, weighted, name=f"random_reversible(n={n},seed={seed})")


_BUILDERS = {
    "biased_cycle": lambda p: biased_cycle(
        int(p["n"]), float(p.get("p", 2 / 3)), lazy_walk=bool(p.get("lazy", False))
    ),
    "greasy_ladder": lambda p: greasy_ladder(int(p["n"])),
    "glued_cliques": lambda p: glued_cliques(int(p["n"])),
    "path_walk": lambda p: path_walk(int(p["n"])),
    "binary_tree_walk": lambda p: binary_tree_walk(int(p["depth"])),
    "weighted_graph_walk": lambda p: weighted_graph_walk(p["edges"], p.get("n")),
    "two_state": lambda p: two_state(float(p["p"]), float(p["q"])),
    "random_reversible": lambda p: random_reversible(int(p["n"]), int(p.get("seed", 0))),
}


@dataclass(frozen=True)
class ChainFamily:
    """A named family member: ``family`` tag plus its parameters."""

    family: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in _BUILDERS:
            raise ValueError(f"unknown chain family {self.family!r}; known: {', '.join(FAMILIES)}")

    def build(self) -> MarkovChain:
        chain = _BUILDERS[self.family](self.params)
        label = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()) if k != "edges")
        chain.name = f"{self.family}({label})"
        return chain


def corpus(seed: int = 0, max_n: int = 12) -> list[tuple[ChainFamily, MarkovChain]]:
    """Deterministic corpus covering every family with at most ``max_n`` states.

    Yields 200+ chains for the default arguments, periodic and
    non-reversible members included.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
    members: list[ChainFamily] = []
    for p, q in [(0.5, 0.5), (1.0, 1.0), (0.3, 0.3), (0.1, 0.6), (0.9, 0.2), (1.0, 0.5), (0.05, 0.05)]:
        members.append(ChainFamily("two_state", {"p": p, "q": q}))
    for n in range(3, max_n + 1):
        members.append(ChainFamily("biased_cycle", {"n": n}))
        members.append(ChainFamily("biased_cycle", {"n": n, "p": 0.9}))
        members.append(ChainFamily("biased_cycle", {"n": n, "lazy": True}))
    for n in range(2, max_n + 1):
        members.append(ChainFamily("greasy_ladder", {"n": n}))
        members.append(ChainFamily("path_walk", {"n": n}))
    for n in range(2, max_n // 2 + 1):
        members.append(ChainFamily("glued_cliques", {"n": n}))
    depth = 1
    while 2 ** (depth + 2) - 1 <= max_n:
        depth += 1
    for d in range(1, depth + 1):
        members.append(ChainFamily("binary_tree_walk", {"depth": d}))
    for i in range(20):
        n = int(rng.integers(3, max_n + 1))
        tree = random_tree_edges(n, rng)
        edges = [[u, v, float(rng.uniform(0.5, 3.0))] for u, v in tree]
        for _ in range(int(rng.integers(0, n))):
            u, v = (int(a) for a in rng.integers(0, n, size=2))
            edges.append([u, v, float(rng.uniform(0.5, 3.0))])
        members.append(ChainFamily("weighted_graph_walk", {"n": n, "edges": edges}))
    for i in range(120):
        n = 2 + i % (max_n - 1)
        members.append(ChainFamily("random_reversible", {"n": n, "seed": seed * 1000 + i}))
    return [(m, m.build()) for m in members]
