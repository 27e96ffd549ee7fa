"""Random walks on trees with edge conductances.

The walk moves from ``x`` to a neighbour ``y`` with probability
``c(x, y) / c(x)``, where ``c(x)`` is the total conductance at ``x``; its
stationary law is ``pi(x) = c(x) / (2 * total conductance)``.

Hitting-time formula
--------------------
For an edge ``v -> w`` on the path from ``x`` towards ``y``, cutting the edge
leaves a component containing ``v``. If ``W(v)`` is the total conductance of
the edges inside that component, the expected time to cross the edge is
``1 + 2 W(v) / c(v, w)``, and ``E_x[tau_y]`` is the sum along the path.
Written with the component ``K`` that also keeps the edge itself and its
conductance counted over ordered pairs (every edge twice), a term reads
``C / c(v, w) - 1`` with ``C = 2 (W(v) + c(v, w))``. Counting each edge once
does not match the linear-solve hitting times (on the unit 3-path it gives 1
instead of 4), so the ordered-pair count is the one used here.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .chain_core import MarkovChain
from .errors import HoldingProbabilityError


class WeightedTree:
    """Connected acyclic graph with positive conductances on its edges.

    Parameters
    ----------
    n : int
        Vertex count; vertices are ``0 .. n-1``.
    edges : iterable of (u, v) or (u, v, c)
        Exactly ``n - 1`` edges; a missing conductance means 1.
    """

    def __init__(self, n: int, edges: Iterable):
        if n < 1:
            raise ValueError("tree needs at least one vertex")
        parsed = []
        for e in edges:
            u, v = int(e[0]), int(e[1])
            c = float(e[2]) if len(e) > 2 else 1.0
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) has an endpoint outside 0..{n - 1}")
            if u == v:
                raise ValueError(f"loop at {u} is not allowed in a tree")
            if not (c > 0 and np.isfinite(c)):
                raise ValueError(f"conductance on edge ({u}, {v}) must be positive and finite")
            parsed.append((u, v, c))
        if len(parsed) != n - 1:
            raise ValueError(f"a tree on {n} vertices has {n - 1} edges, got {len(parsed)}")
        self.n = n
        self.edges: tuple[tuple[int, int, float], ...] = tuple(parsed)
        self.adj: list[dict[int, float]] = [dict() for _ in range(n)]
        for u, v, c in parsed:
            if v in self.adj[u]:
                raise ValueError(f"duplicate edge ({u}, {v})")
            self.adj[u][v] = c
            self.adj[v][u] = c
        self.parent, self.order = self._root_at(0)
        if len(self.order) != n:
            raise ValueError("edge list does not connect all vertices")
        self.total = float(sum(c for _, _, c in parsed))
        self.degree_weight = np.array([sum(self.adj[x].values()) for x in range(n)])
        # inner[v]: total conductance of edges strictly inside the subtree of v (root 0)
        inner = np.zeros(n)
        for v in reversed(self.order):
            p = self.parent[v]
            if p >= 0:
                inner[p] += inner[v] + self.adj[v][p]
        self.inner = inner
        self._chain: Optional[MarkovChain] = None

    def _root_at(self, root: int) -> tuple[list[int], list[int]]:
        parent = [-2] * self.n
        parent[root] = -1
        order = [root]
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in self.adj[u]:
                if parent[v] == -2:
                    parent[v] = u
                    order.append(v)
                    queue.append(v)
        return parent, order

    @property
    def pi(self) -> np.ndarray:
        if self.n == 1:
            return np.ones(1)
        return self.degree_weight / (2.0 * self.total)

    @property
    def chain(self) -> MarkovChain:
        """The induced walk (built once)."""
        if self._chain is None:
            if self.n == 1:
                P = np.ones((1, 1))
            else:
                W = np.zeros((self.n, self.n))
                for u, v, c in self.edges:
                    W[u, v] = W[v, u] = c
                P = W / W.sum(axis=1, keepdims=True)
            self._chain = MarkovChain(P, name=f"tree(n={self.n})")
        return self._chain

    def with_conductances(self, conductances: Sequence[float]) -> "WeightedTree":
        """Same shape, new conductances (in edge order)."""
        return WeightedTree(self.n, [(u, v, float(c)) for (u, v, _), c in zip(self.edges, conductances)])

    def path(self, x: int, y: int) -> list[int]:
        """Vertices of the unique path from ``x`` to ``y``, both included."""
        up_x, up_y = [x], [y]
        depth = self._depths()
        a, b = x, y
        while depth[a] > depth[b]:
            a = self.parent[a]
            up_x.append(a)
        while depth[b] > depth[a]:
            b = self.parent[b]
            up_y.append(b)
        while a != b:
            a = self.parent[a]
            b = self.parent[b]
            up_x.append(a)
            up_y.append(b)
        return up_x + up_y[-2::-1]

    def _depths(self) -> list[int]:
        if not hasattr(self, "_depth"):
            depth = [0] * self.n
            for v in self.order[1:]:
                depth[v] = depth[self.parent[v]] + 1
            self._depth = depth
        return self._depth

    def __repr__(self) -> str:
        return f"<WeightedTree n={self.n}>"


def binary_tree(depth: int, conductance: float = 1.0) -> WeightedTree:
    """Complete binary tree; vertex ``i`` has children ``2i+1`` and ``2i+2``."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    n = 2 ** (depth + 1) - 1
    return WeightedTree(n, [((i - 1) // 2, i, conductance) for i in range(1, n)])


def path_tree(n: int) -> WeightedTree:
    return WeightedTree(n, [(i, i + 1, 1.0) for i in range(n - 1)])


def random_tree(n: int, seed: int = 0, c_low: float = 1.0, c_high: float = 2.0) -> WeightedTree:
    """Uniform random labelled tree with conductances uniform in ``[c_low, c_high]``."""
    from .generators import random_tree_edges

    rng = np.random.default_rng(np.random.SeedSequence([seed, n, 31]))
    edges = random_tree_edges(n, rng)
    cs = rng.uniform(c_low, c_high, size=len(edges))
    return WeightedTree(n, [(u, v, float(c)) for (u, v), c in zip(edges, cs)])


def tree_corpus(count: int = 50, seed: int = 0, n_low: int = 2, n_high: int = 14) -> list[WeightedTree]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4271]))
    return [random_tree(int(rng.integers(n_low, n_high + 1)), seed * 10_000 + i) for i in range(count)]


def _side_weight(tree: WeightedTree, v: int, w: int) -> float:
    """Conductance of edges in the component containing ``v`` after cutting edge ``v - w``."""
    if tree.parent[v] == w:
        return float(tree.inner[v])
    return tree.total - float(tree.inner[w]) - tree.adj[v][w]


def tree_hitting(tree: WeightedTree, x: int, y: int) -> float:
    """``E_x[tau_y]`` by the path formula (no linear solve)."""
    if x == y:
        raise ValueError("tree_hitting needs distinct vertices")
    p = tree.path(x, y)
    total = 0.0
    for v, w in zip(p[:-1], p[1:]):
        total += 1.0 + 2.0 * _side_weight(tree, v, w) / tree.adj[v][w]
    return total


def hitting_times_to(tree: WeightedTree, y: int) -> np.ndarray:
    """``E_x[tau_y]`` for every ``x`` in ``O(n)``, by the same formula rooted at ``y``."""
    parent, order = tree._root_at(y)
    inner = np.zeros(tree.n)
    for v in reversed(order):
        p = parent[v]
        if p >= 0:
            inner[p] += inner[v] + tree.adj[v][p]
    h = np.zeros(tree.n)
    for v in order[1:]:
        p = parent[v]
        h[v] = h[p] + 1.0 + 2.0 * inner[v] / tree.adj[v][p]
    return h


def _components_mass(tree: WeightedTree) -> np.ndarray:
    """Stationary mass of the heaviest component of ``T - {u}`` for every ``u``."""
    pi = tree.pi
    sub = pi.copy()
    for v in reversed(tree.order):
        p = tree.parent[v]
        if p >= 0:
            sub[p] += sub[v]
    heaviest = np.zeros(tree.n)
    for u in range(tree.n):
        parts = [sub[c] for c in tree.adj[u] if tree.parent[c] == u]
        if tree.parent[u] >= 0:
            parts.append(1.0 - sub[u])
        heaviest[u] = max(parts) if parts else 0.0
    return heaviest


def central_node(tree: WeightedTree) -> int:
    """Vertex minimising the stationary mass of its heaviest deleted component.

    Every component of ``T - {v}`` then carries mass at most 1/2. Ties go to
    the smallest index.
    """
    heavy = _components_mass(tree)
    best = float(heavy.min())
    return int(np.flatnonzero(heavy <= best + 1e-15)[0])


def is_central(tree: WeightedTree, v: int, tol: float = 1e-12) -> bool:
    return bool(_components_mass(tree)[v] <= 0.5 + tol)


def t_v(tree: WeightedTree, v: int) -> float:
    """``max_x E_x[tau_v]``."""
    return float(hitting_times_to(tree, v).max())


def tree_hit_bound_check(tree: WeightedTree, v: int, A: Iterable[int]) -> float:
    """Slack of ``max_x E_x[tau_A] <= t_v (1 + 1/pi(A))``; nonnegative when the bound holds."""
    from .hitting import expected_hitting

    A = list(A)
    worst = float(expected_hitting(tree.chain, A).max())
    mass = float(tree.pi[A].sum())
    return t_v(tree, v) * (1.0 + 1.0 / mass) - worst


@dataclass
class RobustnessReport:
    """Lazy mixing times under random conductances relative to the base tree."""

    base_t_lazy: int
    ratios: np.ndarray = field(repr=False)
    hitting_ratio_max: float
    hitting_envelope: float
    trials: int
    c_low: float
    c_high: float

    @property
    def min_ratio(self) -> float:
        return float(self.ratios.min())

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max())

    @property
    def spread(self) -> float:
        """``max / min`` of the per-trial ratios."""
        return self.max_ratio / self.min_ratio


def robustness_experiment(
    tree: WeightedTree, c_low: float = 1.0, c_high: float = 2.0, trials: int = 50, seed: int = 0
) -> RobustnessReport:
    """Resample conductances uniformly in ``[c_low, c_high]`` and compare lazy mixing times.

    Trial ``i`` draws from its own stream keyed by ``(seed, i)``. Hitting times
    to a central node are compared term by term: all conductances of both
    trees lie in ``[m, M]``, so each crossing term and hence each hitting time
    changes by at most ``(M/m)^2``.
    """
    from .distances import t_lazy

    if not 0 < c_low <= c_high:
        raise ValueError("need 0 < c_low <= c_high")
    base = t_lazy(tree.chain)
    if not base.attained:
        raise RuntimeError("lazy walk on the base tree did not mix within the horizon")
    v = central_node(tree)
    h_base = hitting_times_to(tree, v)
    base_c = [c for _, _, c in tree.edges]
    m = min([c_low] + base_c)
    M = max([c_high] + base_c)
    ratios = np.empty(trials)
    worst_h = 1.0
    for i in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        other = tree.with_conductances(rng.uniform(c_low, c_high, size=len(tree.edges)))
        t_other = t_lazy(other.chain)
        ratios[i] = t_other.time / base.time if base.time else float(t_other.time == 0)
        h = hitting_times_to(other, v)
        off = np.arange(tree.n) != v
        if off.any():
            r = h[off] / h_base[off]
            worst_h = max(worst_h, float(r.max()), float((1.0 / r).max()))
    return RobustnessReport(int(base.time), ratios, worst_h, (M / m) ** 2, trials, c_low, c_high)


def loop_perturbation(chain: MarkovChain, a) -> MarkovChain:
    """Hold at ``x`` with probability ``a(x)``, otherwise take a step of ``P``.

    ``Q = diag(a) + diag(1 - a) P``; its stationary law is proportional to
    ``pi(x) / (1 - a(x))``.
    """
    a = np.broadcast_to(np.asarray(a, dtype=float), (chain.n,))
    if np.any(a <= 0.0) or np.any(a >= 1.0):
        raise HoldingProbabilityError("holding probabilities must lie strictly between 0 and 1")
    Q = np.diag(a) + (1.0 - a)[:, None] * chain.P
    name = f"loops({chain.name})" if chain.name else None
    return MarkovChain(Q, tol=chain.tol, name=name)


def perturbed_stationary(chain: MarkovChain, a) -> np.ndarray:
    """Closed-form stationary law ``pi(x) / (1 - a(x))``, normalised."""
    a = np.broadcast_to(np.asarray(a, dtype=float), (chain.n,))
    w = chain.pi / (1.0 - a)
    return w / w.sum()


@dataclass(frozen=True)
class LoopReport:
    t_mix_perturbed: Optional[int]
    t_lazy_base: int
    ratio: Optional[float]


def loop_perturbation_report(chain: MarkovChain, a) -> LoopReport:
    """Mixing time of the loop-perturbed chain next to the lazy mixing time of ``P``."""
    from .distances import t_lazy, t_mix

    q = t_mix(loop_perturbation(chain, a))
    base = t_lazy(chain)
    ratio = q.time / base.time if q.attained and base.attained and base.time else None
    return LoopReport(q.time, base.time, ratio)
