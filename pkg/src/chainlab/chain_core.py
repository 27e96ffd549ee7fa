"""Finite Markov chains: validated transition matrices and exact primitives.

States are indexed ``0 .. n-1``. Distributions are plain 1-d numpy arrays;
:func:`as_distribution` validates them. A :class:`MarkovChain` is immutable
once built, and its stationary distribution is solved once on first use.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    DegenerateStateError,
    InvalidMatrixError,
    IrreducibilityError,
    NumericalError,
    TruncationError,
)

ROW_TOL = 1e-12
VERIFY_TOL = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def is_irreducible(P: np.ndarray) -> bool:
    """True iff the support graph of ``P`` is strongly connected."""
    ncomp, _ = connected_components(P > 0, directed=True, connection="strong")
    return ncomp == 1


def solve_stationary(P: np.ndarray) -> np.ndarray:
    """Solve ``pi (P - I) = 0`` with ``sum(pi) = 1`` replacing the last equation."""
    n = P.shape[0]
    A = (P - np.eye(n)).T.copy()
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"stationary system is singular: {exc}") from exc
    # roundoff can leave -1e-17 entries on tiny masses
    pi = np.where(np.abs(pi) < 1e-300, 0.0, pi)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return pi


class MarkovChain:
    """Irreducible finite Markov chain with a row-stochastic kernel.

    Parameters
    ----------
    P : array_like, shape (n, n)
        Transition matrix. Entries must lie in [0, 1] and each row must sum
        to one within ``tol``.
    tol : float
        Construction tolerance for entries and row sums.
    name : str, optional
        Label carried into reports.

    Raises
    ------
    InvalidMatrixError
        Shape, entry range or row sums are wrong.
    IrreducibilityError
        The support graph is not strongly connected.
    """

    def __init__(self, P, *, tol: float = ROW_TOL, name: Optional[str] = None):
        P = np.asarray(P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise InvalidMatrixError(f"transition matrix must be square and nonempty, got shape {P.shape}")
        if not np.all(np.isfinite(P)):
            raise InvalidMatrixError("transition matrix has non-finite entries")
        if P.min() < -tol or P.max() > 1.0 + tol:
            raise InvalidMatrixError("transition probabilities must lie in [0, 1]")
        rows = P.sum(axis=1)
        bad = np.flatnonzero(np.abs(rows - 1.0) > tol)
        if bad.size:
            raise InvalidMatrixError(
                f"row {int(bad[0])} sums to {rows[bad[0]]!r}, not 1 (tol {tol:g})"
            )
        P = np.clip(P, 0.0, 1.0)
        if not is_irreducible(P):
            raise IrreducibilityError("chain is not irreducible (more than one communicating class)")
        self._P = _readonly(P)
        self.tol = tol
        self.name = name
        self._lock = threading.Lock()
        self._pi: Optional[np.ndarray] = None
        self._reversible: Optional[bool] = None

    @property
    def P(self) -> np.ndarray:
        return self._P

    @property
    def n(self) -> int:
        return self._P.shape[0]

    @property
    def pi(self) -> np.ndarray:
        if self._pi is None:
            with self._lock:
                if self._pi is None:
                    self._pi = _readonly(solve_stationary(self._P))
        return self._pi

    @property
    def reversible(self) -> bool:
        """Detailed-balance flag at the verification tolerance (computed once)."""
        if self._reversible is None:
            value = is_reversible(self, VERIFY_TOL)
            with self._lock:
                self._reversible = value
        return self._reversible

    def power(self, t: int) -> np.ndarray:
        return np.linalg.matrix_power(self._P, int(t))

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<MarkovChain{label} n={self.n}>"


def stationary_distribution(chain: MarkovChain) -> np.ndarray:
    """Stationary distribution of an irreducible chain (direct dense solve)."""
    return chain.pi.copy()


def lazy(chain: MarkovChain) -> MarkovChain:
    """The lazy version with kernel ``(P + I) / 2``."""
    name = f"lazy({chain.name})" if chain.name else None
    return MarkovChain((chain.P + np.eye(chain.n)) / 2.0, tol=chain.tol, name=name)


def reversed_chain(chain: MarkovChain) -> MarkovChain:
    """Time reversal ``P^(x, y) = pi(y) P(y, x) / pi(x)``."""
    pi = chain.pi
    if pi.min() <= 0.0:
        raise DegenerateStateError("reversal needs strictly positive stationary mass")
    Phat = (chain.P.T * pi[None, :]) / pi[:, None]
    # renormalise the O(eps) row drift so construction tolerance is met
    Phat /= Phat.sum(axis=1, keepdims=True)
    name = f"reversed({chain.name})" if chain.name else None
    return MarkovChain(Phat, tol=chain.tol, name=name)


def detailed_balance_residual(chain: MarkovChain) -> float:
    flow = chain.pi[:, None] * chain.P
    return float(np.abs(flow - flow.T).max())


def is_reversible(chain: MarkovChain, tol: float = VERIFY_TOL) -> bool:
    """Detailed balance ``pi(x)P(x,y) = pi(y)P(y,x)`` up to ``tol``."""
    return detailed_balance_residual(chain) <= tol


def total_variation(mu, nu) -> float:
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != nu.shape:
        raise ValueError(f"length mismatch: {mu.shape} vs {nu.shape}")
    return 0.5 * float(np.abs(mu - nu).sum())


def as_distribution(weights, n: Optional[int] = None, tol: float = ROW_TOL) -> np.ndarray:
    """Validate a probability vector and return it as a float array."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise ValueError("distribution must be one-dimensional")
    if n is not None and w.shape[0] != n:
        raise ValueError(f"distribution has length {w.shape[0]}, expected {n}")
    if w.min() < -tol:
        raise ValueError("distribution has negative mass")
    if abs(w.sum() - 1.0) > tol:
        raise ValueError(f"distribution sums to {w.sum()!r}")
    return np.clip(w, 0.0, None)


def point_mass(n: int, x: int) -> np.ndarray:
    d = np.zeros(n)
    d[x] = 1.0
    return d


@dataclass(frozen=True)
class TimePmf:
    """Law of a random time independent of the chain, truncated to finite support.

    ``masses[i]`` is the probability of time ``offset + i``; ``tail`` is the
    probability of every time beyond the stored support.
    """

    offset: int
    masses: np.ndarray = field(repr=False)
    tail: float = 0.0

    def __post_init__(self):
        m = _readonly(self.masses)
        object.__setattr__(self, "masses", m)
        if self.offset < 0:
            raise ValueError("time offset must be nonnegative")
        if m.ndim != 1 or m.size == 0:
            raise ValueError("masses must be a nonempty vector")
        if m.min() < 0 or self.tail < 0:
            raise ValueError("masses must be nonnegative")
        if abs(m.sum() + self.tail - 1.0) > ROW_TOL:
            raise ValueError(f"masses plus tail sum to {m.sum() + self.tail!r}")

    @property
    def last(self) -> int:
        return self.offset + self.masses.size - 1

    def pmf(self) -> dict[int, float]:
        return {self.offset + i: float(p) for i, p in enumerate(self.masses) if p > 0}

    def mean(self) -> float:
        """Mean of the stored part (the tail is not included)."""
        times = np.arange(self.offset, self.last + 1)
        return float(times @ self.masses)

    def convolve(self, other: "TimePmf") -> "TimePmf":
        """Law of the sum of independent draws from ``self`` and ``other``."""
        m = np.convolve(self.masses, other.masses)
        tail = max(0.0, 1.0 - m.sum())
        return TimePmf(self.offset + other.offset, m, tail)

    def doubled(self) -> "TimePmf":
        return self.convolve(self)

    @classmethod
    def point(cls, k: int) -> "TimePmf":
        return cls(int(k), np.ones(1), 0.0)

    @classmethod
    def uniform(cls, t: int) -> "TimePmf":
        """Uniform on ``{1, ..., t}``."""
        if t < 1:
            raise ValueError("uniform time needs t >= 1")
        return cls(1, np.full(t, 1.0 / t), 0.0)

    @classmethod
    def geometric(cls, t: float, tail: float = 1e-12) -> "TimePmf":
        """Geometric on ``{1, 2, ...}`` with mean ``t``, truncated once the tail is below ``tail``."""
        if t < 1:
            raise ValueError("geometric time needs mean t >= 1")
        if t == 1:
            return cls.point(1)
        q = 1.0 - 1.0 / t
        K = max(1, math.ceil(math.log(tail) / math.log(q)))
        k = np.arange(K)
        masses = (1.0 / t) * q ** k
        rest = q ** K
        # renormalise roundoff so masses + tail == 1
        masses *= (1.0 - rest) / masses.sum()
        return cls(1, masses, rest)

    @classmethod
    def binomial(cls, t: int, p: float = 0.5) -> "TimePmf":
        from scipy.stats import binom

        k = np.arange(t + 1)
        masses = binom.pmf(k, t, p)
        masses /= masses.sum()
        return cls(0, masses, 0.0)


def check_tail(pmf: TimePmf, budget: float) -> None:
    if pmf.tail > budget:
        raise TruncationError(f"time law tail mass {pmf.tail:g} exceeds budget {budget:g}")
