"""Expected hitting times, delayed hitting, and maximisation over target sets.

Sets are passed either as a :class:`SubsetMask` or as any iterable of state
indices. Hitting vectors follow the convention ``tau_A = min{t >= 0: X_t in A}``
so they vanish on ``A``; :func:`expected_return` gives the ``t >= 1`` version.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from .chain_core import MarkovChain
from .checks import Check, worst_of
from .errors import NumericalError, ScaleError

ENUMERATION_CUTOFF = 20
PROD_CUTOFF = 16
TIE_TOL = 1e-9


@dataclass(frozen=True)
class SubsetMask:
    """Membership flags over the states of one chain plus the cached mass ``pi(A)``."""

    members: tuple[bool, ...]
    pi_mass: float

    @classmethod
    def of(cls, chain: MarkovChain, states: Iterable[int]) -> "SubsetMask":
        flags = [False] * chain.n
        for s in states:
            s = int(s)
            if not 0 <= s < chain.n:
                raise ValueError(f"state {s} outside 0..{chain.n - 1}")
            flags[s] = True
        mask = np.array(flags)
        return cls(tuple(flags), float(chain.pi[mask].sum()))

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.members) if f)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.members, dtype=bool)

    def __len__(self) -> int:
        return sum(self.members)


SetLike = Union[SubsetMask, np.ndarray, Iterable[int]]


def _mask(chain: MarkovChain, A: SetLike) -> np.ndarray:
    if isinstance(A, SubsetMask):
        if len(A.members) != chain.n:
            raise ValueError("subset mask built for a chain of another size")
        m = A.array
    elif isinstance(A, np.ndarray) and A.dtype == bool:
        if A.shape != (chain.n,):
            raise ValueError("boolean mask has the wrong length")
        m = A.copy()
    else:
        m = np.zeros(chain.n, dtype=bool)
        idx = list(A)
        if idx:
            m[np.asarray(idx, dtype=int)] = True
    if not m.any():
        raise ValueError("target set must be nonempty")
    return m


@dataclass
class HittingReport:
    """Result of a maximisation over starting states and target sets."""

    value: float
    state: int
    subset: tuple[int, ...]
    alpha: Optional[float]
    sets_examined: int
    warning: Optional[str] = None
    method: str = "enumerate"
    hitting_time: Optional[float] = None  # E_x[tau_A] at the argmax (t_prod only)


def _solve_hitting(P: np.ndarray, mask: np.ndarray) -> np.ndarray:
    comp = ~mask
    h = np.zeros(P.shape[0])
    if comp.any():
        M = np.eye(int(comp.sum())) - P[np.ix_(comp, comp)]
        try:
            h[comp] = np.linalg.solve(M, np.ones(M.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"hitting system singular: {exc}") from exc
        if not np.all(np.isfinite(h)):
            raise NumericalError("hitting system produced non-finite values")
    return h


def expected_hitting(chain: MarkovChain, A: SetLike) -> np.ndarray:
    """``E_x[tau_A]`` for every ``x``, zero on ``A``."""
    return _solve_hitting(chain.P, _mask(chain, A))


def expected_return(chain: MarkovChain, A: SetLike) -> np.ndarray:
    """``E_x[tau_A^+]`` with ``tau_A^+ = min{t >= 1: X_t in A}``."""
    h = expected_hitting(chain, A)
    return 1.0 + chain.P @ h


def delayed_hitting(chain: MarkovChain, A: SetLike, k: int) -> np.ndarray:
    """``E_x[min{t >= k: X_t in A}] = k + sum_y P^k(x, y) E_y[tau_A]``."""
    if k < 0:
        raise ValueError("delay k must be nonnegative")
    h = expected_hitting(chain, A)
    return k + chain.power(k) @ h


def kac_sum(chain: MarkovChain, A: SetLike, k: int) -> float:
    """``sum_{x in A} pi(x) E_x[tau_A^(k)]``, which never exceeds ``k``."""
    if k < 1:
        raise ValueError("Kac sum needs k >= 1")
    m = _mask(chain, A)
    return float(chain.pi[m] @ delayed_hitting(chain, m, k)[m])


def kac_check(chain: MarkovChain, max_k: int = 5, tol: float = 1e-9) -> Check:
    """Kac sum against ``k`` over every nonempty set and ``1 <= k <= max_k``."""
    n = chain.n
    if n > PROD_CUTOFF:
        raise ScaleError(f"Kac check enumerates all sets; n={n} exceeds {PROD_CUTOFF}")
    powers = [np.eye(n)]
    for _ in range(max_k):
        powers.append(powers[-1] @ chain.P)
    pi = chain.pi

    def instances():
        for m in _all_masks(n):
            h = _solve_hitting(chain.P, m)
            for k in range(1, max_k + 1):
                val = float(pi[m] @ (k + powers[k] @ h)[m])
                yield val, float(k), f"A={_indices(m)},k={k}"

    return worst_of("kac sum<=k", instances(), tol)


def _indices(m: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.flatnonzero(m))


def _all_masks(n: int):
    for bits in range(1, 1 << n):
        yield np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)


def minimal_sets(pi: np.ndarray, alpha: float):
    """Yield every inclusion-minimal set with ``pi(A) >= alpha``.

    States are visited in order of decreasing ``pi`` (index breaks ties). A
    branch stops as soon as its running mass reaches ``alpha``: the element
    just added is the lightest, so dropping any element falls below
    ``alpha``. Branches whose remaining mass cannot reach ``alpha`` are cut.
    """
    order = sorted(range(len(pi)), key=lambda i: (-pi[i], i))
    w = [float(pi[i]) for i in order]
    suffix = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])
    # absorb roundoff so sets of mass exactly alpha are not lost
    target = alpha - 1e-12

    def descend(start: int, chosen: list[int], mass: float):
        for j in range(start, len(order)):
            if mass + suffix[j] < target:
                return
            new_mass = mass + w[j]
            chosen.append(order[j])
            if new_mass >= target:
                yield tuple(sorted(chosen))
            else:
                yield from descend(j + 1, chosen, new_mass)
            chosen.pop()

    yield from descend(0, [], 0.0)


def _better(value: float, subset: tuple, state: int, best) -> bool:
    if best is None:
        return True
    bv, bs, bx = best
    if value > bv + TIE_TOL * max(1.0, abs(bv)):
        return True
    if value < bv - TIE_TOL * max(1.0, abs(bv)):
        return False
    return (subset, state) < (bs, bx)


def _alpha_warning(alpha: float) -> Optional[str]:
    if alpha >= 0.5:
        return ("alpha >= 1/2: hitting times of such sets need not be comparable to mixing "
                "(two cliques joined by one edge)")
    return None


def nearest_neighbour_cycle(P: np.ndarray) -> bool:
    """True if every off-diagonal transition moves to a cyclic neighbour ``i +- 1 mod n``."""
    n = P.shape[0]
    idx = np.arange(n)
    allowed = np.zeros((n, n), dtype=bool)
    allowed[idx, idx] = True
    allowed[idx, (idx + 1) % n] = True
    allowed[idx, (idx - 1) % n] = True
    return not np.any((P > 0) & ~allowed)


def _t_hit_arcs(chain: MarkovChain, alpha: float) -> HittingReport:
    """Exact ``t_H(alpha)`` for walks that only move to cyclic neighbours.

    From ``x`` outside ``A`` the walk cannot leave the gap of ``A``'s
    complement containing ``x`` without entering ``A``, so ``tau_A`` is the
    exit time of that gap. Exit times grow with the gap, so the maximum is
    over complements of the longest arcs ``G`` with ``pi(G^c) >= alpha``.
    """
    n = chain.n
    pi = chain.pi
    target = alpha - 1e-12
    best = None
    examined = 0
    for start in range(n):
        gap = []
        mass_out = 1.0
        for length in range(1, n):
            s = (start + length - 1) % n
            if mass_out - pi[s] < target:
                break
            gap.append(s)
            mass_out -= pi[s]
        if not gap:
            continue
        mask = np.ones(n, dtype=bool)
        mask[gap] = False
        h = _solve_hitting(chain.P, mask)
        examined += 1
        x = int(np.argmax(h))
        subset = _indices(mask)
        if _better(h[x], subset, x, best):
            best = (float(h[x]), subset, x)
    if best is None:
        # every singleton complement is too light: only A = whole space qualifies
        return HittingReport(0.0, 0, tuple(range(n)), alpha, 1, _alpha_warning(alpha), "arc")
    return HittingReport(best[0], best[2], best[1], alpha, examined, _alpha_warning(alpha), "arc")


def t_hit_alpha(
    chain: MarkovChain,
    alpha: float = 0.25,
    *,
    method: str = "auto",
    cutoff: int = ENUMERATION_CUTOFF,
) -> HittingReport:
    """``t_H(alpha) = max over x and sets with pi(A) >= alpha of E_x[tau_A]``.

    ``method="enumerate"`` walks all inclusion-minimal qualifying sets (enough,
    since enlarging a set only shortens hitting times) and needs
    ``n <= cutoff``. ``method="arc"`` is exact for walks on a cycle or path
    that only step to neighbours. ``"auto"`` picks enumeration when allowed,
    otherwise the arc method when applicable, otherwise raises.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    n = chain.n
    if method == "auto":
        if n <= cutoff:
            method = "enumerate"
        elif nearest_neighbour_cycle(chain.P):
            method = "arc"
        else:
            raise ScaleError(
                f"n={n} exceeds the enumeration cutoff {cutoff}; use mc_sim.sample_hitting for estimates"
            )
    if method == "arc":
        if not nearest_neighbour_cycle(chain.P):
            raise ValueError("arc method needs a walk that only moves to cyclic neighbours")
        return _t_hit_arcs(chain, alpha)
    if method != "enumerate":
        raise ValueError(f"unknown method {method!r}")
    if n > cutoff:
        raise ScaleError(
            f"n={n} exceeds the enumeration cutoff {cutoff}; use mc_sim.sample_hitting for estimates"
        )
    best = None
    examined = 0
    for subset in minimal_sets(chain.pi, alpha):
        mask = np.zeros(n, dtype=bool)
        mask[list(subset)] = True
        h = _solve_hitting(chain.P, mask)
        examined += 1
        x = int(np.argmax(h))
        if _better(h[x], subset, x, best):
            best = (float(h[x]), subset, x)
    return HittingReport(best[0], best[2], best[1], alpha, examined, _alpha_warning(alpha), "enumerate")


def t_prod(chain: MarkovChain, *, cutoff: int = PROD_CUTOFF) -> HittingReport:
    """``max over x and nonempty A of pi(A) E_x[tau_A]`` by full enumeration."""
    n = chain.n
    if n > cutoff:
        raise ScaleError(f"n={n} exceeds the t_prod enumeration cutoff {cutoff}")
    pi = chain.pi
    best = None
    best_hit = 0.0
    examined = 0
    for m in _all_masks(n):
        h = _solve_hitting(chain.P, m)
        examined += 1
        mass = float(pi[m].sum())
        x = int(np.argmax(h))
        subset = _indices(m)
        if _better(mass * h[x], subset, x, best):
            best = (mass * float(h[x]), subset, x)
            best_hit = float(h[x])
    return HittingReport(best[0], best[2], best[1], None, examined, None, "enumerate", hitting_time=best_hit)


def set_bound_check(chain: MarkovChain, t_l: int, *, lazy_times: bool = False, tol: float = 1e-9) -> Check:
    """Every set ``A`` and start ``z``: ``E_z[tau_A] <= 16 t_L / (3 pi(A))``.

    With ``lazy_times=True`` the hitting times of the lazy walk (twice the
    ordinary ones) are tested, which is the stronger statement.
    """
    n = chain.n
    if n > PROD_CUTOFF:
        raise ScaleError(f"set bound check enumerates all sets; n={n} exceeds {PROD_CUTOFF}")
    pi = chain.pi
    factor = 2.0 if lazy_times else 1.0

    def instances():
        for m in _all_masks(n):
            h = factor * _solve_hitting(chain.P, m)
            z = int(np.argmax(h))
            yield h[z], 16.0 * t_l / (3.0 * float(pi[m].sum())), f"A={_indices(m)},z={z}"

    name = "lazy E_z[tau_A]<=16t_L/(3pi(A))" if lazy_times else "E_z[tau_A]<=16t_L/(3pi(A))"
    return worst_of(name, instances(), tol)


def max_pairwise_hitting(chain: MarkovChain) -> float:
    """``max_{x,y} E_x[tau_y]``."""
    return max(float(expected_hitting(chain, [y]).max()) for y in range(chain.n))


__all__ = [
    "SubsetMask",
    "HittingReport",
    "expected_hitting",
    "expected_return",
    "delayed_hitting",
    "kac_sum",
    "kac_check",
    "minimal_sets",
    "t_hit_alpha",
    "t_prod",
    "set_bound_check",
    "max_pairwise_hitting",
    "nearest_neighbour_cycle",
]
