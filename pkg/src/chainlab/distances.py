"""Distance-to-stationarity profiles, mixing thresholds and comparison checks.

Every profile is computed exactly from dense powers of ``P`` (or from the
resolvent, for geometric times). Index ``t`` of ``MixingProfile.values`` is
time ``t``. For the geometric and Cesaro profiles the random time has mean
``t >= 1``; at ``t = 0`` both use the deterministic time 0, i.e. ``d(0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

from .chain_core import MarkovChain, TimePmf, check_tail, lazy, point_mass
from .checks import Check, VerificationReport, skipped, worst_of
from .errors import HoldingProbabilityError, NumericalError

EPSILON = 0.25
SEP_THRESHOLD = 0.75

MONOTONE_TOL = 1e-10

KINDS = ("d", "dbar", "sep", "ave", "geom", "ces", "N", "sN")


@dataclass
class MixingProfile:
    """Distance values for ``t = 0 .. horizon`` of one notion of mixing."""

    kind: str
    values: np.ndarray
    horizon: int
    converged: bool = False
    threshold: Optional[float] = None
    # certified upper error added for truncated random-time laws
    error: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, t: int) -> float:
        return float(self.values[t])


@dataclass(frozen=True)
class ThresholdResult:
    time: Optional[int]
    epsilon: float
    attained: bool

    def __int__(self) -> int:
        if not self.attained:
            raise ValueError("threshold not attained within horizon")
        return int(self.time)


def default_horizon(n: int) -> int:
    return 64 * n * n


# -- kernel -> distance reductions -------------------------------------------


def tv_to_stationary(K: np.ndarray, pi: np.ndarray) -> float:
    """``max_x ||K(x, .) - pi||``."""
    return 0.5 * float(np.abs(K - pi[None, :]).sum(axis=1).max())


def tv_pairwise(K: np.ndarray) -> float:
    """``max_{x,y} ||K(x, .) - K(y, .)||``."""
    n = K.shape[0]
    if n <= 96:
        return 0.5 * float(np.abs(K[:, None, :] - K[None, :, :]).sum(axis=2).max())
    return max(0.5 * float(np.abs(K[x] - K).sum(axis=1).max()) for x in range(n))


def separation(K: np.ndarray, pi: np.ndarray) -> float:
    """``max_{x,y} [1 - K(x, y) / pi(y)]``."""
    return float((1.0 - K / pi[None, :]).max())


def _powers(P: np.ndarray, horizon: int) -> Iterator[tuple[int, np.ndarray]]:
    Pt = np.eye(P.shape[0])
    yield 0, Pt
    for t in range(1, horizon + 1):
        Pt = Pt @ P
        yield t, Pt


def _finish(kind: str, values: list, horizon: int, stop_below: Optional[float], error=None) -> MixingProfile:
    vals = np.clip(np.array(values, dtype=float), 0.0, None)
    converged = stop_below is not None and bool(vals.size) and vals.min() <= stop_below
    return MixingProfile(kind, vals, len(vals) - 1, converged, stop_below, error)


def _scan(kind: str, horizon: int, stop_below: Optional[float], step: Callable[[int], float]) -> MixingProfile:
    values = []
    for t in range(horizon + 1):
        v = step(t)
        values.append(v)
        if stop_below is not None and v <= stop_below:
            break
    return _finish(kind, values, horizon, stop_below)


def _power_profile(chain, kind, reduce, horizon, stop_below) -> MixingProfile:
    horizon = default_horizon(chain.n) if horizon is None else horizon
    values = []
    for _, Pt in _powers(chain.P, horizon):
        v = reduce(Pt)
        values.append(v)
        if stop_below is not None and v <= stop_below:
            break
    return _finish(kind, values, horizon, stop_below)


def profile_d(chain: MarkovChain, horizon: Optional[int] = None, stop_below: Optional[float] = None) -> MixingProfile:
    """``d(t) = max_x ||P^t(x, .) - pi||``."""
    pi = chain.pi
    return _power_profile(chain, "d", lambda K: tv_to_stationary(K, pi), horizon, stop_below)


def profile_dbar(chain: MarkovChain, horizon: Optional[int] = None, stop_below: Optional[float] = None) -> MixingProfile:
    """``dbar(t) = max_{x,y} ||P^t(x, .) - P^t(y, .)||``."""
    return _power_profile(chain, "dbar", tv_pairwise, horizon, stop_below)


def profile_sep(chain: MarkovChain, horizon: Optional[int] = None, stop_below: Optional[float] = None) -> MixingProfile:
    """Separation distance ``s(t)``."""
    pi = chain.pi
    return _power_profile(chain, "sep", lambda K: separation(K, pi), horizon, stop_below)


def profile_ave(chain: MarkovChain, horizon: Optional[int] = None, stop_below: Optional[float] = None) -> MixingProfile:
    """Two-step averaged distance ``max_x ||(P^t + P^{t+1})(x, .)/2 - pi||``."""
    horizon = default_horizon(chain.n) if horizon is None else horizon
    pi = chain.pi
    Pt = np.eye(chain.n)
    values = []
    for _ in range(horizon + 1):
        Pn = Pt @ chain.P
        v = tv_to_stationary(0.5 * (Pt + Pn), pi)
        values.append(v)
        if stop_below is not None and v <= stop_below:
            break
        Pt = Pn
    return _finish("ave", values, horizon, stop_below)


# -- random-time laws ---------------------------------------------------------


def geometric_law(chain: MarkovChain, t: float) -> np.ndarray:
    """Law of ``X_Z`` with ``Z`` geometric on ``{1, 2, ...}`` of mean ``t``.

    Closed form ``(1/t) P (I - (1 - 1/t) P)^{-1}``, one factorisation with
    ``n`` right-hand sides.
    """
    if t < 1:
        raise ValueError("geometric time needs mean t >= 1")
    n = chain.n
    q = 1.0 - 1.0 / t
    M = np.eye(n) - q * chain.P
    try:
        # P commutes with its resolvent, so solve M X = P / t
        G = np.linalg.solve(M, chain.P / t)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"resolvent singular at t={t}: {exc}") from exc
    if not np.all(np.isfinite(G)):
        raise NumericalError(f"resolvent produced non-finite values at t={t}")
    return G


def geometric_series(chain: MarkovChain, t: float, terms: int) -> tuple[np.ndarray, float]:
    """Truncated series ``(1/t) sum_{k=1}^{K} (1 - 1/t)^{k-1} P^k`` and its tail mass."""
    q = 1.0 - 1.0 / t
    acc = np.zeros((chain.n, chain.n))
    Pk = np.eye(chain.n)
    w = 1.0 / t
    for _ in range(terms):
        Pk = Pk @ chain.P
        acc += w * Pk
        w *= q
    return acc, q ** terms


def cesaro_law(chain: MarkovChain, t: int) -> np.ndarray:
    """Law of ``X_U`` with ``U`` uniform on ``{1, ..., t}``."""
    if t < 1:
        raise ValueError("Cesaro time needs t >= 1")
    acc = np.zeros((chain.n, chain.n))
    Pk = np.eye(chain.n)
    for _ in range(t):
        Pk = Pk @ chain.P
        acc += Pk
    return acc / t


def randomized_time_law(chain: MarkovChain, pmf: TimePmf, budget: float = 1e-9) -> tuple[np.ndarray, float]:
    """Law of ``X_N`` for ``N ~ pmf``: ``sum_k pmf(k) P^k`` plus its certified error.

    The returned kernel is the truncated sum; every row differs from the true
    law by at most ``pmf.tail`` in total variation.
    """
    check_tail(pmf, budget)
    Pk = np.linalg.matrix_power(chain.P, pmf.offset)
    acc = pmf.masses[0] * Pk
    for m in pmf.masses[1:]:
        Pk = Pk @ chain.P
        acc = acc + m * Pk
    return acc, float(pmf.tail)


def separation_of_doubled(chain: MarkovChain, pmf: TimePmf, budget: float = 1e-9) -> tuple[float, float]:
    """``s_N`` for ``V = N1 + N2``: returns ``(upper, lower)`` bounds on it.

    Truncation only removes mass, so the truncated separation is an upper
    bound; the lower bound subtracts ``tail / min(pi)``.
    """
    V = pmf.doubled()
    check_tail(V, 2 * budget)
    law, tail = randomized_time_law(chain, V, budget=2 * budget)
    upper = separation(law, chain.pi)
    lower = upper - tail / chain.pi.min()
    return upper, lower


def geometric_pmf_family(tail: float = 1e-12) -> Callable[[int], TimePmf]:
    return lambda t: TimePmf.geometric(t, tail)


def profile_geom(chain: MarkovChain, horizon: Optional[int] = None, stop_below: Optional[float] = None) -> MixingProfile:
    """``d_G(t)``, non-increasing in ``t`` for every chain."""
    horizon = default_horizon(chain.n) if horizon is None else horizon
    pi = chain.pi
    d0 = tv_to_stationary(np.eye(chain.n), pi)
    return _scan("geom", horizon, stop_below,
                 lambda t: d0 if t == 0 else tv_to_stationary(geometric_law(chain, t), pi))


def profile_ces(chain: MarkovChain, horizon: Optional[int] = None, stop_below: Optional[float] = None) -> MixingProfile:
    """Cesaro distance ``max_x ||P_x(X_U = .) - pi||`` with ``U`` uniform on ``{1..t}``."""
    horizon = default_horizon(chain.n) if horizon is None else horizon
    pi = chain.pi
    values = [tv_to_stationary(np.eye(chain.n), pi)]
    if stop_below is None or values[0] > stop_below:
        acc = np.zeros((chain.n, chain.n))
        Pk = np.eye(chain.n)
        for t in range(1, horizon + 1):
            Pk = Pk @ chain.P
            acc += Pk
            v = tv_to_stationary(acc / t, pi)
            values.append(v)
            if stop_below is not None and v <= stop_below:
                break
    return _finish("ces", values, horizon, stop_below)


def profile_randomized(
    chain: MarkovChain,
    family: Callable[[int], TimePmf],
    horizon: int,
    stop_below: Optional[float] = None,
    budget: float = 1e-9,
) -> MixingProfile:
    """``d_N(t)`` for ``t = 1 .. horizon`` (index 0 holds ``d(0)``), tail added as certified error."""
    pi = chain.pi
    values = [tv_to_stationary(np.eye(chain.n), pi)]
    errors = [0.0]
    for t in range(1, horizon + 1):
        law, err = randomized_time_law(chain, family(t), budget)
        v = tv_to_stationary(law, pi) + err
        values.append(v)
        errors.append(err)
        if stop_below is not None and v <= stop_below:
            break
    return _finish("N", values, horizon, stop_below, error=np.array(errors))


def profile_sep_doubled(
    chain: MarkovChain,
    family: Callable[[int], TimePmf],
    horizon: int,
    stop_below: Optional[float] = None,
    budget: float = 1e-9,
) -> MixingProfile:
    """``s_N(t)`` (upper bound under truncation); index 0 is ``s(0) = 1 - min(pi)``-type value."""
    pi = chain.pi
    values = [separation(np.eye(chain.n), pi)]
    for t in range(1, horizon + 1):
        upper, _ = separation_of_doubled(chain, family(t), budget)
        values.append(upper)
        if stop_below is not None and upper <= stop_below:
            break
    return _finish("sN", values, horizon, stop_below)


def profile_sep_geometric(chain: MarkovChain, horizon: int, stop_below: Optional[float] = None) -> MixingProfile:
    """Exact ``s_G(t)``: the doubled geometric law is ``G_t @ G_t``."""
    pi = chain.pi
    s0 = separation(np.eye(chain.n), pi)

    def step(t):
        if t == 0:
            return s0
        G = geometric_law(chain, t)
        return separation(G @ G, pi)

    return _scan("sN", horizon, stop_below, step)


# -- thresholds ---------------------------------------------------------------


def threshold(profile: Union[MixingProfile, Sequence[float]], epsilon: float) -> ThresholdResult:
    """First time the profile is ``<= epsilon``; ``attained=False`` if it never is."""
    values = profile.values if isinstance(profile, MixingProfile) else np.asarray(profile, dtype=float)
    hits = np.flatnonzero(values <= epsilon)
    if hits.size == 0:
        return ThresholdResult(None, epsilon, False)
    return ThresholdResult(int(hits[0]), epsilon, True)


def t_mix(chain: MarkovChain, epsilon: float = EPSILON, horizon: Optional[int] = None) -> ThresholdResult:
    return threshold(profile_d(chain, horizon, stop_below=epsilon), epsilon)


def t_lazy(chain: MarkovChain, epsilon: float = EPSILON, horizon: Optional[int] = None) -> ThresholdResult:
    """Mixing time of ``(P + I)/2``."""
    return t_mix(lazy(chain), epsilon, horizon)


def t_ave(chain: MarkovChain, epsilon: float = EPSILON, horizon: Optional[int] = None) -> ThresholdResult:
    return threshold(profile_ave(chain, horizon, stop_below=epsilon), epsilon)


def t_sep(chain: MarkovChain, level: float = SEP_THRESHOLD, horizon: Optional[int] = None) -> ThresholdResult:
    return threshold(profile_sep(chain, horizon, stop_below=level), level)


def t_geom(chain: MarkovChain, epsilon: float = EPSILON, horizon: Optional[int] = None) -> ThresholdResult:
    return threshold(profile_geom(chain, horizon, stop_below=epsilon), epsilon)


def t_ces(chain: MarkovChain, epsilon: float = EPSILON, horizon: Optional[int] = None) -> ThresholdResult:
    return threshold(profile_ces(chain, horizon, stop_below=epsilon), epsilon)


def t_randomized(chain: MarkovChain, family: Callable[[int], TimePmf], epsilon: float = EPSILON,
                 horizon: Optional[int] = None) -> ThresholdResult:
    horizon = default_horizon(chain.n) if horizon is None else horizon
    return threshold(profile_randomized(chain, family, horizon, stop_below=epsilon), epsilon)


def t_sep_geometric(chain: MarkovChain, level: float = SEP_THRESHOLD, horizon: Optional[int] = None) -> ThresholdResult:
    """``t_{s,N}`` for geometric ``N``."""
    horizon = default_horizon(chain.n) if horizon is None else horizon
    return threshold(profile_sep_geometric(chain, horizon, stop_below=level), level)


# -- verification -------------------------------------------------------------


def verify_distance_lemmas(chain: MarkovChain, horizon: int = 64, tol: float = 1e-9) -> VerificationReport:
    """Instantiate the distance comparison inequalities at every ``t <= horizon``.

    Checks that need reversibility are reported as skipped on other chains.
    """
    rep = VerificationReport(chain.name or repr(chain))
    pi = chain.pi
    rev = chain.reversible
    n = chain.n

    powers = [Pt.copy() for _, Pt in _powers(chain.P, horizon + 1)]
    d = np.array([tv_to_stationary(K, pi) for K in powers])
    dbar = np.array([tv_pairwise(K) for K in powers])
    s = np.array([separation(K, pi) for K in powers])
    dave = np.array([tv_to_stationary(0.5 * (powers[t] + powers[t + 1]), pi) for t in range(horizon + 1)])
    T = range(horizon + 1)

    rep.add(worst_of("d<=dbar", ((d[t], dbar[t], f"t={t}") for t in T), tol))
    rep.add(worst_of("dbar<=2d", ((dbar[t], 2 * d[t], f"t={t}") for t in T), tol))
    rep.add(worst_of("d_ave<=d", ((dave[t], d[t], f"t={t}") for t in T), tol))
    if rev:
        rep.add(worst_of("s(2t)<=1-(1-dbar(t))^2",
                         ((s[2 * t], 1 - (1 - dbar[t]) ** 2, f"t={t}") for t in range(horizon // 2 + 1)), tol))
    else:
        rep.add(skipped("s(2t)<=1-(1-dbar(t))^2", "chain not reversible"))

    tm = t_mix(chain)
    if not tm.attained:
        rep.add(skipped("t_sep<=2t_mix", "t_mix not attained within horizon"))
        rep.add(skipped("t_ave<=t_mix", "t_mix not attained within horizon"))
    else:
        if rev:
            ts = t_sep(chain)
            ts_val = ts.time if ts.attained else math.inf
            rep.add(worst_of("t_sep<=2t_mix", [(ts_val, 2 * tm.time, f"t_mix={tm.time}")], tol))
        else:
            rep.add(skipped("t_sep<=2t_mix", "chain not reversible"))
        ta = t_ave(chain, horizon=tm.time)
        rep.add(worst_of("t_ave<=t_mix", [(ta.time, tm.time, f"t_mix={tm.time}")], tol))

    G = {t: geometric_law(chain, t) for t in range(1, horizon + 1)}
    dG = {t: tv_to_stationary(K, pi) for t, K in G.items()}
    dbarG = {t: tv_pairwise(K) for t, K in G.items()}
    rep.add(worst_of("d_G monotone", ((dG[t + 1], dG[t], f"t={t}") for t in range(1, horizon)), MONOTONE_TOL))

    # independent extra time never increases distance to pi
    extra = {"+1": chain.P, "+3": powers[3], "+Z_2": G[min(2, horizon)]}
    inst = []
    for t in (1, 2, 4, 8, 16):
        if t > horizon:
            continue
        base = G[t]
        for label, K in extra.items():
            combined = base @ K
            lhs = 0.5 * np.abs(combined - pi).sum(axis=1)
            rhs = 0.5 * np.abs(base - pi).sum(axis=1)
            x = int(np.argmax(lhs - rhs))
            inst.append((lhs[x], rhs[x], f"T=Z_{t},T'{label},x={x}"))
        for label, K in extra.items():
            combined = powers[t] @ K
            lhs = 0.5 * np.abs(combined - pi).sum(axis=1)
            rhs = 0.5 * np.abs(powers[t] - pi).sum(axis=1)
            x = int(np.argmax(lhs - rhs))
            inst.append((lhs[x], rhs[x], f"T={t},T'{label},x={x}"))
    rep.add(worst_of("extra time monotone", inst, tol))

    # shift bound for geometric Y and independent Z, at chain level and law level
    inst = []
    for t in (2, 4, 8, 16):
        if t > horizon:
            continue
        Y = TimePmf.geometric(t, 1e-14)
        for Z in (TimePmf.point(1), TimePmf.point(3), TimePmf.uniform(4)):
            YZ = Y.convolve(Z)
            law_gap = _pmf_tv(Y, YZ)
            bound = Z.mean() / t
            chain_gap = max(
                0.5 * float(np.abs(a - b).sum())
                for a, b in zip(randomized_time_law(chain, Y, 1e-12)[0], randomized_time_law(chain, YZ, 1e-12)[0])
            )
            inst.append((law_gap, bound, f"Y=Z_{t},E[Z]={Z.mean():g}"))
            inst.append((chain_gap - 2e-12, law_gap, f"chain-level,Y=Z_{t},E[Z]={Z.mean():g}"))
    rep.add(worst_of("shift bound c*E[Z]", inst, tol))

    rep.add(worst_of("d_G<=dbar_G<=2d_G",
                     [(dG[t], dbarG[t], f"lower,t={t}") for t in G] + [(dbarG[t], 2 * dG[t], f"upper,t={t}") for t in G],
                     tol))
    if rev:
        inst = []
        for t in G:
            sG = separation(G[t] @ G[t], pi)
            inst.append((sG, 1 - (1 - dbarG[t]) ** 2, f"geometric,t={t}"))
        for t in range(1, min(horizon, 32) + 1):
            Q = cesaro_law(chain, t)
            inst.append((separation(Q @ Q, pi), 1 - (1 - tv_pairwise(Q)) ** 2, f"uniform,t={t}"))
        rep.add(worst_of("s_N<=1-(1-dbar_N)^2", inst, tol))
    else:
        rep.add(skipped("s_N<=1-(1-dbar_N)^2", "chain not reversible"))

    inst = []
    for t in G:
        beta = dbarG[t]
        k = 1
        while (2 ** k) * t <= horizon:
            inst.append((dbarG[(2 ** k) * t], ((1 + beta) / 2) ** k * beta, f"t={t},k={k}"))
            k += 1
    rep.add(worst_of("dbar_G submultiplicative", inst, tol))

    inst = []
    for t in G:
        if dG[t] >= 0.5:
            continue
        beta = 2 * dG[t]
        k = 1
        while (2 ** k) * t <= horizon:
            inst.append((dG[(2 ** k) * t], 2 * ((1 + beta) / 2) ** k * dG[t], f"t={t},k={k}"))
            k += 1
    rep.add(worst_of("d_G doubling", inst, tol))
    return rep


def check_geometric_monotone(chain: MarkovChain, horizon: int = 128, tol: float = MONOTONE_TOL) -> Check:
    """``d_G(t+1) <= d_G(t) + tol`` for ``1 <= t < horizon``; no aperiodicity needed."""
    vals = profile_geom(chain, horizon).values
    return worst_of("d_G monotone", ((vals[t + 1], vals[t], f"t={t}") for t in range(1, horizon)), tol)


def _pmf_tv(a: TimePmf, b: TimePmf) -> float:
    lo = min(a.offset, b.offset)
    hi = max(a.last, b.last)
    va = np.zeros(hi - lo + 1)
    vb = np.zeros(hi - lo + 1)
    va[a.offset - lo: a.last - lo + 1] = a.masses
    vb[b.offset - lo: b.last - lo + 1] = b.masses
    return 0.5 * float(np.abs(va - vb).sum()) + 0.5 * (a.tail + b.tail)


def consecutive_tv_bound(t: int, delta: float) -> float:
    """``exp(-9 t d(1-d)/16) + 12 sqrt(2) / sqrt(t d (1-d))`` with ``d = delta``."""
    v = t * delta * (1 - delta)
    return math.exp(-9 * v / 16) + 12 * math.sqrt(2) / math.sqrt(v)


def verify_consecutive_tv_bound(chain: MarkovChain, delta: float, horizon: int = 64, tol: float = 1e-9) -> Check:
    """Check ``||P^t(x,.) - P^{t+1}(x,.)||`` against the holding-probability bound.

    Requires ``P(x, x) >= delta`` for all ``x`` and ``0 < delta < 1``.
    """
    if not 0.0 < delta < 1.0:
        raise HoldingProbabilityError(f"delta must lie in (0, 1), got {delta!r}")
    if np.diag(chain.P).min() < delta - 1e-12:
        raise HoldingProbabilityError(f"some holding probability is below delta={delta!r}")
    inst = []
    for t, Pt in _powers(chain.P, horizon):
        if t == 0:
            continue
        gap = 0.5 * np.abs(Pt - Pt @ chain.P).sum(axis=1)
        x = int(np.argmax(gap))
        inst.append((gap[x], consecutive_tv_bound(t, delta), f"t={t},x={x}"))
    return worst_of("consecutive-step TV bound", inst, tol)
