"""Stationary stopping rules: the quota-filling rule, exit frequencies and t_stop.

The filling rule gives every state ``x`` a quota ``pi(x)``. At each time the
mass sitting at ``x`` that has not yet stopped, ``theta_x(t)``, is stopped in
full if the quota still has room for it, otherwise only the remaining room
is stopped. The stopped mass ``sigma_x(t)`` accumulates into ``Sigma_x(t)``
and the rest moves one step: ``theta(t+1) = (theta(t) - sigma(t)) P``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chain_core import MarkovChain, as_distribution, lazy, point_mass
from .errors import ConvergenceError, NumericalError

QUOTA_TOL = 1e-12
MASS_TOL = 1e-12


@dataclass
class FillingRuleTranscript:
    """Full record of one run of the filling rule.

    Row ``t`` of ``theta``, ``sigma`` and ``Sigma`` holds the vectors at time
    ``t``. ``fill_times[x]`` is the first time quota ``x`` is full (``-1``
    if it never filled before truncation).
    """

    theta: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    Sigma: np.ndarray = field(repr=False)
    fill_times: np.ndarray
    halting_state: int
    horizon: int
    unstopped: float
    pi: np.ndarray = field(repr=False)
    unfilled_flag: bool = False

    @property
    def stop_probs(self) -> np.ndarray:
        """``sigma_x(t) / theta_x(t)``, zero where ``theta`` vanishes."""
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.theta > 0, self.sigma / np.where(self.theta > 0, self.theta, 1.0), 0.0)
        return np.clip(r, 0.0, 1.0)

    @property
    def stopped_distribution(self) -> np.ndarray:
        return self.Sigma[-1].copy()

    @property
    def unstopped_series(self) -> np.ndarray:
        return 1.0 - self.Sigma.sum(axis=1)

    @property
    def truncated_mean(self) -> float:
        """``sum_t t P(T = t)`` over the recorded horizon (a lower bound on ``E[T]``)."""
        t = np.arange(self.sigma.shape[0])
        return float(t @ self.sigma.sum(axis=1))

    def decay_rate(self) -> float:
        """Largest one-step ratio of unstopped mass over the last quarter of the run."""
        m = 1.0 - self.Sigma.sum(axis=1)
        m = np.maximum(m, 0.0)
        start = max(1, (3 * len(m)) // 4)
        prev, cur = m[start - 1:-1], m[start:]
        ok = prev > 0
        if not ok.any():
            return 0.0
        return float(min(1.0, np.max(cur[ok] / prev[ok])))

    def tail_bound(self, stop_upper: float = 0.0) -> float:
        """Allowance for the part of ``E[T]`` beyond the recorded horizon.

        ``E[T]`` minus :attr:`truncated_mean` is ``horizon * m + sum_{t >= horizon} P(T > t)``
        with ``m`` the final unstopped mass. The sum is charged
        ``m * (1 + max(stop_upper, 2 / (1 - r)))`` where ``r`` is the observed
        geometric decay rate of the unstopped mass.
        """
        r = self.decay_rate()
        geometric = 2.0 / (1.0 - r) if r < 1.0 else math.inf
        return self.unstopped * (self.horizon + 1 + max(stop_upper, geometric))

    def to_csv(self) -> str:
        """Long format with columns ``t, x, theta, sigma, Sigma``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "theta", "sigma", "Sigma"])
        for t in range(self.theta.shape[0]):
            for x in range(self.theta.shape[1]):
                w.writerow([t, x, repr(float(self.theta[t, x])), repr(float(self.sigma[t, x])),
                            repr(float(self.Sigma[t, x]))])
        return buf.getvalue()


def default_max_steps(n: int) -> int:
    return max(20_000, 2_000 * n * n)


def filling_rule(
    chain: MarkovChain,
    mu,
    mass_tol: float = MASS_TOL,
    max_steps: Optional[int] = None,
    min_steps: int = 0,
) -> FillingRuleTranscript:
    """Run the filling rule from ``mu`` until the unstopped mass drops below ``mass_tol``.

    ``min_steps`` keeps the record going to at least that time (used when a
    fixed window of the run is needed).

    Raises
    ------
    ConvergenceError
        The unstopped mass did not fall below ``mass_tol`` within ``max_steps``.
    """
    if not 0.0 < mass_tol < 1.0:
        raise ValueError("mass_tol must lie in (0, 1)")
    mu = as_distribution(mu, chain.n)
    pi = chain.pi
    P = chain.P
    n = chain.n
    max_steps = default_max_steps(n) if max_steps is None else max_steps

    thetas, sigmas, Sigmas = [], [], []
    Sigma = np.zeros(n)
    theta = mu.copy()
    fill = np.full(n, -1, dtype=int)
    t = 0
    while True:
        room = pi - Sigma
        overflow = theta > room + QUOTA_TOL
        # never stop more than the room left, so Sigma cannot creep above pi
        sigma = np.clip(np.minimum(theta, room), 0.0, theta)
        Sigma = Sigma + sigma
        Sigma[overflow] = pi[overflow]
        newly = (fill < 0) & (overflow | (pi - Sigma <= 1e-15))
        fill[newly] = t
        thetas.append(theta)
        sigmas.append(sigma)
        Sigmas.append(Sigma.copy())
        unstopped = max(0.0, float((theta - sigma).sum()))
        if unstopped < mass_tol and t >= min_steps:
            break
        if t >= max_steps:
            raise ConvergenceError(
                f"filling rule left unstopped mass {unstopped:.3e} after {t} steps (target {mass_tol:g})"
            )
        theta = (theta - sigma) @ P
        t += 1

    unfilled = np.flatnonzero(fill < 0)
    if unfilled.size:
        deficit = pi[unfilled] - Sigma[unfilled]
        z = int(unfilled[int(np.argmax(deficit))])
    else:
        z = int(np.flatnonzero(fill == fill.max())[0])
    return FillingRuleTranscript(
        theta=np.array(thetas),
        sigma=np.array(sigmas),
        Sigma=np.array(Sigmas),
        fill_times=fill,
        halting_state=z,
        horizon=t,
        unstopped=unstopped,
        pi=pi.copy(),
        unfilled_flag=unfilled.size > 1,
    )


def halting_state(transcript: FillingRuleTranscript) -> int:
    """State whose quota fills last (smallest index on ties)."""
    return transcript.halting_state


@dataclass(frozen=True)
class ExitFrequencies:
    """Expected visit counts before an optimal stop, pinned so that ``min(nu) = 0``."""

    nu: np.ndarray
    pinned_state: int

    @property
    def mean(self) -> float:
        return float(self.nu.sum())


def _exit_system(chain: MarkovChain) -> np.ndarray:
    n = chain.n
    M = (np.eye(n) - chain.P).T.copy()
    # every row of (I - P)^T sums the same constraint; swap the last for nu_0 = 0
    M[-1, :] = 0.0
    M[-1, 0] = 1.0
    return M


def _pin(raw: np.ndarray, pi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shift each column by the multiple of ``pi`` that makes its minimum zero."""
    ratios = raw / pi[:, None]
    pinned = np.argmin(ratios, axis=0)
    shift = ratios[pinned, np.arange(raw.shape[1])]
    nu = raw - pi[:, None] * shift[None, :]
    nu[pinned, np.arange(raw.shape[1])] = 0.0
    return np.clip(nu, 0.0, None), pinned


def _exit_columns(chain: MarkovChain, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    M = _exit_system(chain)
    b = rhs.copy()
    b[-1, :] = 0.0
    try:
        raw = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"exit-frequency system singular: {exc}") from exc
    resid = np.abs((np.eye(chain.n) - chain.P).T @ raw - rhs).max()
    if not np.isfinite(resid) or resid > 1e-8 * max(1.0, np.abs(raw).max()):
        raise NumericalError(f"exit-frequency residual {resid:.2e}: system rank is below n - 1")
    return _pin(raw, chain.pi)


def exit_frequencies(chain: MarkovChain, mu, rho=None) -> ExitFrequencies:
    """Solve ``nu + rho = mu + nu P`` and pick the solution with minimum zero.

    Solutions differ by multiples of ``pi``; the pinned one is the vector of
    exit frequencies of a mean-optimal rule from ``mu`` to ``rho`` and its sum
    is that minimal mean. ``rho`` defaults to ``pi``.
    """
    mu = as_distribution(mu, chain.n)
    rho = chain.pi if rho is None else as_distribution(rho, chain.n)
    nu, pinned = _exit_columns(chain, (mu - rho)[:, None])
    return ExitFrequencies(nu[:, 0], int(pinned[0]))


def stop_means(chain: MarkovChain) -> np.ndarray:
    """Minimal mean stationary stopping time from every ``delta_x``."""
    rhs = np.eye(chain.n) - chain.pi[:, None]
    nu, _ = _exit_columns(chain, rhs)
    return nu.sum(axis=0)


def t_stop(chain: MarkovChain) -> tuple[float, int]:
    """``max_x`` of the minimal mean stationary stopping time from ``x``, with the argmax."""
    means = stop_means(chain)
    x = int(np.argmax(means))
    return float(means[x]), x


def t_stop_lazy(chain: MarkovChain) -> float:
    return t_stop(lazy(chain))[0]


@dataclass(frozen=True)
class SeparationRule:
    """Block rule built from the separation threshold and its certificate."""

    t_sep: int
    mean: float
    certificate: bool
    t_stop: float

    @property
    def holds(self) -> bool:
        return self.certificate and self.t_stop <= self.mean + 1e-9


def separation_rule_mean(chain: MarkovChain, horizon: Optional[int] = None) -> SeparationRule:
    """Certify ``P^{t_sep}(x, y) >= pi(y) / 4`` and return the block-rule mean ``4 t_sep``.

    Raises
    ------
    ConvergenceError
        ``t_sep`` is not attained within the horizon.
    """
    from .distances import t_sep

    ts = t_sep(chain, horizon=horizon)
    if not ts.attained:
        raise ConvergenceError("separation threshold not attained within the horizon")
    K = chain.power(ts.time)
    cert = bool(np.all(K >= 0.25 * chain.pi[None, :] - 1e-12))
    return SeparationRule(ts.time, 4.0 * ts.time, cert, t_stop(chain)[0])


@dataclass(frozen=True)
class AveragingResult:
    """Best ``u`` in ``[L, L+U]`` for the averaged stopped-law statistic."""

    u: int
    value: float
    L: int
    U: int
    asserted: bool  # False on non-reversible chains: the bound is reported only

    @property
    def bound(self) -> float:
        return 1.0 + self.L / self.U

    @property
    def holds(self) -> bool:
        return self.value <= self.bound + 1e-9


def stopped_by(chain: MarkovChain, transcript: FillingRuleTranscript, L: int) -> np.ndarray:
    """``P(X_L = y, T <= L)`` from the transcript: ``a(s) = a(s-1) P + sigma(s)``."""
    a = np.zeros(chain.n)
    rows = transcript.sigma.shape[0]
    for s in range(L + 1):
        if s > 0:
            a = a @ chain.P
        if s < rows:
            a = a + transcript.sigma[s]
    return a


def averaging_statistic(chain: MarkovChain, x: int, L: int, U: int) -> AveragingResult:
    """Minimise ``sum_y f_y(u)^2 / pi(y)`` over ``L <= u <= L + U``.

    ``f_y(u)`` averages ``P_x(X_u = y, T <= L)`` and ``P_x(X_{u+1} = y, T <= L)``
    where ``T`` is the filling rule from ``x``.
    """
    if L < 1 or U < 1:
        raise ValueError("L and U must be positive")
    tr = filling_rule(chain, point_mass(chain.n, x))
    pi = chain.pi
    b = stopped_by(chain, tr, L)
    nxt = b @ chain.P
    best_u, best_v = L, math.inf
    for u in range(L, L + U + 1):
        f = 0.5 * (b + nxt)
        v = float((f * f / pi).sum())
        if v < best_v:
            best_u, best_v = u, v
        b, nxt = nxt, nxt @ chain.P
    return AveragingResult(best_u, best_v, L, U, chain.reversible)


def averaging_check(chain: MarkovChain, L_factor: int = 20, U_factor: int = 10) -> list[AveragingResult]:
    """Statistic from every start with ``L = ceil(L_factor * t_stop)`` and ``U = U_factor * L``."""
    ts, _ = t_stop(chain)
    L = max(1, math.ceil(L_factor * ts - 1e-9))
    return [averaging_statistic(chain, x, L, U_factor * L) for x in range(chain.n)]
