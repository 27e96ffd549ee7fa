"""Monte Carlo trajectories used to cross-check the exact computations.

Trajectories are simulated in vectorised chunks. Chunk ``i`` draws from a
Philox generator keyed by ``(seed, stream, i)``, so a run is reproduced
bit for bit from ``(seed, stream)`` no matter how chunks are scheduled;
partial results are combined in chunk order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .chain_core import MarkovChain, as_distribution
from .errors import ConvergenceError
from .stopping_rules import FillingRuleTranscript

CHUNK_CELLS = 1 << 22


@dataclass(frozen=True)
class SimConfig:
    trajectories: int = 100_000
    max_steps: int = 1_000_000
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if self.trajectories < 1:
            raise ValueError("need at least one trajectory")
        if self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")


@dataclass(frozen=True)
class EstimateWithCI:
    """Sample mean with its standard error ``std / sqrt(count)``."""

    mean: float
    se: float
    count: int

    def within(self, value: float, k: float = 3.0, floor: float = 0.0) -> bool:
        return abs(self.mean - value) <= k * self.se + floor

    @classmethod
    def from_sums(cls, total: float, total_sq: float, count: int) -> "EstimateWithCI":
        mean = total / count
        var = max(0.0, total_sq / count - mean * mean) * count / max(1, count - 1)
        return cls(mean, math.sqrt(var / count), count)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CHAINLAB_THREADS", "1")))
    except ValueError:
        return 1


def _chunks(total: int, n: int) -> list[tuple[int, int]]:
    size = max(1024, CHUNK_CELLS // max(1, n))
    return [(i, min(size, total - start)) for i, start in enumerate(range(0, total, size))]


def _rng(cfg: SimConfig, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, cfg.stream, chunk])))


def _run(cfg: SimConfig, n: int, job: Callable[[np.random.Generator, int], object]) -> list:
    plan = _chunks(cfg.trajectories, n)
    if _workers() == 1 or len(plan) == 1:
        return [job(_rng(cfg, i), size) for i, size in plan]
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        return list(pool.map(lambda item: job(_rng(cfg, item[0]), item[1]), plan))


def cumulative_kernel(P: np.ndarray) -> np.ndarray:
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    return cum


def step(cum: np.ndarray, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Next states by inverse transform: count of cumulative entries ``<= u``."""
    return (cum[states] <= u[:, None]).sum(axis=1)


def _initial(rng: np.random.Generator, mu: np.ndarray, size: int) -> np.ndarray:
    cum = np.cumsum(mu)
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(size), side="right")


def sample_hitting(chain: MarkovChain, A: Sequence[int], x: int, cfg: SimConfig) -> EstimateWithCI:
    """Sampled ``E_x[tau_A]``."""
    target = np.zeros(chain.n, dtype=bool)
    target[list(A)] = True
    if target[x]:
        return EstimateWithCI(0.0, 0.0, cfg.trajectories)
    cum = cumulative_kernel(chain.P)

    def job(rng, size):
        states = np.full(size, x)
        times = np.zeros(size, dtype=np.int64)
        active = np.arange(size)
        t = 0
        while active.size:
            if t >= cfg.max_steps:
                raise ConvergenceError(f"{active.size} trajectories did not hit within {cfg.max_steps} steps")
            t += 1
            s = step(cum, states[active], rng.random(active.size))
            states[active] = s
            hit = target[s]
            times[active[hit]] = t
            active = active[~hit]
        return int(times.sum()), int((times * times).sum())

    parts = _run(cfg, chain.n, job)
    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    return EstimateWithCI.from_sums(float(total), float(total_sq), cfg.trajectories)


@dataclass(frozen=True)
class FillingSample:
    """Sampled filling-rule runs: where they stopped and when."""

    stop_counts: np.ndarray
    mean: EstimateWithCI
    overflow: float

    @property
    def frequencies(self) -> np.ndarray:
        return self.stop_counts / self.stop_counts.sum()

    def standard_errors(self) -> np.ndarray:
        f = self.frequencies
        return np.sqrt(f * (1 - f) / self.stop_counts.sum())


def _filling_job(chain, mu, transcript, cfg, z=None):
    ratios = transcript.stop_probs
    horizon = ratios.shape[0] - 1
    cum = cumulative_kernel(chain.P)

    def job(rng, size):
        states = _initial(rng, mu, size)
        stop_t = np.full(size, -1, dtype=np.int64)
        first_z = np.full(size, -1, dtype=np.int64)
        active = np.arange(size)
        t = 0
        while active.size and t <= horizon:
            s = states[active]
            if z is not None:
                fresh = (s == z) & (first_z[active] < 0)
                first_z[active[fresh]] = t
            stop = rng.random(active.size) < ratios[t, s]
            stop_t[active[stop]] = t
            active = active[~stop]
            if active.size == 0 or t == horizon:
                break
            states[active] = step(cum, states[active], rng.random(active.size))
            t += 1
        done = stop_t >= 0
        counts = np.bincount(states[done], minlength=chain.n)
        st = stop_t[done]
        violations = 0
        if z is not None:
            violations = int(np.sum(done & (first_z >= 0) & (stop_t > first_z)))
            # unstopped runs that visited z also went past it
            violations += int(np.sum(~done & (first_z >= 0)))
        return counts, int(st.sum()), int((st * st).sum()), int((~done).sum()), violations

    return job


def sample_filling_rule(chain: MarkovChain, mu, transcript: FillingRuleTranscript, cfg: SimConfig) -> FillingSample:
    """Run the filling rule on sampled paths using the stop ratios of ``transcript``.

    At time ``t`` in state ``x`` a path stops when a fresh uniform falls below
    ``sigma_x(t) / theta_x(t)``. Paths still running at the transcript horizon
    count as overflow.
    """
    mu = as_distribution(mu, chain.n)
    parts = _run(cfg, chain.n, _filling_job(chain, mu, transcript, cfg))
    counts = np.sum([p[0] for p in parts], axis=0)
    stopped = int(counts.sum())
    total = float(sum(p[1] for p in parts))
    total_sq = float(sum(p[2] for p in parts))
    overflow = sum(p[3] for p in parts) / cfg.trajectories
    mean = EstimateWithCI.from_sums(total, total_sq, stopped) if stopped else EstimateWithCI(math.nan, math.nan, 0)
    return FillingSample(counts, mean, overflow)


def halting_check(chain: MarkovChain, transcript: FillingRuleTranscript, z: int, cfg: SimConfig, mu=None) -> int:
    """Number of sampled runs that stop strictly after their first visit to ``z``.

    ``mu`` defaults to the start law recorded in the transcript.
    """
    mu = transcript.theta[0] if mu is None else as_distribution(mu, chain.n)
    parts = _run(cfg, chain.n, _filling_job(chain, mu, transcript, cfg, z=z))
    return sum(p[4] for p in parts)


def _time_sampler(kind: str, t: int) -> Callable[[np.random.Generator, int], np.ndarray]:
    if kind == "point":
        return lambda rng, size: np.full(size, int(t), dtype=np.int64)
    if kind == "uniform":
        if t < 1:
            raise ValueError("uniform time needs t >= 1")
        return lambda rng, size: rng.integers(1, t + 1, size=size)
    if kind == "geometric":
        if t < 1:
            raise ValueError("geometric time needs t >= 1")
        if t == 1:
            return lambda rng, size: np.ones(size, dtype=np.int64)
        logq = math.log1p(-1.0 / t)

        # inverse transform: P(Z > k) = q^k
        def draw(rng, size):
            u = 1.0 - rng.random(size)
            return np.floor(np.log(u) / logq).astype(np.int64) + 1

        return draw
    raise ValueError(f"unknown time law {kind!r}; expected point, uniform or geometric")


@dataclass(frozen=True)
class RandomizedTVEstimate:
    """Empirical law of ``X_N`` from each start and its TV distance to ``pi``."""

    laws: np.ndarray
    tv: np.ndarray
    bias_allowance: float
    count: int


def sample_randomized_time_tv(chain: MarkovChain, kind: str, t: int, cfg: SimConfig) -> RandomizedTVEstimate:
    """Plug-in TV between the sampled law of ``X_N`` and ``pi`` for every start.

    ``N`` is drawn independently of the path (``kind`` is ``point``,
    ``uniform`` or ``geometric`` with parameter ``t``). The plug-in estimate is
    biased upward; ``bias_allowance = sqrt(n / trajectories)`` bounds its
    expected deviation.
    """
    draw = _time_sampler(kind, t)
    cum = cumulative_kernel(chain.P)
    n = chain.n
    laws = np.zeros((n, n))
    for x in range(n):
        sub = SimConfig(cfg.trajectories, cfg.max_steps, cfg.seed, cfg.stream * 1_000_003 + x)

        def job(rng, size):
            N = draw(rng, size)
            if N.max(initial=0) > cfg.max_steps:
                raise ConvergenceError("sampled time exceeds max_steps")
            states = np.full(size, x)
            active = np.flatnonzero(N > 0)
            k = 0
            while active.size:
                states[active] = step(cum, states[active], rng.random(active.size))
                k += 1
                active = active[N[active] > k]
            return np.bincount(states, minlength=n)

        counts = np.sum(_run(sub, n, job), axis=0)
        laws[x] = counts / cfg.trajectories
    tv = 0.5 * np.abs(laws - chain.pi[None, :]).sum(axis=1)
    return RandomizedTVEstimate(laws, tv, math.sqrt(n / cfg.trajectories), cfg.trajectories)
