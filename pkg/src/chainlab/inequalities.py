"""Run the full inequality suite on single chains and on whole corpora."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import distances as dist
from .chain_core import MarkovChain, lazy
from .checks import Check, VerificationReport, skipped, worst_of
from .hitting import kac_check, set_bound_check, t_hit_alpha
from .stopping_rules import averaging_check, t_stop

SUITE_HORIZON = 64
ANY_CHAIN_SEP = "t_sep<=2t_mix, any chain"


@dataclass
class ChainParameters:
    """Mixing and stopping parameters of one chain (``None`` when not attained)."""

    t_mix: Optional[int]
    t_lazy: Optional[int]
    t_ave: Optional[int]
    t_sep: Optional[int]
    t_geom: Optional[int]
    t_ces: Optional[int]
    t_sep_geom: Optional[int]
    t_stop: float
    t_stop_lazy: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def chain_parameters(chain: MarkovChain, horizon: Optional[int] = None) -> ChainParameters:
    def val(r):
        return r.time if r.attained else None

    return ChainParameters(
        t_mix=val(dist.t_mix(chain, horizon=horizon)),
        t_lazy=val(dist.t_lazy(chain, horizon=horizon)),
        t_ave=val(dist.t_ave(chain, horizon=horizon)),
        t_sep=val(dist.t_sep(chain, horizon=horizon)),
        t_geom=val(dist.t_geom(chain, horizon=horizon)),
        t_ces=val(dist.t_ces(chain, horizon=horizon)),
        t_sep_geom=val(dist.t_sep_geometric(chain, horizon=horizon)),
        t_stop=t_stop(chain)[0],
        t_stop_lazy=t_stop(lazy(chain))[0],
    )


def _cmp(name: str, lhs, rhs, where: str = "", tol: float = 1e-9) -> Check:
    return worst_of(name, [(float(lhs), float(rhs), where)], tol)


def parameter_checks(chain: MarkovChain, p: ChainParameters, tol: float = 1e-9) -> list[Check]:
    """Inequalities between the scalar parameters."""
    rev = chain.reversible
    out = []
    if p.t_geom is None:
        out.append(Check("t_G<=4t_stop+1", math.inf, 4 * p.t_stop + 1, -math.inf, "fail", note="t_G not attained"))
    else:
        out.append(_cmp("t_G<=4t_stop+1", p.t_geom, 4 * p.t_stop + 1, tol=tol))
    out.append(_cmp("t_stop<=t_stop_lazy/2", p.t_stop, 0.5 * p.t_stop_lazy, tol=tol))
    if p.t_sep is None:
        out.append(skipped("t_stop<=4t_sep", "t_sep not attained (bound is vacuous)"))
    else:
        out.append(_cmp("t_stop<=4t_sep", p.t_stop, 4 * p.t_sep, f"t_sep={p.t_sep}", tol))
    if p.t_sep_geom is not None:
        out.append(_cmp("t_stop<=8t_sG", p.t_stop, 8 * p.t_sep_geom, f"t_sG={p.t_sep_geom}", tol))
    if rev:
        # an unattained threshold counts as infinite
        t_ave = math.inf if p.t_ave is None else p.t_ave
        t_geom = math.inf if p.t_geom is None else p.t_geom
        out.append(_cmp("t_ave<=220t_stop", t_ave, 220 * p.t_stop, tol=tol))
        out.append(_cmp("t_stop<=16t_G", p.t_stop, 16 * t_geom, tol=tol))
    else:
        out.append(skipped("t_ave<=220t_stop", "chain not reversible"))
        out.append(skipped("t_stop<=16t_G", "chain not reversible"))
    return out


def sep_vs_mix_any_chain(p: ChainParameters, tol: float = 1e-9) -> Check:
    """``t_sep <= 2 t_mix`` without the reversibility hypothesis.

    This is not a theorem for non-reversible chains (the greasy ladder breaks
    it), so it is kept out of :func:`chain_suite` and only reported on request.
    """
    if p.t_mix is None:
        return skipped(ANY_CHAIN_SEP, "t_mix not attained")
    ts = p.t_sep if p.t_sep is not None else math.inf
    return _cmp(ANY_CHAIN_SEP, ts, 2 * p.t_mix, f"t_mix={p.t_mix}", tol)


def chain_suite(
    chain: MarkovChain,
    horizon: int = SUITE_HORIZON,
    *,
    kac_max_n: int = 10,
    set_bound_max_n: int = 10,
    averaging_max_n: int = 0,
    tol: float = 1e-9,
) -> tuple[VerificationReport, ChainParameters]:
    """Every inequality check for ``chain`` plus the parameters it used."""
    report = dist.verify_distance_lemmas(chain, horizon, tol)
    params = chain_parameters(chain)
    report.extend(parameter_checks(chain, params, tol))
    if chain.n <= kac_max_n:
        report.add(kac_check(chain, 5, tol))
    else:
        report.add(skipped("kac sum<=k", f"n > {kac_max_n}"))
    if chain.reversible and chain.n <= set_bound_max_n and params.t_lazy is not None:
        report.add(set_bound_check(chain, params.t_lazy, tol=tol))
    else:
        report.add(skipped("E_z[tau_A]<=16t_L/(3pi(A))", "needs a reversible chain with small n"))
    if averaging_max_n and chain.reversible and chain.n <= averaging_max_n:
        report.add(averaging_lemma_check(chain, tol))
    return report, params


def averaging_lemma_check(chain: MarkovChain, tol: float = 1e-9) -> Check:
    results = averaging_check(chain)
    return worst_of(
        "averaged stopped-law statistic<=1+L/U",
        ((r.value, r.bound, f"x={x},L={r.L},u={r.u}") for x, r in enumerate(results)),
        tol,
    )


@dataclass
class CorpusReport:
    """Per-check worst case over a corpus plus the per-chain reports."""

    reports: list[VerificationReport]
    parameters: list[ChainParameters] = field(repr=False)

    def by_check(self) -> dict[str, Check]:
        worst: dict[str, Check] = {}
        counts: dict[str, int] = {}
        for rep in self.reports:
            for c in rep.checks:
                if c.status == "skipped":
                    counts.setdefault(c.name, 0)
                    worst.setdefault(c.name, c)
                    continue
                counts[c.name] = counts.get(c.name, 0) + 1
                cur = worst.get(c.name)
                if cur is None or cur.status == "skipped" or c.slack < cur.slack:
                    worst[c.name] = Check(c.name, c.lhs, c.rhs, c.slack, c.status, f"{rep.chain}: {c.where}",
                                          c.note, c.instances)
        for name, c in worst.items():
            c.instances = counts[name]
        return worst

    def violations(self, name: Optional[str] = None) -> list[tuple[str, Check]]:
        return [
            (rep.chain, c)
            for rep in self.reports
            for c in rep.checks
            if c.status == "fail" and (name is None or c.name == name)
        ]

    @property
    def ok(self) -> bool:
        return not self.violations()


def _pool_size() -> int:
    try:
        return max(1, int(os.environ.get("CHAINLAB_THREADS", "1")))
    except ValueError:
        return 1


def corpus_suite(chains: Iterable[MarkovChain], horizon: int = SUITE_HORIZON, **kw) -> CorpusReport:
    """Run :func:`chain_suite` on every chain; output order follows input order."""
    chains = list(chains)
    workers = _pool_size()
    if workers == 1:
        results = [chain_suite(c, horizon, **kw) for c in chains]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: chain_suite(c, horizon, **kw), chains))
    return CorpusReport([r for r, _ in results], [p for _, p in results])


@dataclass(frozen=True)
class RatioBand:
    """Range of a ratio across a corpus."""

    name: str
    low: float
    high: float
    count: int

    @property
    def width(self) -> float:
        return self.high / self.low if self.low > 0 else math.inf


def equivalence_bands(chains: Sequence[MarkovChain], alpha: float = 0.25) -> dict[str, RatioBand]:
    """Bands of ``t_L / t_H(alpha)`` and ``t_G / t_H(alpha)`` over reversible chains."""
    lh, gh = [], []
    for c in chains:
        if not c.reversible:
            continue
        th = t_hit_alpha(c, alpha).value
        tl = dist.t_lazy(c)
        tg = dist.t_geom(c)
        if th <= 0 or not tl.attained or not tg.attained:
            continue
        lh.append(tl.time / th)
        gh.append(tg.time / th)
    if not lh:
        raise ValueError("no reversible chains with attained parameters")
    return {
        "t_L/t_H": RatioBand("t_L/t_H", min(lh), max(lh), len(lh)),
        "t_G/t_H": RatioBand("t_G/t_H", min(gh), max(gh), len(gh)),
    }


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])
