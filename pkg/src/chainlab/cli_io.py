"""Chain-spec documents, report serialisation and the ``chainlab`` command line.

A chain spec is a small JSON object in one of three shapes::

    {"family": "greasy_ladder", "params": {"n": 6}, "transform": "base"}
    {"matrix": [["0.5", "0.5"], ["0.5", "0.5"]]}
    {"tree": {"edges": [[0, 1, "1.0"], [1, 2, "1.0"]]}}

``transform`` is ``"base"`` (default), ``"lazy"`` or
``{"loop_perturbed": a}`` with ``a`` a holding probability or a list of them.
On the command line a spec may also be a path to such a file, inline JSON,
or the shorthand ``family:key=value,...`` (``flip2`` names the flip chain).

Exit codes: 0 success, 1 bad input, 2 an inequality failed, 3 a parameter
that should always converge did not within the horizon.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from . import __version__
from . import distances as dist
from .chain_core import MarkovChain, lazy
from .checks import Check
from .errors import ChainError, ScaleError, SpecError
from .generators import FAMILIES, ChainFamily, corpus
from .hitting import PROD_CUTOFF, t_hit_alpha, t_prod
from .inequalities import chain_suite
from .stopping_rules import filling_rule, t_stop, t_stop_lazy
from .trees import WeightedTree, central_node, loop_perturbation, t_v, tree_hit_bound_check

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION, EXIT_NONCONVERGED = 0, 1, 2, 3

ALIASES = {
    "flip2": {"family": "two_state", "params": {"p": 1, "q": 1}},
}


def _decimal(x) -> str:
    if isinstance(x, str):
        float(x)  # validates
        return x
    return repr(float(x))


@dataclass
class ChainSpec:
    """Parsed chain-spec document."""

    family: Optional[str] = None
    params: dict[str, Any] = field(default_factory=dict)
    matrix: Optional[list[list[str]]] = None
    tree_edges: Optional[list[list]] = None
    transform: Union[str, dict] = "base"

    @classmethod
    def from_dict(cls, doc: Any) -> "ChainSpec":
        if not isinstance(doc, dict):
            raise SpecError("chain spec must be a JSON object")
        kinds = [k for k in ("family", "matrix", "tree") if k in doc]
        if len(kinds) != 1:
            raise SpecError("chain spec needs exactly one of 'family', 'matrix' or 'tree'")
        unknown = set(doc) - {"family", "params", "matrix", "tree", "transform"}
        if unknown:
            raise SpecError(f"unknown chain-spec keys: {sorted(unknown)}")
        transform = doc.get("transform", "base")
        _check_transform(transform)
        if "family" in doc:
            fam = doc["family"]
            if fam not in FAMILIES:
                raise SpecError(f"unknown family {fam!r}; known: {', '.join(FAMILIES)}")
            params = doc.get("params", {})
            if not isinstance(params, dict):
                raise SpecError("'params' must be an object")
            return cls(family=fam, params=dict(params), transform=transform)
        if "matrix" in doc:
            rows = doc["matrix"]
            if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
                raise SpecError("'matrix' must be a list of rows")
            try:
                matrix = [[_decimal(v) for v in r] for r in rows]
            except (TypeError, ValueError) as exc:
                raise SpecError(f"matrix entries must be decimal numbers: {exc}") from exc
            return cls(matrix=matrix, transform=transform)
        tree = doc["tree"]
        if not isinstance(tree, dict) or not isinstance(tree.get("edges"), list):
            raise SpecError("'tree' must be an object with an 'edges' list")
        edges = []
        for e in tree["edges"]:
            if not isinstance(e, list) or len(e) not in (2, 3):
                raise SpecError(f"tree edge {e!r} must be [u, v] or [u, v, conductance]")
            try:
                edges.append([int(e[0]), int(e[1]), _decimal(e[2] if len(e) == 3 else "1")])
            except (TypeError, ValueError) as exc:
                raise SpecError(f"bad tree edge {e!r}: {exc}") from exc
        return cls(tree_edges=edges, transform=transform)

    def to_dict(self) -> dict:
        if self.family is not None:
            doc: dict[str, Any] = {"family": self.family, "params": dict(self.params)}
        elif self.matrix is not None:
            doc = {"matrix": [list(r) for r in self.matrix]}
        else:
            doc = {"tree": {"edges": [list(e) for e in self.tree_edges]}}
        doc["transform"] = self.transform
        return doc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def is_tree(self) -> bool:
        return self.tree_edges is not None

    def tree(self) -> WeightedTree:
        if not self.is_tree:
            raise SpecError("spec does not describe a tree")
        n = 1 + max(max(u, v) for u, v, _ in self.tree_edges) if self.tree_edges else 1
        try:
            return WeightedTree(n, [(u, v, float(c)) for u, v, c in self.tree_edges])
        except ValueError as exc:
            raise SpecError(f"invalid tree: {exc}") from exc

    def build(self) -> MarkovChain:
        try:
            if self.family is not None:
                chain = ChainFamily(self.family, self.params).build()
            elif self.matrix is not None:
                chain = MarkovChain([[float(v) for v in r] for r in self.matrix], name="matrix")
            else:
                chain = self.tree().chain
        except (ChainError, ValueError, KeyError, TypeError) as exc:
            raise SpecError(f"spec does not define a valid chain: {exc}") from exc
        if self.transform == "lazy":
            chain = lazy(chain)
        elif isinstance(self.transform, dict):
            chain = loop_perturbation(chain, self.transform["loop_perturbed"])
        return chain

    @classmethod
    def from_chain(cls, chain: MarkovChain) -> "ChainSpec":
        return cls(matrix=[[repr(float(v)) for v in row] for row in chain.P])


def _check_transform(t) -> None:
    if t in ("base", "lazy"):
        return
    if isinstance(t, dict) and set(t) == {"loop_perturbed"}:
        a = t["loop_perturbed"]
        vals = a if isinstance(a, list) else [a]
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            return
    raise SpecError(f"transform must be 'base', 'lazy' or {{'loop_perturbed': a}}, got {t!r}")


def _scalar(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_spec(text: str) -> ChainSpec:
    """Parse a path, inline JSON document, alias, or ``family:key=value`` shorthand."""
    text = text.strip()
    if text in ALIASES:
        return ChainSpec.from_dict(ALIASES[text])
    path = Path(text)
    if not text.startswith("{") and path.suffix == ".json":
        try:
            raw = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise SpecError(f"cannot read {text}: {exc}") from exc
        return loads_spec(raw)
    if text.startswith("{"):
        return loads_spec(text)
    fam, _, rest = text.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq or not key:
                raise SpecError(f"shorthand parameter {item!r} is not key=value")
            params[key.strip()] = _scalar(value.strip())
    return ChainSpec.from_dict({"family": fam, "params": params})


def loads_spec(raw: str) -> ChainSpec:
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SpecError(f"chain spec is not valid JSON: {exc}") from exc
    return ChainSpec.from_dict(doc)


# -- reports ------------------------------------------------------------------


def _num(x):
    if x is None:
        return None
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return x if math.isfinite(x) else None


def check_row(c: Check) -> dict:
    return {
        "name": c.name,
        "lhs": _num(c.lhs),
        "rhs": _num(c.rhs),
        "slack": _num(c.slack),
        "status": c.status,
        "where": c.where,
        "note": c.note,
    }


ALWAYS_CONVERGES = ("t_L", "t_ave", "t_G", "t_Ces")


def analyze(
    spec: ChainSpec,
    *,
    epsilon: float = dist.EPSILON,
    alpha: float = 0.25,
    horizon: Optional[int] = None,
    tol: float = 1e-10,
    seed: int = 0,
) -> dict:
    """Full parameter report for one chain as a JSON-ready dict."""
    chain = spec.build()
    n = chain.n
    H = dist.default_horizon(n) if horizon is None else horizon

    def thr(r):
        return r.time if r.attained else None

    params: dict[str, Any] = {
        "n": n,
        "reversible": chain.reversible,
        "t_mix": thr(dist.t_mix(chain, epsilon, H)),
        "t_L": thr(dist.t_lazy(chain, epsilon, H)),
        "t_ave": thr(dist.t_ave(chain, epsilon, H)),
        "t_sep": thr(dist.t_sep(chain, horizon=H)),
        "t_G": thr(dist.t_geom(chain, epsilon, H)),
        "t_Ces": thr(dist.t_ces(chain, epsilon, H)),
    }
    params["t_stop"] = t_stop(chain)[0]
    params["t_stop_L"] = t_stop_lazy(chain)
    notes = []
    try:
        h = t_hit_alpha(chain, alpha)
        params["t_H"] = h.value
        if h.warning:
            notes.append(h.warning)
    except ScaleError as exc:
        params["t_H"] = None
        notes.append(str(exc))
    params["t_prod"] = t_prod(chain).value if n <= PROD_CUTOFF else None
    if spec.is_tree and spec.transform == "base":
        tree = spec.tree()
        v = central_node(tree)
        params["central_node"] = v
        params["t_v"] = t_v(tree, v)

    checks = []
    if horizon is None or horizon >= 1:
        rep, _ = chain_suite(chain, min(64, H), tol=1e-9)
        checks = list(rep.checks)
    if spec.is_tree and spec.transform == "base" and n <= 12:
        checks.append(tree_bound_row(spec.tree()))
    unconverged = [k for k in ALWAYS_CONVERGES if params[k] is None]
    flags = {
        "t_mix_attained": params["t_mix"] is not None,
        "t_sep_attained": params["t_sep"] is not None,
        "unconverged": unconverged,
    }
    return {
        "parameters": params,
        "inequalities": [check_row(c) for c in checks],
        "flags": flags,
        "notes": notes,
        "provenance": {
            "spec": spec.to_dict(),
            "epsilon": epsilon,
            "alpha": alpha,
            "separation_threshold": dist.SEP_THRESHOLD,
            "horizon": H,
            "tol": tol,
            "seed": seed,
            "version": __version__,
        },
    }


def report_exit_code(report: dict) -> int:
    if any(r["status"] == "fail" for r in report.get("inequalities", [])):
        return EXIT_VIOLATION
    if report.get("flags", {}).get("unconverged"):
        return EXIT_NONCONVERGED
    return EXIT_OK


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_to_csv(report: dict) -> str:
    """One row per quantity: ``section, name, value, lhs, rhs, slack, status``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "name", "value", "lhs", "rhs", "slack", "status"])
    for k, v in report.get("parameters", {}).items():
        w.writerow(["parameters", k, _csv_value(v), "", "", "", ""])
    for r in report.get("inequalities", []):
        w.writerow(["inequalities", r["name"], "", _csv_value(r["lhs"]), _csv_value(r["rhs"]),
                    _csv_value(r["slack"]), r["status"]])
    for k, v in report.get("provenance", {}).items():
        if isinstance(v, (dict, list)):
            v = json.dumps(v, sort_keys=True)
        w.writerow(["provenance", k, _csv_value(v), "", "", "", ""])
    return buf.getvalue()


def csv_to_numbers(text: str) -> dict:
    """Numeric content of a CSV report, keyed like :func:`json_numbers`."""
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        if row["section"] == "parameters" and row["value"] not in ("", "true", "false"):
            out[("parameters", row["name"])] = float(row["value"])
        if row["section"] == "inequalities":
            for col in ("lhs", "rhs", "slack"):
                if row[col] != "":
                    out[("inequalities", row["name"], col)] = float(row[col])
    return out


def json_numbers(report: dict) -> dict:
    out = {}
    for k, v in report.get("parameters", {}).items():
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            out[("parameters", k)] = float(v)
    for r in report.get("inequalities", []):
        for col in ("lhs", "rhs", "slack"):
            if r[col] is not None:
                out[("inequalities", r["name"], col)] = float(r[col])
    return out


def emit(payload: dict, fmt: str, out) -> None:
    if fmt == "json":
        out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        out.write(report_to_csv(payload))


# -- commands -------------------------------------------------------------------


def _load_corpus(source: str, seed: int) -> list[tuple[str, MarkovChain, Optional[ChainSpec]]]:
    if source == "builtin":
        return [(c.name, c, None) for _, c in corpus(seed)]
    path = Path(source)
    if not path.is_dir():
        raise SpecError(f"corpus {source!r} is neither 'builtin' nor a directory")
    chains = []
    for f in sorted(path.glob("*.json")):
        spec = loads_spec(f.read_text(encoding="utf-8"))
        chains.append((f.name, spec.build(), spec))
    if not chains:
        raise SpecError(f"no *.json chain specs in {source}")
    return chains


def tree_bound_row(tree: WeightedTree) -> Check:
    """Central-node bound over every singleton target of a small tree."""
    v = central_node(tree)
    slack = min(tree_hit_bound_check(tree, v, [a]) for a in range(tree.n))
    return Check("max_x E_x[tau_A]<=t_v(1+1/pi(A))", math.nan, math.nan, slack,
                 "pass" if slack >= -1e-9 else "fail", where="singleton targets", instances=tree.n)


def verify_corpus(source: str, seed: int = 0) -> dict:
    from concurrent.futures import ThreadPoolExecutor

    chains = _load_corpus(source, seed)

    def run(item):
        label, chain, spec = item
        rep, _ = chain_suite(chain)
        if spec is not None and spec.is_tree and spec.transform == "base" and chain.n <= 12:
            rep.add(tree_bound_row(spec.tree()))
        return label, chain.reversible, rep

    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chains))
    else:
        results = [run(c) for c in chains]
    rows = []
    notices = []
    for label, rev, rep in results:
        for c in rep.checks:
            row = check_row(c)
            row["chain"] = label
            rows.append(row)
        if not rev:
            notices.append(f"{label}: reversible-only checks skipped")
    return {
        "chains": len(chains),
        "inequalities": rows,
        "violations": sum(r["status"] == "fail" for r in rows),
        "notices": notices,
        "provenance": {"corpus": source, "seed": seed, "version": __version__},
    }


SWEEP_METRICS = ("tmix", "tL", "tave", "tsep", "tG", "tCes", "tstop", "tstopL", "tH", "tprod")


def sweep_metric(chain: MarkovChain, metric: str, alpha: float = 0.25, epsilon: float = dist.EPSILON):
    def thr(r):
        return r.time if r.attained else None

    if metric == "tmix":
        return thr(dist.t_mix(chain, epsilon))
    if metric == "tL":
        return thr(dist.t_lazy(chain, epsilon))
    if metric == "tave":
        return thr(dist.t_ave(chain, epsilon))
    if metric == "tsep":
        return thr(dist.t_sep(chain))
    if metric == "tG":
        return thr(dist.t_geom(chain, epsilon))
    if metric == "tCes":
        return thr(dist.t_ces(chain, epsilon))
    if metric == "tstop":
        return t_stop(chain)[0]
    if metric == "tstopL":
        return t_stop_lazy(chain)
    if metric == "tH":
        return t_hit_alpha(chain, alpha).value
    if metric == "tprod":
        return t_prod(chain).value
    raise SpecError(f"unknown metric {metric!r}; known: {', '.join(SWEEP_METRICS)}")


def sweep(family: str, param: str, values: list, metrics: list[str], fixed: dict, alpha: float = 0.25) -> dict:
    rows = []
    for v in values:
        params = dict(fixed)
        params[param] = v
        chain = ChainSpec.from_dict({"family": family, "params": params}).build()
        row = {param: v}
        for m in metrics:
            row[m] = sweep_metric(chain, m, alpha)
        rows.append(row)
    return {"family": family, "param": param, "metrics": metrics, "rows": rows,
            "provenance": {"fixed": fixed, "alpha": alpha, "version": __version__}}


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CHAINLAB_THREADS", "1")))
    except ValueError:
        return 1


def profile_table(chain: MarkovChain, horizon: int) -> list[dict]:
    cols = {
        "d": dist.profile_d(chain, horizon).values,
        "d_bar": dist.profile_dbar(chain, horizon).values,
        "s": dist.profile_sep(chain, horizon).values,
        "d_ave": dist.profile_ave(chain, horizon).values,
        "d_G": dist.profile_geom(chain, horizon).values,
        "d_Ces": dist.profile_ces(chain, horizon).values,
    }
    return [{"t": t, **{k: float(v[t]) for k, v in cols.items()}} for t in range(horizon + 1)]


def _rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _csv_value(v) for k, v in r.items()})
    return buf.getvalue()


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the bad-input code rather than argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chainlab", description="Exact mixing and hitting parameters of Markov chains")
    parser.add_argument("--version", action="version", version=f"chainlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="Report every parameter and inequality for one chain")
    a.add_argument("spec")
    a.add_argument("--epsilon", type=float, default=dist.EPSILON)
    a.add_argument("--alpha", type=float, default=0.25)
    a.add_argument("--horizon", type=int, default=None)
    a.add_argument("--tol", type=float, default=1e-10)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--transform", choices=["base", "lazy"], default=None)
    a.add_argument("--format", choices=["json", "csv"], default="json")

    v = sub.add_parser("verify", help="Run the inequality suite on a corpus")
    v.add_argument("corpus", help="'builtin' or a directory of *.json chain specs")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--format", choices=["json", "csv"], default="json")

    s = sub.add_parser("sweep", help="Scaling table for one family")
    s.add_argument("family", choices=FAMILIES)
    s.add_argument("--param", required=True, help="name=v1,v2,... e.g. n=8,16,32")
    s.add_argument("--metric", default="tL,tH,tstop", help=f"comma list from {','.join(SWEEP_METRICS)}")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="fixed family parameter")
    s.add_argument("--alpha", type=float, default=0.25)
    s.add_argument("--format", choices=["json", "csv"], default="json")

    pr = sub.add_parser("profile", help="Distance profiles as CSV columns")
    pr.add_argument("spec")
    pr.add_argument("--horizon", type=int, default=32)
    pr.add_argument("--format", choices=["json", "csv"], default="csv")

    tr = sub.add_parser("transcript", help="Filling-rule transcript from one start")
    tr.add_argument("spec")
    tr.add_argument("--start", type=int, default=0)
    return parser


def main(argv: Optional[list[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "analyze":
            spec = parse_spec(args.spec)
            if args.transform:
                spec.transform = args.transform
            report = analyze(spec, epsilon=args.epsilon, alpha=args.alpha, horizon=args.horizon,
                             tol=args.tol, seed=args.seed)
            emit(report, args.format, out)
            return report_exit_code(report)
        if args.command == "verify":
            result = verify_corpus(args.corpus, args.seed)
            for note in result["notices"]:
                print(f"notice: {note}", file=sys.stderr)
            if args.format == "json":
                emit(result, "json", out)
            else:
                out.write(_rows_csv(result["inequalities"]))
            return EXIT_VIOLATION if result["violations"] else EXIT_OK
        if args.command == "sweep":
            name, eq, vals = args.param.partition("=")
            if not eq or not vals:
                raise SpecError("--param must look like name=v1,v2,...")
            values = [_scalar(x) for x in vals.split(",")]
            fixed = {}
            for item in args.set:
                k, eq, val = item.partition("=")
                if not eq:
                    raise SpecError(f"--set {item!r} is not KEY=VALUE")
                fixed[k] = _scalar(val)
            metrics = [m.strip() for m in args.metric.split(",") if m.strip()]
            for m in metrics:
                if m not in SWEEP_METRICS:
                    raise SpecError(f"unknown metric {m!r}; known: {', '.join(SWEEP_METRICS)}")
            result = sweep(args.family, name, values, metrics, fixed, args.alpha)
            if args.format == "json":
                emit(result, "json", out)
            else:
                out.write(_rows_csv(result["rows"]))
            return EXIT_OK
        if args.command == "profile":
            chain = parse_spec(args.spec).build()
            rows = profile_table(chain, args.horizon)
            if args.format == "json":
                out.write(json.dumps(rows, indent=2) + "\n")
            else:
                out.write(_rows_csv(rows))
            return EXIT_OK
        if args.command == "transcript":
            chain = parse_spec(args.spec).build()
            if not 0 <= args.start < chain.n:
                raise SpecError(f"start state {args.start} outside 0..{chain.n - 1}")
            mu = np.zeros(chain.n)
            mu[args.start] = 1.0
            out.write(filling_rule(chain, mu).to_csv())
            return EXIT_OK
    except (SpecError, ScaleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ChainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_INPUT
