"""Command-line front end.

Exit codes: 0 success (including Unknown verdicts), 2 input error,
3 protocol failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from itertools import combinations

import numpy as np

from . import __version__, catalog, protocols, verdict
from .invariants import Budget, invariant_vector, tensor_rank
from .statecore import PureState, StateError, ghz, load_state
from .structure import (RankUndetermined, ghz_witness, graph_partition, independence_graph,
                        is_independent, to_dot)

EXIT_OK, EXIT_INPUT, EXIT_PROTOCOL, EXIT_IO = 0, 2, 3, 4


class InputError(ValueError):
    pass


# -- state sources -----------------------------------------------------------

class _Source(argparse.Action):
    """Collect file paths and --catalog names into one ordered list."""

    def __call__(self, parser, namespace, values, option_string=None):
        items = list(getattr(namespace, "sources", None) or [])
        kind = "catalog" if option_string else "file"
        if isinstance(values, str):
            values = [values]
        items += [(kind, v) for v in values]
        namespace.sources = items


def _add_sources(p: argparse.ArgumentParser):
    p.add_argument("files", nargs="*", action=_Source, help="state files (JSON)")
    p.add_argument("--catalog", action=_Source, metavar="NAME", help="catalog entry")
    p.set_defaults(sources=[])


def _resolve(source) -> PureState:
    kind, value = source
    if kind == "catalog":
        try:
            return catalog.get(value)
        except KeyError:
            raise InputError(f"unknown catalog entry {value!r}; see 'entorder catalog'") from None
    return load_state(value)


def _sources(args, count: int) -> list[PureState]:
    if len(args.sources) != count:
        raise InputError(f"expected {count} state source(s), got {len(args.sources)}")
    return [_resolve(s) for s in args.sources]


def _describe(source) -> str:
    kind, value = source
    return f"catalog:{value}" if kind == "catalog" else value


def _one(catalog_name, path, label) -> tuple[PureState, str]:
    if (catalog_name is None) == (path is None):
        raise InputError(f"give exactly one of --{label}-catalog or --{label}")
    if catalog_name is not None:
        return _resolve(("catalog", catalog_name)), f"catalog:{catalog_name}"
    return _resolve(("file", path)), path


# -- commands ------------------------------------------------------------------

def cmd_catalog(args):
    rows = []
    for name in catalog.names():
        e = catalog.CATALOG[name]
        rows.append({"name": name, "description": e.description, "rank": e.rank,
                     "local_ranks": list(e.local_ranks) if e.local_ranks else None,
                     "partition": [list(b) for b in e.partition] if e.partition else None})
    rows.append({"name": "GHZ<d>x<N>", "description": "GHZ_d on N parties (pattern)",
                 "rank": None, "local_ranks": None, "partition": None})
    return [], {"entries": rows}, EXIT_OK


def cmd_analyze(args):
    (s,) = _sources(args, 1)
    budget = Budget.named(args.budget, args.seed)
    inv = invariant_vector(s, budget)
    g = independence_graph(s)
    part = graph_partition(g)
    table = []
    for i, j in combinations(range(1, s.n + 1), 2):
        table.append({"pair": [i, j], "independent": is_independent(s, i, j),
                      "completely_independent": part.block_of(i) != part.block_of(j)})
    try:
        gw = ghz_witness(s, budget)
        ghz_info = {"present": gw is not None,
                    "d": None if gw is None else int(gw.ops[0].matrix.shape[1])}
    except RankUndetermined:
        ghz_info = {"present": None, "d": None, "note": "rank undetermined"}
    results = {"dims": list(s.dims), "norm": float(np.sqrt(s.norm2())),
               "invariants": inv.as_dict(), "partition": part.as_list(),
               "independence": table, "ghz_witness": ghz_info}
    return [_describe(x) for x in args.sources], results, EXIT_OK


def _certificate(args):
    if args.rsep_p is None and args.rsep_a_file is None:
        return None
    if args.rsep_p is None or args.rsep_a_file is None:
        raise InputError("--rsep-p and --rsep-a-file go together")
    return verdict.RsepCertificate(_parse_p(args.rsep_p), _load_vectors(args.rsep_a_file))


def cmd_compare(args):
    src, dst = _sources(args, 2)
    budget = Budget.named(args.budget, args.seed)
    regimes = (list(verdict.Regime) if args.regime.lower() == "all"
               else [args.regime])
    cert = _certificate(args)
    out = []
    for r in regimes:
        v = verdict.compare(src, dst, r, budget, cert, seed=args.seed)
        out.append(v.as_dict())
        if args.both_ways:
            w = verdict.compare(dst, src, r, budget, cert, seed=args.seed)
            out[-1] = {"forward": out[-1], "backward": w.as_dict()}
    return [_describe(x) for x in args.sources], {"verdicts": out}, EXIT_OK


def cmd_graph(args):
    (s,) = _sources(args, 1)
    g = independence_graph(s)
    part = graph_partition(g)
    results = {"n": g.n, "edges": [list(e) for e in g.edges],
               "adjacency": g.adjacency.astype(int).tolist(), "partition": part.as_list()}
    if args.dot:
        with open(args.dot, "w") as fh:
            fh.write(to_dot(g, part))
        results["dot"] = args.dot
    return [_describe(x) for x in args.sources], results, EXIT_OK


def cmd_rank(args):
    (s,) = _sources(args, 1)
    st = tensor_rank(s, Budget.named(args.budget, args.seed))
    return [_describe(x) for x in args.sources], {"dims": list(s.dims), "rank": st.as_dict()}, EXIT_OK


# -- simulate ------------------------------------------------------------------

def _parse_p(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise InputError(f"cannot parse probability list {text!r}") from None


def _parse_vector(raw, where: str) -> np.ndarray:
    try:
        vals = [complex(x[0], x[1]) if isinstance(x, list) else complex(x) for x in raw]
    except (TypeError, ValueError, IndexError):
        raise InputError(f"{where}: entries must be numbers or [re, im] pairs") from None
    return np.array(vals)


def _load_vectors(path: str) -> list[list[np.ndarray]]:
    """Read {"dims": [...], "terms": [[vector per party], ...]} into a[party][term]."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict) or "dims" not in data or "terms" not in data:
        raise InputError(f"{path}: expected fields 'dims' and 'terms'")
    dims = data["dims"]
    terms = data["terms"]
    vecs = [[] for _ in dims]
    for t, term in enumerate(terms):
        if len(term) != len(dims):
            raise InputError(f"{path}: terms[{t}] has {len(term)} vectors, expected {len(dims)}")
        for k, raw in enumerate(term):
            v = _parse_vector(raw, f"{path}: terms[{t}][{k}]")
            if v.size != dims[k]:
                raise InputError(f"{path}: terms[{t}][{k}] has length {v.size}, expected {dims[k]}")
            vecs[k].append(v)
    return vecs


def cmd_simulate(args):
    exhaustive = not args.sample
    name = args.protocol
    inputs = []
    if name == "ghz-merge":
        tr = protocols.ghz_merge(args.d, args.left, args.right, exhaustive, args.seed)
        ok = tr.succeeded() and _deterministic(tr, exhaustive)
    elif name == "ghz-to-rsep":
        if args.a_file is None or args.p is None:
            raise InputError("ghz-to-rsep needs --p and --a-file")
        inputs.append(args.a_file)
        tr = protocols.ghz_to_reduced_separable(args.d, args.N, _parse_p(args.p),
                                                _load_vectors(args.a_file), exhaustive, args.seed)
        ok = tr.succeeded() and _deterministic(tr, exhaustive)
    elif name == "rus":
        src, s_in = _one(args.src_catalog, args.src, "src")
        dst, d_in = _one(args.target_catalog, args.target, "target")
        inputs += [s_in, d_in]
        v = verdict.compare(src, dst, "SLOCC", Budget(seed=args.seed), seed=args.seed)
        if v.answer != verdict.YES or v.witness is None:
            raise InputError(f"no SLOCC witness from source to target (verdict {v.answer})")
        tr = protocols.repeat_until_success(src, v.witness, dst, args.trials, args.seed,
                                            stop_on_success=not args.all_trials)
        e = tr.extras
        ok = e["successes"] > 0
        if args.all_trials:
            ok = abs(e["empirical_frequency"] - e["single_trial_probability"]) <= \
                5 * e["binomial_sigma"] + 1e-12
    elif name == "teleport":
        payload = PureState((len(args.payload),), np.array(args.payload))
        resource = ghz(len(args.payload), 2)
        tr = protocols.teleport(resource, payload, exhaustive, args.seed)
        ok = tr.succeeded()
    elif name == "bell-extract":
        src, s_in = _one(args.src_catalog, args.src, "src")
        inputs.append(s_in)
        tr = protocols.bell_extract(src, args.i, args.j, args.attempts, args.seed)
        if tr is None:
            return inputs, {"protocol": "bell-extract", "found": False}, EXIT_PROTOCOL
        ok = tr.succeeded()
    elif name == "plan":
        src, s_in = _one(args.src_catalog, args.src, "src")
        dst, d_in = _one(args.target_catalog, args.target, "target")
        inputs += [s_in, d_in]
        rep = verdict.mcsllocc_equals_mclocc(src, dst, Budget(seed=args.seed), args.seed)
        res = {"verdict": rep["verdict"].as_dict(),
               "plan": rep["plan"].describe() if rep["plan"] else None,
               "trace": rep["trace"].as_dict(args.verbose) if rep["trace"] else None}
        ok = rep["trace"] is None or rep["trace"].final_overlap >= 1 - 1e-8
        return inputs, res, EXIT_OK if ok else EXIT_PROTOCOL
    else:  # pragma: no cover - argparse restricts choices
        raise InputError(name)
    return inputs, tr.as_dict(args.verbose), EXIT_OK if ok else EXIT_PROTOCOL


def _deterministic(tr, exhaustive: bool) -> bool:
    """Exhaustive LOCC traces must succeed on every branch; a sampled run shows one."""
    return not exhaustive or abs(tr.success_probability - 1) < 1e-9


def _payload(text: str) -> list[complex]:
    try:
        return [complex(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse amplitudes {text!r}") from None


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed (default 0)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="write the report here")
    common.add_argument("--format", choices=["report", "raw"], default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="entorder", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=["report", "raw"], default="report")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("catalog", parents=[common], help="list catalog entries")

    a = sub.add_parser("analyze", parents=[common], help="invariants, graph and partition")
    _add_sources(a)
    a.add_argument("--budget", default="default", choices=["low", "default", "high"])

    c = sub.add_parser("compare", parents=[common], help="convertibility verdicts")
    _add_sources(c)
    c.add_argument("--regime", default="all",
                   help="locc, slocc, mclocc, mcslocc or all (default)")
    c.add_argument("--both-ways", action="store_true", help="also compare dst -> src")
    c.add_argument("--budget", default="default", choices=["low", "default", "high"])
    c.add_argument("--rsep-p", help="reduced separable certificate: comma-separated p")
    c.add_argument("--rsep-a-file", help="reduced separable certificate: vector file")

    g = sub.add_parser("graph", parents=[common], help="independence graph")
    _add_sources(g)
    g.add_argument("--dot", help="write a Graphviz DOT file")

    r = sub.add_parser("rank", parents=[common], help="tensor rank")
    _add_sources(r)
    r.add_argument("--budget", default="default", choices=["low", "default", "high"])

    s = sub.add_parser("simulate", parents=[common], help="run a protocol")
    s.add_argument("protocol", choices=["ghz-merge", "ghz-to-rsep", "rus", "teleport",
                                        "bell-extract", "plan"])
    s.add_argument("-d", type=int, default=2)
    s.add_argument("-N", type=int, default=3)
    s.add_argument("--left", type=int, default=2)
    s.add_argument("--right", type=int, default=2)
    s.add_argument("--p")
    s.add_argument("--a-file")
    s.add_argument("--src")
    s.add_argument("--src-catalog")
    s.add_argument("--target")
    s.add_argument("--target-catalog")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--all-trials", action="store_true",
                   help="rus: keep going after the first success")
    s.add_argument("--payload", type=_payload, default=[0.6, 0.8])
    s.add_argument("-i", type=int, default=1)
    s.add_argument("-j", type=int, default=2)
    s.add_argument("--attempts", type=int, default=64)
    s.add_argument("--verbose", action="store_true", help="dump post-states")
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--exhaustive", action="store_true", help="all branches (default)")
    mode.add_argument("--sample", action="store_true", help="one seeded branch")
    return p


COMMANDS = {"catalog": cmd_catalog, "analyze": cmd_analyze, "compare": cmd_compare,
            "graph": cmd_graph, "rank": cmd_rank, "simulate": cmd_simulate}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        inputs, results, code = COMMANDS[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except protocols.ProtocolError as exc:
        print(f"protocol failure: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (StateError, InputError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = results if args.format == "raw" else {
        "command": _echo(argv), "inputs": inputs, "results": results,
        "seed": args.seed, "version": __version__}
    text = json.dumps(report, indent=2, default=_json_default) + "\n"
    try:
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


def _echo(argv: list[str]) -> list[str]:
    """Command line without the output path, so reports do not depend on it."""
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
        elif tok == "--out":
            skip = True
        elif not tok.startswith("--out="):
            out.append(tok)
    return out


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"not serializable: {type(x).__name__}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
