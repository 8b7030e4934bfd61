"""Three-valued convertibility verdicts under LOCC, SLOCC and multi-copy LOCC.

Every Yes carries a witness or a named sufficient condition, every No an
obstruction that can be rechecked numerically, and every Unknown the list of
checks that were tried.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import protocols
from .invariants import Budget, local_ranks, majorization_locc, schmidt, tensor_rank
from .statecore import (TOL_FID, LocalOperator, PureState, StateError,
                        apply_locals, embed, equal_up_to_phase_scale, ghz, overlap,
                        reduced_density)
from .structure import (RankUndetermined, SloccWitness, ghz_witness,
                        independence_graph, partition, partition_geq, restrict)

log = logging.getLogger(__name__)

YES, NO, UNKNOWN = "Yes", "No", "Unknown"


class Regime(str, Enum):
    LOCC = "LOCC"
    SLOCC = "SLOCC"
    MCLOCC = "MCLOCC"


def parse_regime(text: str) -> tuple[Regime, str | None]:
    """Regime from user text; the multi-copy SLOCC alias folds into MCLOCC."""
    key = str(text).strip().upper()
    if key == "MCSLOCC":
        return Regime.MCLOCC, ("mcslocc normalized to mclocc: multi-copy SLOCC and "
                               "multi-copy LOCC define the same order")
    try:
        return Regime(key), None
    except ValueError:
        raise ValueError(f"unknown regime {text!r}; choose locc, slocc, mclocc or mcslocc") from None


class HierarchyInconsistency(AssertionError):
    """Decided verdicts contradict LOCC => SLOCC => MCLOCC."""


@dataclass
class RsepCertificate:
    """Decomposition sum_i sqrt(p_i)|a_i^(1),...,a_i^(N-1), i> of a reduced separable state."""

    p: Sequence[float]
    a: Sequence[Sequence[np.ndarray]]


@dataclass
class Verdict:
    regime: str
    answer: str
    reason: str
    details: dict = field(default_factory=dict)
    witness: object = None
    checks: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"regime": self.regime, "answer": self.answer, "reason": self.reason,
                "details": self.details, "witness_ref": _witness_ref(self.witness),
                "checks": list(self.checks), "notes": list(self.notes)}


def _witness_ref(w):
    if w is None:
        return None
    if isinstance(w, SloccWitness):
        return {"kind": "slocc-witness",
                "operators": [{"party": op.party, "shape": list(op.matrix.shape),
                               "injective": inv} for op, inv in zip(w.ops, w.invertible)]}
    if isinstance(w, protocols.ProtocolTrace):
        return {"kind": "protocol-trace", "protocol": w.name, "branches": len(w.branches),
                "final_overlap": w.final_overlap, "success_probability": w.success_probability}
    return {"kind": type(w).__name__}


# -- helpers ------------------------------------------------------------------

def _same(src: PureState, dst: PureState) -> bool:
    return src.dims == dst.dims and equal_up_to_phase_scale(src, dst)[0]


def _fold_scale(w: SloccWitness, src: PureState, dst: PureState) -> SloccWitness:
    """Absorb the global scalar into party 1 so the witness hits dst exactly."""
    out = w.apply(src)
    c = np.vdot(out.amps, dst.amps) / out.norm2()
    ops = list(w.ops)
    ops[0] = LocalOperator(ops[0].party, ops[0].matrix * c)
    return SloccWitness(tuple(ops), w.invertible)


def _identity_witness(src: PureState, dst: PureState) -> SloccWitness:
    w = SloccWitness(tuple(LocalOperator(i + 1, np.eye(d)) for i, d in enumerate(src.dims)),
                     (True,) * src.n)
    return _fold_scale(w, src, dst)


def _check_counts(src: PureState, dst: PureState):
    if src.n != dst.n:
        raise StateError(f"party-count mismatch: {src.n} vs {dst.n}")


# -- MCLOCC -------------------------------------------------------------------

def _compare_mclocc(src, dst) -> Verdict:
    ps, pd = partition(src), partition(dst)
    ok = partition_geq(ps, pd)
    details = {"src_partition": ps.as_list(), "dst_partition": pd.as_list(),
               "relation": "src >= dst" if ok else "some dst block spans two src blocks"}
    return Verdict("MCLOCC", YES if ok else NO, "PartitionOrder", details,
                   checks=["partition order"])


# -- SLOCC --------------------------------------------------------------------

def _block_witness(s: PureState, d: PureState, budget) -> list[np.ndarray] | None:
    """Operators mapping block state s onto d through the GHZ orbit of s."""
    if s.n == 1:
        return [np.outer(d.amps, s.amps.conj()) / s.norm2()]
    try:
        gw = ghz_witness(s, budget)
    except RankUndetermined:
        return None
    if gw is None:
        return None
    rk = gw.ops[0].matrix.shape[1]
    st = tensor_rank(d, budget)
    if st.upper is None or st.upper > rk or st.witness is None:
        return None
    terms = list(st.witness)
    mats = []
    for k, x_op in enumerate(gw.ops):
        cols = [t[k] for t in terms] + [np.zeros(d.dims[k])] * (rk - len(terms))
        y = np.column_stack(cols)
        mats.append(y @ np.linalg.pinv(x_op.matrix))
    return mats


def _compare_slocc(src, dst, budget) -> Verdict:
    checks = ["identity"]
    if _same(src, dst):
        return Verdict("SLOCC", YES, "LUEquivalence", {"relation": "identical up to scale"},
                       _identity_witness(src, dst), checks)
    checks.append("partition order")
    ps, pd = partition(src), partition(dst)
    if not partition_geq(ps, pd):
        return Verdict("SLOCC", NO, "PartitionOrder",
                       {"src_partition": ps.as_list(), "dst_partition": pd.as_list(),
                        "relation": "multi-copy conversion already impossible"}, None, checks)
    lr_s, lr_d = local_ranks(src), local_ranks(dst)
    checks.append("local ranks")
    for i, (a, b) in enumerate(zip(lr_s, lr_d), start=1):
        if b > a:
            return Verdict("SLOCC", NO, "InvariantObstruction",
                           {"invariant": "local rank", "party": i, "src": a, "dst": b,
                            "message": f"local rank of A{i} {a} < {b}"}, None, checks)
    checks.append("tensor rank per block")
    blocks = [(S, restrict(src, S), restrict(dst, S)) for S in ps.blocks]
    for S, s_b, d_b in blocks:
        if len(S) < 3:
            continue  # local ranks decide blocks of one or two parties
        rs, rd = tensor_rank(s_b, budget), tensor_rank(d_b, budget)
        if rs.upper is not None and rd.lower > rs.upper:
            return Verdict("SLOCC", NO, "InvariantObstruction",
                           {"invariant": "tensor rank", "block": list(S), "src": rs.upper,
                            "dst": rd.lower, "message": f"tensor rank {rs.upper} < {rd.lower}"},
                           None, checks)
    checks.append("GHZ-orbit witness per block")
    mats: dict[int, np.ndarray] = {}
    for S, s_b, d_b in blocks:
        bm = _block_witness(s_b, d_b, budget)
        if bm is None:
            return Verdict("SLOCC", UNKNOWN, "Undecided", {"stalled_block": list(S)},
                           None, checks)
        mats.update(zip(S, bm))
    ops = tuple(LocalOperator(p, mats[p]) for p in range(1, src.n + 1))
    inv = tuple(bool(np.linalg.matrix_rank(m) == m.shape[1]) for m in mats.values())
    w = _fold_scale(SloccWitness(ops, inv), src, dst)
    res = w.residual(src, dst)
    if res >= 1e-8:
        log.warning("assembled SLOCC witness has residual %.2e; discarding", res)
        return Verdict("SLOCC", UNKNOWN, "Undecided", {"witness_residual": res}, None, checks)
    return Verdict("SLOCC", YES, "WitnessFound",
                   {"residual": res, "route": "source block in a GHZ orbit of rank >= dst rank"},
                   w, checks)


# -- LOCC ---------------------------------------------------------------------

def _registry_counterexample(src, dst) -> str | None:
    from .catalog import tgp10_state

    if src.dims == (2, 2, 2) and dst.dims == (2, 2, 2):
        if _same(src, ghz(2, 3)) and _same(dst, tgp10_state()):
            return "tgp10"
    return None


def _random_unitary(d: int, rng) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def lu_search(src: PureState, dst: PureState, restarts: int = 8, sweeps: int = 300,
              seed: int = 0) -> SloccWitness | None:
    """Look for unitaries U_i with (U_1 x ... x U_N) src ~ dst.

    Each sweep maximizes |<dst|U|src>| over one party at a time via a polar
    decomposition.  Marginal spectra are compared first.
    """
    if src.dims != dst.dims:
        return None
    a, b = src.normalized(), dst.normalized()
    for i in range(1, a.n + 1):
        ea = reduced_density(a, [i]).eigenvalues()
        eb = reduced_density(b, [i]).eigenvalues()
        if np.abs(ea - eb).max() > 1e-8:
            return None
    rng = np.random.default_rng(seed)
    n = a.n
    for r in range(restarts):
        us = [np.eye(d, dtype=complex) if r == 0 else _random_unitary(d, rng) for d in a.dims]
        res_old = np.inf
        for _ in range(sweeps):
            for k in range(n):
                others = [LocalOperator(j + 1, us[j]) for j in range(n) if j != k]
                moved = apply_locals(a, others).tensor
                # K[b, a] = sum over other indices of conj(dst)[.., a, ..] * moved[.., b, ..]
                kmat = np.tensordot(np.moveaxis(moved, k, 0), np.moveaxis(b.tensor.conj(), k, 0),
                                    axes=(list(range(1, n)), list(range(1, n))))
                w, _, vh = np.linalg.svd(kmat)
                us[k] = (w @ vh).conj().T
            out = apply_locals(a, [LocalOperator(j + 1, us[j]) for j in range(n)]).amps
            inner = np.vdot(out, b.amps)
            res = np.linalg.norm(out * inner / abs(inner) - b.amps) if abs(inner) > 0 else 2.0
            if res < 1e-12 or abs(res_old - res) < 1e-15:
                break
            res_old = res
        wit = SloccWitness(tuple(LocalOperator(j + 1, us[j]) for j in range(n)), (True,) * n)
        if wit.verifies(src, dst):
            return _fold_scale(wit, src, dst)
    return None


def _ghz_unitary_form(src: PureState, budget):
    """(d, unitaries U_i) when src is proportional to (U_1 x ... x U_N) GHZ_d."""
    try:
        gw = ghz_witness(src, budget)
    except RankUndetermined:
        return None
    if gw is None:
        return None
    mats = [op.matrix for op in gw.ops]
    if any(m.shape[0] != m.shape[1] for m in mats):
        return None
    mats[0] = mats[0] / np.linalg.norm(mats[0][:, 0])
    if not all(LocalOperator(1, m).is_unitary(1e-9) for m in mats):
        return None
    return mats[0].shape[0], mats


def _reduced_separable_route(src, dst, cert: RsepCertificate, budget, seed):
    form = _ghz_unitary_form(src, budget)
    if form is None:
        return None, "source is not a GHZ state up to local unitaries"
    d, us = form
    p = list(np.asarray(cert.p, dtype=float))
    a = [[np.asarray(v, dtype=complex).reshape(-1) for v in party] for party in cert.a]
    if len(p) > d:
        return None, f"certificate cardinality {len(p)} exceeds GHZ rank {d}"
    while len(p) < d:
        p.append(0.0)
        for party in a:
            party.append(party[0])
    target = protocols.reduced_separable_target(p, a)
    if dst.dims[:-1] != target.dims[:-1] or dst.dims[-1] > d:
        return None, "certificate dimensions do not match the destination"
    if overlap(embed(dst, target.dims), target) < 1 - TOL_FID:
        return None, "certificate does not reproduce the destination"
    trace = protocols.ghz_to_reduced_separable(d, src.n, p, a, exhaustive=True, seed=seed)
    if not trace.succeeded():
        raise protocols.ProtocolError("reduced separable protocol missed its target")
    trace.extras["source_unitaries_undone"] = True
    return trace, None


def _compare_locc(src, dst, budget, certificate, seed) -> Verdict:
    checks = ["identity"]
    if _same(src, dst):
        return Verdict("LOCC", YES, "LUEquivalence", {"relation": "identical up to scale"},
                       _identity_witness(src, dst), checks)
    checks.append("SLOCC verdict")
    sv = _compare_slocc(src, dst, budget)
    if sv.answer == NO:
        return Verdict("LOCC", NO, sv.reason, dict(sv.details, via="SLOCC obstruction"),
                       None, checks)
    checks.append("known counterexamples")
    name = _registry_counterexample(src, dst)
    if name:
        return Verdict("LOCC", NO, "Counterexample", {"name": name,
                       "statement": "GHZ_2 cannot reach this state by LOCC"}, None, checks)
    if src.n == 2:
        checks.append("majorization")
        ok = majorization_locc(src, dst)
        return Verdict("LOCC", YES if ok else NO,
                       "MajorizationPass" if ok else "MajorizationFail",
                       {"src_schmidt": schmidt(src, [1]).tolist(),
                        "dst_schmidt": schmidt(dst, [1]).tolist()}, None, checks)
    checks.append("blockwise bipartite / local-unitary")
    ps = partition(src)
    if len(ps.blocks) > 1:
        reasons = []
        for S in ps.blocks:
            s_b, d_b = restrict(src, S), restrict(dst, S)
            if len(S) == 1 or _same(s_b, d_b):
                reasons.append("local preparation" if len(S) == 1 else "identical")
            elif len(S) == 2 and majorization_locc(s_b, d_b):
                reasons.append("majorization")
            elif lu_search(s_b, d_b, seed=seed) is not None:
                reasons.append("local unitaries")
            else:
                reasons = None
                break
        if reasons:
            kind = "MajorizationPass" if "majorization" in reasons else "LUEquivalence"
            return Verdict("LOCC", YES, kind, {"blocks": ps.as_list(), "per_block": reasons},
                           None, checks)
    lu = lu_search(src, dst, seed=seed)
    if lu is not None:
        return Verdict("LOCC", YES, "LUEquivalence", {"relation": "local unitary witness"},
                       lu, checks)
    if certificate is not None:
        checks.append("GHZ source with reduced separable certificate")
        trace, why = _reduced_separable_route(src, dst, certificate, budget, seed)
        if trace is not None:
            return Verdict("LOCC", YES, "ReducedSeparableProtocol",
                           {"d": trace.extras["d"], "branches": len(trace.branches)},
                           trace, checks)
        checks[-1] += f" ({why})"
    return Verdict("LOCC", UNKNOWN, "Undecided", {}, None, checks)


# -- public API ---------------------------------------------------------------

def compare(src: PureState, dst: PureState, regime, budget: Budget | None = None,
            certificate: RsepCertificate | None = None, seed: int = 0) -> Verdict:
    _check_counts(src, dst)
    note = None
    if not isinstance(regime, Regime):
        regime, note = parse_regime(regime)
    budget = budget or Budget(seed=seed)
    if regime is Regime.MCLOCC:
        v = _compare_mclocc(src, dst)
    elif regime is Regime.SLOCC:
        v = _compare_slocc(src, dst, budget)
    else:
        v = _compare_locc(src, dst, budget, certificate, seed)
    if note:
        v.notes.append(note)
    return v


def hierarchy_check(src: PureState, dst: PureState, budget: Budget | None = None,
                    seed: int = 0) -> dict:
    out = {r.value: compare(src, dst, r, budget, seed=seed) for r in Regime}
    a = {k: v.answer for k, v in out.items()}
    if a["LOCC"] == YES and a["SLOCC"] == NO:
        raise HierarchyInconsistency("LOCC Yes but SLOCC No")
    if a["SLOCC"] == YES and a["MCLOCC"] == NO:
        raise HierarchyInconsistency("SLOCC Yes but MCLOCC No")
    if a["LOCC"] == YES and a["MCLOCC"] == NO:
        raise HierarchyInconsistency("LOCC Yes but MCLOCC No")
    return out


# -- multi-copy demonstration ------------------------------------------------

def _bfs_tree(adj: np.ndarray, root: int, allowed) -> list[tuple[int, int]]:
    seen, edges, queue = {root}, [], deque([root])
    while queue:
        u = queue.popleft()
        for v in range(1, adj.shape[0] + 1):
            if v in allowed and v not in seen and adj[u - 1, v - 1]:
                seen.add(v)
                edges.append((u, v))
                queue.append(v)
    return edges


def _steiner(edges, root, terminals) -> list[tuple[int, int]]:
    """Prune non-terminal leaves from a rooted tree."""
    edges = list(edges)
    while True:
        children = {u for u, _ in edges}
        leaves = [e for e in edges if e[1] not in children and e[1] not in terminals]
        if not leaves:
            return edges
        edges = [e for e in edges if e not in leaves]


def _path(edges, root, target) -> list[int]:
    parent = {v: u for u, v in edges}
    path = [target]
    while path[-1] != root:
        path.append(parent[path[-1]])
    return path[::-1]


def build_plan(src: PureState, dst: PureState, budget: Budget | None = None,
               seed: int = 0) -> protocols.DemoPlan:
    sv = _compare_slocc(src, dst, budget or Budget(seed=seed))
    if sv.answer == YES and isinstance(sv.witness, SloccWitness):
        return protocols.DemoPlan("filter", [], sv.witness)
    ps, pd = partition(src), partition(dst)
    adj = independence_graph(src).adjacency
    blocks = []
    for T in pd.blocks:
        S = next(b for b in ps.blocks if set(T) <= set(b))
        root = T[0]
        if len(T) == 1:
            blocks.append(protocols.PlanBlock(T, root, [], "local"))
            continue
        full = _bfs_tree(adj, root, set(S))
        if {v for _, v in full} | {root} != set(S):
            raise StateError("source block is not connected in its graph")
        if protocols._ghz_isometries(restrict(dst, T)) is not None:
            blocks.append(protocols.PlanBlock(T, root, _steiner(full, root, set(T)), "ghz"))
        else:
            paths = {j: _path(full, root, j) for j in T if j != root}
            blocks.append(protocols.PlanBlock(T, root, [], "teleport", paths))
    return protocols.DemoPlan("bell-merge-teleport", blocks)


def mcsllocc_equals_mclocc(src: PureState, dst: PureState, budget: Budget | None = None,
                           seed: int = 0, execute: bool = True) -> dict:
    """Multi-copy verdict plus an executed finite-copy conversion when the answer is Yes."""
    v = compare(src, dst, Regime.MCLOCC)
    report = {"verdict": v, "plan": None, "trace": None}
    if v.answer != YES:
        return report
    try:
        plan = build_plan(src, dst, budget, seed)
    except Exception as exc:
        raise protocols.ProtocolError(f"plan construction failed on a Yes verdict: {exc}") from exc
    report["plan"] = plan
    if execute:
        report["trace"] = protocols.execute_plan(plan, src, dst, seed)
    return report
