"""Independence graph, party partition and SLOCC witnesses into the GHZ orbit."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .invariants import Budget, invariant_vector
from .statecore import (TOL_FID, LocalOperator, PureState, StateError, _check_party,
                        apply_locals, from_terms, ghz, overlap, permute_parties,
                        reduced_density, tensor_product)

TOL_INDEP = 1e-9
TOL_PURITY = 1e-9


class RankUndetermined(StateError):
    pass


@dataclass(frozen=True)
class IndependenceGraph:
    n: int
    adjacency: np.ndarray

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(i + 1, j + 1) for i, j in combinations(range(self.n), 2)
                if self.adjacency[i, j]]


@dataclass(frozen=True)
class Partition:
    blocks: tuple[tuple[int, ...], ...]

    @classmethod
    def of(cls, blocks: Iterable[Iterable[int]]) -> "Partition":
        canon = sorted(tuple(sorted(b)) for b in blocks)
        flat = [p for b in canon for p in b]
        if any(not b for b in canon) or len(flat) != len(set(flat)):
            raise ValueError("blocks must be nonempty and disjoint")
        if sorted(flat) != list(range(1, len(flat) + 1)):
            raise ValueError("blocks must cover parties 1..N")
        return cls(tuple(canon))

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    def block_of(self, party: int) -> tuple[int, ...]:
        for b in self.blocks:
            if party in b:
                return b
        raise KeyError(party)

    def as_list(self) -> list[list[int]]:
        return [list(b) for b in self.blocks]


@dataclass(frozen=True)
class SloccWitness:
    ops: tuple[LocalOperator, ...]
    invertible: tuple[bool, ...]

    def apply(self, s: PureState) -> PureState:
        return apply_locals(s, self.ops)

    def residual(self, src: PureState, dst: PureState) -> float:
        out = self.apply(src)
        if out.dims != dst.dims:
            return np.inf
        return float(np.linalg.norm(out.amps - dst.amps) / np.linalg.norm(dst.amps))

    def verifies(self, src: PureState, dst: PureState, tol: float = TOL_FID) -> bool:
        out = self.apply(src)
        return out.dims == dst.dims and overlap(out, dst) >= 1 - tol


def witness_from_matrices(mats: Sequence[np.ndarray]) -> SloccWitness:
    ops = tuple(LocalOperator(i + 1, m) for i, m in enumerate(mats))
    inv = tuple(bool(np.linalg.matrix_rank(m) == m.shape[1]) for m in mats)
    return SloccWitness(ops, inv)


# -- independence -----------------------------------------------------------

def is_independent(s: PureState, i: int, j: int) -> bool:
    if i == j:
        raise StateError("independence needs two distinct parties")
    _check_party(s.n, i), _check_party(s.n, j)
    s = s.normalized()
    rho_ij = reduced_density(s, [i, j]).matrix
    prod = np.kron(reduced_density(s, [i]).matrix, reduced_density(s, [j]).matrix)
    return bool(np.linalg.norm(rho_ij - prod) / np.linalg.norm(rho_ij) < TOL_INDEP)


def independence_graph(s: PureState) -> IndependenceGraph:
    adj = np.zeros((s.n, s.n), dtype=bool)
    for i, j in combinations(range(1, s.n + 1), 2):
        adj[i - 1, j - 1] = adj[j - 1, i - 1] = not is_independent(s, i, j)
    return IndependenceGraph(s.n, adj)


def graph_partition(g: IndependenceGraph) -> Partition:
    _, labels = connected_components(g.adjacency.astype(int), directed=False)
    blocks: dict[int, list[int]] = {}
    for party, lab in enumerate(labels, start=1):
        blocks.setdefault(int(lab), []).append(party)
    return Partition.of(blocks.values())


def partition(s: PureState) -> Partition:
    return graph_partition(independence_graph(s))


def partition_geq(p: Partition, q: Partition) -> bool:
    """True iff every block of q lies inside some block of p."""
    if p.n != q.n:
        raise ValueError("partitions over different party counts")
    return all(any(set(b) <= set(a) for a in p.blocks) for b in q.blocks)


def is_completely_independent(s: PureState, i: int, j: int) -> bool:
    if i == j:
        raise StateError("independence needs two distinct parties")
    p = partition(s)
    return p.block_of(i) != p.block_of(j)


def restrict(s: PureState, block: Sequence[int]) -> PureState:
    """Pure state on ``block`` for a block that factors out of ``s``."""
    block = list(block)
    rho = reduced_density(s, block).matrix
    w, v = np.linalg.eigh(rho)
    tr = w.sum()
    if w[-1] / tr < 1 - TOL_PURITY:
        raise StateError("partition/factorization inconsistency")
    vec = v[:, -1] * np.sqrt(w[-1])
    return PureState(tuple(s.dims[i - 1] for i in block), vec)


def factorize(s: PureState, part: Partition | None = None) -> list[PureState]:
    """One pure factor per block; their product equals ``s`` up to phase and scale."""
    part = part or partition(s)
    return [restrict(s, b) for b in part.blocks]


def join_factors(factors: Sequence[PureState], part: Partition) -> PureState:
    """Inverse of :func:`factorize`: tensor the factors and restore party order."""
    out = factors[0]
    for f in factors[1:]:
        out = tensor_product(out, f)
    order_now = [p for b in part.blocks for p in b]
    return permute_parties(out, [order_now.index(p) + 1 for p in range(1, part.n + 1)])


# -- GHZ orbit --------------------------------------------------------------

def ghz_witness(s: PureState, budget: Budget | None = None) -> SloccWitness | None:
    """Operators X_i with (X_1 x ... x X_N) GHZ_d = s, if s lies in the GHZ_d orbit.

    X_i has the factor vectors of a rank-d decomposition as columns; all weight
    is carried by party 1 so parties 2..N use unit-norm columns.
    """
    inv = invariant_vector(s, budget)
    if not inv.rank.exact:
        raise RankUndetermined("rank undetermined")
    d = inv.rank.upper
    if any(r != d for r in inv.local_ranks) or inv.rank.witness is None:
        return None
    mats = [np.column_stack([term[k] for term in inv.rank.witness]) for k in range(s.n)]
    for k in range(1, s.n):
        norms = np.linalg.norm(mats[k], axis=0)
        mats[k] = mats[k] / norms
        mats[0] = mats[0] * norms
    wit = witness_from_matrices(mats)
    if wit.residual(ghz(d, s.n), s) > 1e-8:
        raise ArithmeticError("GHZ witness failed to reconstruct the state")
    return wit


def family_member_d_minus_1(d: int, j: int, n: int) -> PureState:
    """sum_{i<d-1} |i>^N + sum_{i<j} |i>|d-1>^(N-1)  (0-based kets)."""
    if d < 2 or not 1 <= j <= d - 1 or n < 3:
        raise ValueError("need d >= 2, 1 <= j <= d-1, N >= 3")
    terms = {}
    for i in range(d - 1):
        terms[(i,) * n] = 1.0
    for i in range(j):
        terms[(i,) + (d - 1,) * (n - 1)] = 1.0
    return from_terms((d,) * n, terms)


# -- export ---------------------------------------------------------------

def to_dot(g: IndependenceGraph, part: Partition | None = None, name: str = "G") -> str:
    lines = [f"graph {name} {{"]
    if part is not None:
        for k, block in enumerate(part.blocks):
            lines.append(f"  subgraph cluster_{k} {{")
            lines.append(f'    label="S{k + 1}";')
            for p in block:
                lines.append(f"    A{p};")
            lines.append("  }")
    else:
        for p in range(1, g.n + 1):
            lines.append(f"  A{p};")
    for i, j in g.edges:
        lines.append(f"  A{i} -- A{j};")
    lines.append("}")
    return "\n".join(lines) + "\n"
