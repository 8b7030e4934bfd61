"""SLOCC invariants: local ranks and tensor rank, plus bipartite Schmidt data."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import als, pencil
from .statecore import PureState, StateError, _check_party, reduced_density

TOL_RANK_EIG = 1e-9
TOL_RANK_FIT = 1e-8
TOL_MAJOR = 1e-10


@dataclass(frozen=True)
class Budget:
    restarts: int = 32
    iterations: int = 2000
    seed: int = 0

    @classmethod
    def named(cls, name: str, seed: int = 0) -> "Budget":
        presets = {"low": (4, 500), "default": (32, 2000), "high": (128, 5000)}
        if name not in presets:
            raise ValueError(f"unknown budget {name!r}; choose from {sorted(presets)}")
        r, it = presets[name]
        return cls(r, it, seed)


@dataclass
class RankStatus:
    lower: int
    upper: int | None
    exact: bool
    method: str
    witness: list[list[np.ndarray]] | None = None  # terms, each one vector per party
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.upper is not None and self.lower > self.upper:
            raise ValueError("rank lower bound exceeds upper bound")
        if self.exact and self.lower != self.upper:
            raise ValueError("exact rank needs lower == upper")

    @property
    def value(self) -> int | None:
        return self.upper if self.exact else None

    def as_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "exact": self.exact,
                "method": self.method, "witness_terms": None if self.witness is None
                else len(self.witness), "notes": list(self.notes)}


@dataclass
class InvariantVector:
    rank: RankStatus
    local_ranks: tuple[int, ...]

    def as_dict(self) -> dict:
        return {"rank": self.rank.as_dict(), "local_ranks": list(self.local_ranks)}


def _numerical_rank(values: np.ndarray, tol: float) -> int:
    values = np.abs(np.asarray(values))
    if values.size == 0 or values.max() == 0:
        return 0
    return int(np.sum(values > tol * values.max()))


def local_rank(s: PureState, i: int) -> int:
    rho = reduced_density(s, [i])
    return _numerical_rank(np.linalg.eigvalsh(rho.matrix), TOL_RANK_EIG)


def local_ranks(s: PureState) -> tuple[int, ...]:
    return tuple(local_rank(s, i) for i in range(1, s.n + 1))


def _bipartition(s: PureState, left: Sequence[int]) -> np.ndarray:
    left = list(left)
    if not left or len(left) >= s.n or len(set(left)) != len(left):
        raise StateError("left must be a proper nonempty subset of the parties")
    keep = [_check_party(s.n, i) for i in left]
    rest = [k for k in range(s.n) if k not in keep]
    rows = int(np.prod([s.dims[k] for k in keep]))
    return s.tensor.transpose(keep + rest).reshape(rows, -1)


def schmidt(s: PureState, left: Sequence[int]) -> np.ndarray:
    """Squared Schmidt coefficients across ``left`` | rest, descending, summing to 1."""
    sv = np.linalg.svd(_bipartition(s, left), compute_uv=False)
    lam = sv ** 2
    return lam / lam.sum()


def majorization_locc(src: PureState, dst: PureState) -> bool:
    """Bipartite LOCC test: src -> dst iff lambda_src is majorized by lambda_dst."""
    if src.n != 2 or dst.n != 2:
        raise StateError("majorization criterion needs bipartite states")
    a, b = schmidt(src, [1]), schmidt(dst, [1])
    n = max(a.size, b.size)
    a = np.pad(a, (0, n - a.size))
    b = np.pad(b, (0, n - b.size))
    return bool(np.all(np.cumsum(a) <= np.cumsum(b) + TOL_MAJOR))


# -- tensor rank ------------------------------------------------------------

def _witness_residual(t: np.ndarray, terms) -> float:
    recon = sum(_outer(term) for term in terms)
    return float(np.linalg.norm(recon - t) / np.linalg.norm(t))


def _outer(vectors) -> np.ndarray:
    out = np.asarray(vectors[0], dtype=complex)
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=complex))
    return out


def _factors_to_terms(factors: list[np.ndarray]) -> list[list[np.ndarray]]:
    r = factors[0].shape[1]
    return [[f[:, k].copy() for f in factors] for k in range(r)]


def support_construction(t: np.ndarray) -> list[list[np.ndarray]]:
    """Product decomposition read off the support.

    For a chosen mode k, basis entries sharing all other indices collapse into
    one product term; the mode giving the fewest terms wins.
    """
    best = None
    nz = np.argwhere(np.abs(t) > 0)
    for k in range(t.ndim):
        groups: dict[tuple, np.ndarray] = {}
        for idx in nz:
            key = tuple(np.delete(idx, k))
            vec = groups.setdefault(key, np.zeros(t.shape[k], dtype=complex))
            vec[idx[k]] += t[tuple(idx)]
        if best is None or len(groups) < len(best[1]):
            best = (k, groups)
    k, groups = best
    terms = []
    for key, vec in groups.items():
        term = []
        it = iter(key)
        for mode in range(t.ndim):
            if mode == k:
                term.append(vec)
            else:
                e = np.zeros(t.shape[mode], dtype=complex)
                e[next(it)] = 1.0
                term.append(e)
        terms.append(term)
    return terms


def _compress(t: np.ndarray):
    """Project every mode onto the support of its flattening."""
    bases = []
    core = t
    for k in range(t.ndim):
        u, sv, _ = np.linalg.svd(als._unfold(t, k), full_matrices=False)
        r = _numerical_rank(sv ** 2, TOL_RANK_EIG)
        q = u[:, :r]
        bases.append(q)
        core = np.moveaxis(np.tensordot(q.conj().T, core, axes=([1], [k])), 0, k)
    return core, bases


def _lift(terms, bases):
    return [[q @ v for q, v in zip(bases, term)] for term in terms]


def _diagonal_pencil_terms(t: np.ndarray) -> list[list[np.ndarray]] | None:
    """n terms for a 2 x n x n array whose pencil is regular and diagonalizable.

    With B = A1 + c A0 invertible and B^-1 A0 = V D V^-1, each eigenpair gives
    the term (D_i, 1 - c D_i) x B v_i x (row i of V^-1).
    """
    a0, a1 = t[0], t[1]
    for c in (0, 1, -1, 2, -2, 3):
        b = a1 + c * a0
        if np.linalg.cond(b) < 1e8:
            break
    else:
        return None
    d, v = np.linalg.eig(np.linalg.solve(b, a0))
    if np.linalg.cond(v) > 1e8:
        return None
    left, right = b @ v, np.linalg.inv(v)
    terms = [[np.array([d[i], 1 - c * d[i]]), left[:, i], right[i, :]] for i in range(len(d))]
    return terms if _witness_residual(t, terms) < TOL_RANK_FIT * 1e-2 else None


def _pencil_witness(t: np.ndarray, rank: int, seed: int) -> list[list[np.ndarray]] | None:
    """Decomposition with ``rank`` terms of a square 2 x n x n array of rank >= n.

    Subtracting rank - n random product terms leaves a generic array of rank
    n, which the eigen-decomposition construction splits exactly.
    """
    n = t.shape[1]
    if t.shape != (2, n, n) or rank < n:
        return None
    rng = np.random.default_rng(seed)
    scale = np.linalg.norm(t)
    for _ in range(8):
        extra = []
        for _ in range(rank - n):
            vecs = [rng.standard_normal(d) + 1j * rng.standard_normal(d) for d in t.shape]
            vecs[0] = vecs[0] * scale / np.prod([np.linalg.norm(v) for v in vecs])
            extra.append(vecs)
        rest = t - sum(_outer(v) for v in extra) if extra else t
        terms = _diagonal_pencil_terms(rest)
        if terms is not None:
            terms = terms + extra
            if _witness_residual(t, terms) < TOL_RANK_FIT * 1e-2:
                return terms
    return None


def _rank_of_tensor(t: np.ndarray, budget: Budget) -> RankStatus:
    t = np.asarray(t, dtype=complex)
    flat = [_numerical_rank(np.linalg.svd(als._unfold(t, k), compute_uv=False) ** 2,
                            TOL_RANK_EIG) for k in range(t.ndim)]
    lower = max(flat)
    if t.ndim == 1:
        return RankStatus(1, 1, True, "flattening", [[t.copy()]])
    if t.ndim == 2:
        u, sv, vh = np.linalg.svd(t, full_matrices=False)
        r = lower
        terms = [[u[:, k] * sv[k], vh[k, :].copy()] for k in range(r)]
        return RankStatus(r, r, True, "flattening", terms)
    if lower == 1:
        term = []
        for k in range(t.ndim):
            u, sv, _ = np.linalg.svd(als._unfold(t, k), full_matrices=False)
            term.append(u[:, 0])
        coeff = np.vdot(_outer(term).reshape(-1), t.reshape(-1))
        term[0] = term[0] * coeff
        return RankStatus(1, 1, True, "flattening", [term])

    constructed = support_construction(t)
    if len(constructed) == lower:
        return RankStatus(lower, lower, True, "construction", constructed)

    core, bases = _compress(t)
    live = [k for k in range(core.ndim) if core.shape[k] > 1]
    notes = []
    if len(live) < core.ndim:
        # modes of local rank one are product factors; drop them from the core
        squeezed = core.reshape([core.shape[k] for k in live])
        inner = _rank_of_tensor(squeezed, budget)
        if inner.witness is None:
            return RankStatus(inner.lower, inner.upper, inner.exact, inner.method,
                              None, inner.notes)
        terms = []
        for term in inner.witness:
            it = iter(term)
            terms.append([next(it) if k in live else np.ones(1, dtype=complex)
                          for k in range(core.ndim)])
        return RankStatus(inner.lower, inner.upper, inner.exact, inner.method,
                          _lift(terms, bases), inner.notes)

    if core.ndim == 3 and 2 in core.shape:
        k2 = core.shape.index(2)
        order = [k2] + [k for k in range(3) if k != k2]
        rank, st = pencil.rank_2mn(core.transpose(order), seed=budget.seed)
        notes.append("pencil structure: eps=%s eta=%s n_reg=%d delta=%d%s" % (
            st.col_indices, st.row_indices, st.n_reg, st.delta,
            " (exact arithmetic)" if st.exact else ""))
        witness = None
        if len(constructed) == rank:
            witness = constructed
        elif (built := _pencil_witness(core.transpose(order), rank, budget.seed)) is not None:
            inverse = np.argsort(order)
            witness = _lift([[term[i] for i in inverse] for term in built], bases)
        else:
            res = als.als_search(core, rank, budget.restarts, budget.iterations, budget.seed)
            if res.success:
                witness = _lift(_factors_to_terms(res.factors), bases)
            else:
                notes.append("no witness decomposition found within budget")
        return RankStatus(rank, rank, True, "pencil", witness, notes)

    upper, witness, method = len(constructed), constructed, "construction"
    for r in range(lower, upper):
        res = als.als_search(core, r, budget.restarts, budget.iterations, budget.seed)
        if res.success:
            upper, witness, method = r, _lift(_factors_to_terms(res.factors), bases), "als-search"
            break
        if res.border_artifact:
            notes.append(f"rank {r}: border-rank artifact rejected")
    return RankStatus(lower, upper, upper == lower, method, witness, notes)


@lru_cache(maxsize=512)
def _cached_rank(key, budget: Budget) -> RankStatus:
    dims, raw = key
    t = np.frombuffer(raw, dtype=complex).reshape(dims)
    return _rank_of_tensor(t, budget)


def tensor_rank(s: PureState, budget: Budget | None = None) -> RankStatus:
    st = _cached_rank(s.key(), budget or Budget())
    if st.witness is not None:
        res = _witness_residual(s.tensor, st.witness)
        if res >= TOL_RANK_FIT:
            raise ArithmeticError(f"witness decomposition residual {res:.2e} too large")
    return st


def tensor_rank_2mn(s: PureState, seed: int = 0) -> RankStatus:
    if s.n != 3 or s.dims[0] != 2:
        raise StateError(f"expected dims (2, M, N), got {s.dims}")
    rank, st = pencil.rank_2mn(s.tensor, seed=seed)
    notes = [f"pencil structure: eps={st.col_indices} eta={st.row_indices} "
             f"n_reg={st.n_reg} delta={st.delta}"]
    constructed = support_construction(s.tensor)
    if len(constructed) == rank:
        witness = constructed
    else:
        res = als.als_search(s.tensor, rank, seed=seed)
        witness = _factors_to_terms(res.factors) if res.success else None
        if witness is None:
            notes.append("no witness decomposition found within budget")
    return RankStatus(rank, rank, True, "pencil", witness, notes)


def invariant_vector(s: PureState, budget: Budget | None = None) -> InvariantVector:
    return InvariantVector(tensor_rank(s, budget), local_ranks(s))
