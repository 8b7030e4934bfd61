"""Dense, unnormalized multipartite pure states and local operations on them.

Party indices are 1-based everywhere in the public API (party 1 is the
slowest-varying index of the amplitude tensor).  Amplitudes are never
normalized implicitly; anything probabilistic divides by the squared norm.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

TOL_HERM = 1e-10
TOL_POVM = 1e-10
TOL_UNITARY = 1e-10
TOL_PROB = 1e-10
TOL_FID = 1e-9
TOL_ZERO = 1e-12


class StateError(ValueError):
    """Invalid state, operator or measurement."""


def _check_party(n: int, i: int) -> int:
    if not isinstance(i, (int, np.integer)) or not 1 <= i <= n:
        raise StateError(f"party index {i} out of range 1..{n}")
    return int(i) - 1


@dataclass(frozen=True, eq=False)
class PureState:
    dims: tuple[int, ...]
    amps: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise StateError(f"invalid dims {self.dims}")
        amps = np.asarray(self.amps, dtype=complex).reshape(-1)
        if amps.size != int(np.prod(dims)):
            raise StateError(
                f"amplitude count {amps.size} does not match dims {dims}")
        if not np.any(np.abs(amps) > 0):
            raise StateError("zero state")
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amps", amps)

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def tensor(self) -> np.ndarray:
        return self.amps.reshape(self.dims)

    def norm2(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def normalized(self) -> "PureState":
        return PureState(self.dims, self.amps / np.sqrt(self.norm2()))

    def key(self) -> tuple:
        """Hashable identity used for memoisation."""
        return (self.dims, self.amps.tobytes())

    def __repr__(self) -> str:
        return f"PureState(dims={self.dims}, nnz={np.count_nonzero(self.amps)})"


@dataclass(frozen=True, eq=False)
class DensityOperator:
    subset: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StateError("density operator must be square")
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.conj().T).max() > TOL_HERM * scale:
            raise StateError("density operator is not Hermitian")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "subset", tuple(self.subset))

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)[::-1]


@dataclass(frozen=True, eq=False)
class LocalOperator:
    party: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=complex))
        object.__setattr__(self, "matrix", m)

    def is_unitary(self, tol: float = TOL_UNITARY) -> bool:
        m = self.matrix
        if m.shape[0] != m.shape[1]:
            return False
        return bool(np.abs(m.conj().T @ m - np.eye(m.shape[1])).max() <= tol)


@dataclass(frozen=True, eq=False)
class MeasurementRound:
    """A local measurement with classically conditioned unitary corrections.

    ``elements`` maps outcome labels to Kraus operators acting on ``party``;
    ``corrections`` maps a label to unitaries applied on other parties when
    that outcome occurs.
    """

    party: int
    elements: Mapping[object, np.ndarray]
    corrections: Mapping[object, Sequence[LocalOperator]] = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        elements = {k: np.atleast_2d(np.asarray(v, dtype=complex))
                    for k, v in dict(self.elements).items()}
        if not elements:
            raise StateError("measurement has no elements")
        dims_in = {m.shape[1] for m in elements.values()}
        if len(dims_in) != 1:
            raise StateError("measurement elements disagree on input dimension")
        d = dims_in.pop()
        total = sum(m.conj().T @ m for m in elements.values())
        if np.abs(total - np.eye(d)).max() > TOL_POVM:
            raise StateError("measurement is not complete")
        for k, ops in dict(self.corrections).items():
            if k not in elements:
                raise StateError(f"correction for unknown outcome {k!r}")
            for op in ops:
                if op.party == self.party:
                    raise StateError("corrections must act on other parties")
                if not op.is_unitary():
                    raise StateError(f"correction on party {op.party} is not unitary")
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "corrections",
                           {k: tuple(v) for k, v in dict(self.corrections).items()})

    @property
    def labels(self) -> list:
        return list(self.elements)


# -- constructors -----------------------------------------------------------

def basis_state(dims: Sequence[int], idx: Sequence[int]) -> PureState:
    amps = np.zeros(int(np.prod(dims)), dtype=complex)
    amps[np.ravel_multi_index(tuple(idx), tuple(dims))] = 1.0
    return PureState(tuple(dims), amps)


def from_terms(dims: Sequence[int], terms: Mapping[tuple, complex] | Sequence[tuple]) -> PureState:
    """Build a state from ``{index-tuple: amplitude}`` or a list of index tuples."""
    amps = np.zeros(int(np.prod(dims)), dtype=complex)
    items = terms.items() if isinstance(terms, Mapping) else ((t, 1.0) for t in terms)
    for idx, a in items:
        amps[np.ravel_multi_index(tuple(idx), tuple(dims))] += a
    return PureState(tuple(dims), amps)


def from_vectors(vectors: Sequence[np.ndarray]) -> PureState:
    """Product state of the given local vectors."""
    vecs = [np.asarray(v, dtype=complex).reshape(-1) for v in vectors]
    amps = vecs[0]
    for v in vecs[1:]:
        amps = np.kron(amps, v)
    return PureState(tuple(v.size for v in vecs), amps)


def ghz(d: int, n: int = 3) -> PureState:
    """Unnormalized sum_{i<d} |i...i>."""
    return from_terms((d,) * n, [(i,) * n for i in range(d)])


def state_from_decomposition(terms: Sequence[Sequence[np.ndarray]]) -> PureState:
    amps = sum(from_vectors(t).amps for t in terms)
    dims = tuple(np.asarray(v).size for v in terms[0])
    return PureState(dims, amps)


# -- operations -------------------------------------------------------------

def tensor_product(a: PureState, b: PureState,
                   grouping: Mapping[int, int] | None = None) -> PureState:
    """Tensor product; with ``grouping`` each party of ``a`` absorbs its partner in ``b``.

    With grouping the merged party index is (index in a) * d_b + (index in b).
    """
    ungrouped = np.kron(a.amps, b.amps)
    if grouping is None:
        return PureState(a.dims + b.dims, ungrouped)
    grouping = dict(grouping)
    if (a.n != b.n or sorted(grouping) != list(range(1, a.n + 1))
            or sorted(grouping.values()) != list(range(1, b.n + 1))):
        raise StateError("invalid grouping")
    t = ungrouped.reshape(a.dims + b.dims)
    order = []
    for i in range(1, a.n + 1):
        order += [i - 1, a.n + grouping[i] - 1]
    t = t.transpose(order)
    dims = tuple(a.dims[i - 1] * b.dims[grouping[i] - 1] for i in range(1, a.n + 1))
    return PureState(dims, t.reshape(-1))


def permute_parties(s: PureState, order: Sequence[int]) -> PureState:
    """Reorder parties: new party k is old party ``order[k-1]``."""
    if sorted(order) != list(range(1, s.n + 1)):
        raise StateError(f"invalid party order {order}")
    axes = [o - 1 for o in order]
    return PureState(tuple(s.dims[a] for a in axes), s.tensor.transpose(axes).reshape(-1))


def _validate_subset(s: PureState, subset: Sequence[int]) -> list[int]:
    subset = list(subset)
    if not subset:
        raise StateError("empty subset")
    if len(set(subset)) != len(subset):
        raise StateError("repeated party in subset")
    return [_check_party(s.n, i) for i in subset]


def reduced_density(s: PureState, subset: Sequence[int]) -> DensityOperator:
    """Partial trace of |s><s| onto ``subset`` (kept in the given order)."""
    keep = _validate_subset(s, subset)
    rest = [k for k in range(s.n) if k not in keep]
    m = s.tensor.transpose(keep + rest).reshape(
        int(np.prod([s.dims[k] for k in keep])), -1)
    rho = m @ m.conj().T
    return DensityOperator(tuple(subset), (rho + rho.conj().T) / 2)


def apply_local(s: PureState, op: LocalOperator) -> PureState:
    k = _check_party(s.n, op.party)
    m = op.matrix
    if m.shape[1] != s.dims[k]:
        raise StateError(
            f"operator input dimension {m.shape[1]} != party {op.party} dimension {s.dims[k]}")
    t = np.moveaxis(np.tensordot(m, s.tensor, axes=([1], [k])), 0, k)
    if np.linalg.norm(t) <= TOL_ZERO * np.linalg.norm(m, 2) * np.sqrt(s.norm2()):
        raise StateError("annihilated")
    dims = s.dims[:k] + (m.shape[0],) + s.dims[k + 1:]
    return PureState(dims, t.reshape(-1))


def apply_locals(s: PureState, ops: Sequence[LocalOperator]) -> PureState:
    for op in ops:
        s = apply_local(s, op)
    return s


def merge_parties(s: PureState, i: int, j: int) -> PureState:
    """Fuse parties i and j into one party at position min(i, j).

    The merged basis index is (index of i) * d_j + (index of j).
    """
    a, b = _check_party(s.n, i), _check_party(s.n, j)
    if a == b:
        raise StateError("cannot merge a party with itself")
    pos = min(a, b)
    others = [k for k in range(s.n) if k not in (a, b)]
    order = others[:pos] + [a, b] + others[pos:]
    t = s.tensor.transpose(order)
    dims = [s.dims[k] for k in others]
    dims.insert(pos, s.dims[a] * s.dims[b])
    return PureState(tuple(dims), t.reshape(-1))


def drop_trivial_parties(s: PureState) -> PureState:
    """Remove parties of dimension one (left behind by destructive measurements)."""
    dims = tuple(d for d in s.dims if d != 1)
    if not dims:
        dims = (1,)
    return PureState(dims, s.amps)


def _branch(s: PureState, rnd: MeasurementRound, label) -> tuple[float, PureState | None]:
    k = _check_party(s.n, rnd.party)
    m = rnd.elements[label]
    if m.shape[1] != s.dims[k]:
        raise StateError("measurement dimension mismatch")
    t = np.moveaxis(np.tensordot(m, s.tensor, axes=([1], [k])), 0, k)
    p = float(np.vdot(t, t).real) / s.norm2()
    if p < TOL_ZERO:
        return p, None
    dims = s.dims[:k] + (m.shape[0],) + s.dims[k + 1:]
    post = PureState(dims, t.reshape(-1))
    for op in rnd.corrections.get(label, ()):
        post = apply_local(post, op)
    return p, post


def branch_probabilities(s: PureState, rnd: MeasurementRound) -> dict:
    probs = {label: _branch(s, rnd, label)[0] for label in rnd.labels}
    total = sum(probs.values())
    if abs(total - 1.0) > TOL_PROB:
        raise StateError(f"branch probabilities sum to {total}")
    return probs


def apply_measurement(s: PureState, rnd: MeasurementRound, branch=None,
                      seed: int | np.random.Generator | None = None):
    """Apply ``rnd`` and return ``(label, probability, post_state)``.

    Give ``branch`` to select an outcome, otherwise an outcome is sampled
    using ``seed`` (an int or a numpy Generator).
    """
    if branch is None:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        probs = branch_probabilities(s, rnd)
        labels = list(probs)
        p = np.array([probs[l] for l in labels])
        branch = labels[int(rng.choice(len(labels), p=p / p.sum()))]
    if branch not in rnd.elements:
        raise StateError(f"unknown outcome {branch!r}")
    p, post = _branch(s, rnd, branch)
    if post is None:
        raise StateError("impossible branch")
    return branch, p, post


def overlap(a: PureState, b: PureState) -> float:
    """Normalized fidelity |<a|b>|^2 / (<a|a><b|b>)."""
    if a.dims != b.dims:
        raise StateError(f"dims mismatch {a.dims} vs {b.dims}")
    return float(abs(np.vdot(a.amps, b.amps)) ** 2 / (a.norm2() * b.norm2()))


def equal_up_to_phase_scale(a: PureState, b: PureState, tol: float = TOL_FID):
    f = overlap(a, b)
    return f >= 1 - tol, f


def embed(s: PureState, dims: Sequence[int]) -> PureState:
    """Zero-pad each party of ``s`` into larger local dimensions."""
    if len(dims) != s.n or any(d < e for d, e in zip(dims, s.dims)):
        raise StateError("cannot embed into smaller dimensions")
    t = np.zeros(tuple(dims), dtype=complex)
    t[tuple(slice(0, e) for e in s.dims)] = s.tensor
    return PureState(tuple(dims), t.reshape(-1))


# -- state file format ------------------------------------------------------

def state_to_dict(s: PureState, tol: float = 0.0) -> dict:
    records = []
    for flat in np.flatnonzero(np.abs(s.amps) > tol):
        a = s.amps[flat]
        idx = np.unravel_index(flat, s.dims)
        records.append({"idx": [int(i) for i in idx],
                        "re": float(a.real), "im": float(a.imag)})
    return {"dims": list(s.dims), "amps": records}


def state_from_dict(data: Mapping) -> PureState:
    if not isinstance(data, Mapping):
        raise StateError("state document must be an object")
    for key in ("dims", "amps"):
        if key not in data:
            raise StateError(f"missing field '{key}'")
    dims = data["dims"]
    if (not isinstance(dims, list) or not dims
            or not all(isinstance(d, int) and d >= 1 for d in dims)):
        raise StateError("field 'dims' must be a non-empty list of positive integers")
    amps = np.zeros(int(np.prod(dims)), dtype=complex)
    seen = set()
    for n, rec in enumerate(data["amps"]):
        try:
            idx = tuple(int(i) for i in rec["idx"])
            value = complex(float(rec.get("re", 0.0)), float(rec.get("im", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise StateError(f"amps[{n}]: malformed record ({exc})") from None
        if len(idx) != len(dims) or any(not 0 <= i < d for i, d in zip(idx, dims)):
            raise StateError(f"amps[{n}]: index {list(idx)} out of range for dims {dims}")
        if idx in seen:
            raise StateError(f"amps[{n}]: duplicate index {list(idx)}")
        seen.add(idx)
        amps[np.ravel_multi_index(idx, dims)] = value
    return PureState(tuple(dims), amps)


def load_state(path) -> PureState:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise StateError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return state_from_dict(data)


def save_state(s: PureState, path) -> None:
    with open(path, "w") as fh:
        json.dump(state_to_dict(s), fh, indent=1)
