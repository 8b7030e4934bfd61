"""Exact branch-by-branch simulation of constructive LOCC / SLOCC protocols.

Every protocol returns a :class:`ProtocolTrace`.  Exhaustive traces enumerate
all measurement outcomes; sampled traces follow one seeded path.  States are
kept unnormalized, probabilities are ratios of squared norms.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .statecore import (TOL_FID, TOL_PROB, LocalOperator, MeasurementRound,
                        PureState, StateError, _branch, apply_local, drop_trivial_parties,
                        apply_locals, from_terms, from_vectors, ghz, merge_parties, overlap,
                        permute_parties, tensor_product)

log = logging.getLogger(__name__)


class ProtocolError(RuntimeError):
    """A protocol did not reach its declared target."""


def checksum(s: PureState) -> str:
    v = s.amps / np.sqrt(s.norm2())
    k = int(np.argmax(np.abs(v)))
    v = v * np.conj(v[k]) / abs(v[k])
    data = np.round(v, 9) + 0.0
    h = hashlib.sha1(repr(s.dims).encode())
    h.update(np.ascontiguousarray(data).tobytes())
    return h.hexdigest()[:12]


@dataclass
class StepRecord:
    description: str
    outcome: object
    probability: float
    checksum: str


@dataclass
class Branch:
    path: tuple
    probability: float
    steps: list[StepRecord]
    final_overlap: float
    state: PureState
    phase: float | None = None


@dataclass
class ProtocolTrace:
    name: str
    mode: str
    branches: list[Branch]
    target: PureState | None
    seed: int | None = None
    extras: dict = field(default_factory=dict)
    # probability that the recorded branch(es) happen, for SLOCC-type traces
    success_probability: float | None = None

    def __post_init__(self):
        if self.success_probability is None:
            self.success_probability = float(sum(
                b.probability for b in self.branches if b.final_overlap >= 1 - TOL_FID))
        if self.mode == "exhaustive":
            total = sum(b.probability for b in self.branches)
            if abs(total - 1) > TOL_PROB:
                raise ProtocolError(f"{self.name}: branch probabilities sum to {total}")

    @property
    def final_overlap(self) -> float:
        return min(b.final_overlap for b in self.branches)

    @property
    def output(self) -> PureState:
        return self.branches[0].state

    def succeeded(self, tol: float = TOL_FID) -> bool:
        return self.final_overlap >= 1 - tol

    def as_dict(self, verbose: bool = False) -> dict:
        from .statecore import state_to_dict

        out = {
            "protocol": self.name,
            "mode": self.mode,
            "seed": self.seed,
            "branch_count": len(self.branches),
            "success_probability": self.success_probability,
            "final_overlap": self.final_overlap,
            "branches": [],
        }
        for b in self.branches:
            rec = {
                "path": [_jsonable(p) for p in b.path],
                "probability": b.probability,
                "final_overlap": b.final_overlap,
                "steps": [{"round": s.description, "outcome": _jsonable(s.outcome),
                           "probability": s.probability, "checksum": s.checksum}
                          for s in b.steps],
            }
            if b.phase is not None:
                rec["phase_correction"] = b.phase
            if verbose:
                rec["state"] = state_to_dict(b.state, tol=1e-14)
            out["branches"].append(rec)
        out.update({k: _jsonable(v) for k, v in self.extras.items()})
        return out


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    if isinstance(x, list):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    return x


# -- generic tree runner ------------------------------------------------------

Stage = Callable[[PureState, tuple], "MeasurementRound | tuple[str, list[LocalOperator]]"]


def _run(initial: PureState, stages: Sequence[Stage], target: PureState | None,
         exhaustive: bool, seed: int | None,
         finalize: Callable[[PureState], PureState] = drop_trivial_parties) -> list[Branch]:
    rng = np.random.default_rng(seed)
    branches: list[Branch] = []

    def rec(state, k, path, prob, steps):
        if k == len(stages):
            final = finalize(state)
            ov = overlap(final, target) if target is not None and final.dims == target.dims \
                else (0.0 if target is not None else 1.0)
            branches.append(Branch(path, prob, steps, ov, final))
            return
        step = stages[k](state, path)
        if isinstance(step, MeasurementRound):
            outcomes = []
            for label in step.labels:
                p, post = _branch(state, step, label)
                if post is not None:
                    outcomes.append((label, p, post))
            total = sum(p for _, p, _ in outcomes)
            if abs(total - 1) > TOL_PROB:
                raise ProtocolError(f"round '{step.description}' probabilities sum to {total}")
            if not exhaustive:
                ps = np.array([p for _, p, _ in outcomes])
                outcomes = [outcomes[int(rng.choice(len(outcomes), p=ps / ps.sum()))]]
            for label, p, post in outcomes:
                rec(post, k + 1, path + (label,), prob * p,
                    steps + [StepRecord(step.description, label, p, checksum(post))])
        else:
            desc, ops = step
            for op in ops:
                state = apply_local(state, op)
            rec(state, k + 1, path, prob, steps + [StepRecord(desc, None, 1.0, checksum(state))])

    rec(initial, 0, (), 1.0, [])
    return branches


def shift(d: int, k: int) -> np.ndarray:
    """|j> -> |j + k mod d>."""
    return np.roll(np.eye(d), k, axis=0)


def clock(d: int, k: int) -> np.ndarray:
    """|j> -> exp(2 pi i j k / d) |j>."""
    return np.diag(np.exp(2j * np.pi * np.arange(d) * k / d))


# -- GHZ merge -----------------------------------------------------------------

def _merge_elements(d: int, compress: bool) -> dict:
    """Projections onto span{|j, j+i>} followed by the relabelling |j, j+i> -> |j, j>.

    With ``compress`` the merged system is mapped straight onto a d-level
    system via |j, j> -> |j>.
    """
    elements = {}
    for i in range(d):
        proj = np.zeros((d * d, d * d))
        for j in range(d):
            v = j * d + (j + i) % d
            proj[v, v] = 1
        relabel = np.kron(np.eye(d), shift(d, -i))
        e = relabel @ proj
        if compress:
            iso = np.zeros((d, d * d))
            for j in range(d):
                iso[j, j * d + j] = 1
            e = iso @ e
        elements[i] = e
    return elements


def ghz_merge(d: int, left: int, right: int, exhaustive: bool = True,
              seed: int | None = None) -> ProtocolTrace:
    """Fuse GHZ_d on ``left`` parties and GHZ_d on ``right`` parties.

    The last party of the left state and the first party of the right state
    are held by the same lab and measured jointly; the result is GHZ_d on
    left + right - 1 parties with the joint system spanning |j, j>.
    """
    if d < 2 or left < 2 or right < 2:
        raise StateError("ghz_merge needs d >= 2 and at least two parties per state")
    joint = merge_parties(tensor_product(ghz(d, left), ghz(d, right)), left, left + 1)
    n = joint.n
    target_terms = {(j,) * (left - 1) + (j * d + j,) + (j,) * (right - 1): 1.0
                    for j in range(d)}
    target = from_terms(joint.dims, target_terms)
    rnd = MeasurementRound(
        party=left,
        elements=_merge_elements(d, compress=False),
        corrections={i: [LocalOperator(p, shift(d, -i)) for p in range(left + 1, n + 1)]
                     for i in range(d)},
        description=f"project merged party A{left} onto span{{|j,j+i>}}; shift right-hand parties by -i",
    )
    branches = _run(joint, [lambda s, path: rnd], target, exhaustive, seed)
    return ProtocolTrace("ghz-merge", "exhaustive" if exhaustive else "sampled", branches,
                         target, seed, {"d": d, "left": left, "right": right})


# -- Bell extraction -----------------------------------------------------------

def _fourier_vectors(d: int) -> list[np.ndarray]:
    return [np.exp(2j * np.pi * np.arange(d) * k / d) / np.sqrt(d) for k in range(d)]


def _haar_vector(d: int, rng) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _candidate_projections(dims: Sequence[int], attempts: int, seed: int):
    bases = [[np.eye(d)[k] for k in range(d)] for d in dims]
    fourier = [_fourier_vectors(d) for d in dims]
    yielded = 0
    for family in (bases, fourier):
        for combo in itertools.product(*family):
            yield "deterministic", combo
            yielded += 1
            if yielded >= 4 * attempts:
                break
    rng = np.random.default_rng(seed)
    for _ in range(attempts):
        yield "random", tuple(_haar_vector(d, rng) for d in dims)


def bell_extract(s: PureState, i: int, j: int, attempts: int = 64,
                 seed: int = 0) -> ProtocolTrace | None:
    """Turn ``s`` into |00>+|11> on parties (i, j) by one SLOCC branch.

    Rank-one projections on every other party leave an entangled state of i
    and j; a local filter built from its Schmidt decomposition then yields
    the Bell state.  Returns ``None`` when the search budget is exhausted.
    """
    from .structure import is_independent

    if is_independent(s, i, j):
        raise StateError(f"hypothesis violated: parties {i} and {j} are independent")
    others = [k for k in range(1, s.n + 1) if k not in (i, j)]
    bell = ghz(2, 2)
    tried = 0
    for kind, vecs in _candidate_projections([s.dims[k - 1] for k in others], attempts, seed):
        tried += 1
        state = s
        try:
            for k, v in zip(others, vecs):
                state = apply_local(state, LocalOperator(k, np.conj(v)[None, :]))
        except StateError:
            continue
        p1 = state.norm2() / s.norm2()
        lo, hi = sorted((i, j))
        pair = PureState((s.dims[lo - 1], s.dims[hi - 1]), state.amps)
        mat = pair.tensor
        if i > j:
            mat = mat.T
        u, sv, vh = np.linalg.svd(mat)
        lam = sv ** 2 / np.sum(sv ** 2)
        if lam.size < 2 or lam[1] <= 1e-6:
            continue
        f_i = np.vstack([sv[1] / sv[0] * u[:, 0].conj(), u[:, 1].conj()])
        f_j = np.vstack([vh[0], vh[1]]).conj()
        filtered = np.kron(f_i, f_j) @ mat.reshape(-1)
        p2 = float(np.vdot(filtered, filtered).real) / float(np.sum(sv ** 2))
        out = PureState((2, 2), filtered)
        ov = overlap(out, bell)
        proj_desc = ", ".join(f"A{k}->{_fmt_vec(v)}" for k, v in zip(others, vecs))
        steps = [
            StepRecord(f"rank-one projections ({kind}): {proj_desc or 'none'}", "project", p1,
                       checksum(pair)),
            StepRecord(f"Schmidt filter on A{i} (lambda={lam[0]:.6g},{lam[1]:.6g}), "
                       f"isometry on A{j}", "filter", p2, checksum(out)),
        ]
        branch = Branch(("project", "filter"), p1 * p2, steps, ov, out)
        return ProtocolTrace("bell-extract", "slocc", [branch], bell, seed,
                             {"pair": [i, j], "candidates_tried": tried,
                              "projection_probability": p1, "filter_probability": p2},
                             success_probability=p1 * p2)
    log.warning("bell_extract: no entangling projection found for parties %d,%d after %d "
                "candidates", i, j, tried)
    return None


def _fmt_vec(v) -> str:
    return "(" + ",".join(f"{z.real:.3g}{z.imag:+.3g}j" if abs(z.imag) > 1e-12
                          else f"{z.real:.3g}" for z in np.asarray(v)) + ")"


# -- GHZ_d -> reduced separable state -----------------------------------------

def reduced_separable_target(p: Sequence[float], a: Sequence[Sequence[np.ndarray]]) -> PureState:
    """sum_i sqrt(p_i) |a_i^(1), ..., a_i^(N-1), i>."""
    d = len(p)
    amps = 0
    for i in range(d):
        last = np.zeros(d)
        last[i] = 1.0
        amps = amps + np.sqrt(p[i]) * from_vectors([party[i] for party in a] + [last]).amps
    dims = tuple(np.asarray(party[0]).size for party in a) + (d,)
    return PureState(dims, amps)


def ghz_to_reduced_separable(d: int, n: int, p: Sequence[float],
                             a: Sequence[Sequence[np.ndarray]], exhaustive: bool = True,
                             seed: int | None = None) -> ProtocolTrace:
    """GHZ_d on n parties -> sum_i sqrt(p_i)|a_i^(1),...,a_i^(n-1), i> by LOCC.

    Round 1 measures party n with {sum_j sqrt(p_j)|j><j+k|} and shifts the
    others back.  Party m = 1..n-1 then measures
    {d^(-1/2) sum_j w^(jk)|a_j^(m)><j|}; the accumulated phases w^(jK) are
    removed by a diagonal gate on party n.
    """
    p = np.asarray(p, dtype=float)
    if d < 1 or n < 2 or p.size != d:
        raise StateError("need d >= 1, n >= 2 and len(p) == d")
    if np.any(p < -TOL_PROB) or abs(p.sum() - 1) > TOL_PROB:
        raise StateError("p must be a probability vector")
    p = np.clip(p, 0, None)
    if len(a) != n - 1 or any(len(party) != d for party in a):
        raise StateError("a must hold d vectors for each of the first n-1 parties")
    a = [[np.asarray(v, dtype=complex).reshape(-1) for v in party] for party in a]
    for m, party in enumerate(a, start=1):
        for j, v in enumerate(party):
            if abs(np.linalg.norm(v) - 1) > 1e-10:
                raise StateError(f"a[{m}][{j}] is not a unit vector")
        if len({v.size for v in party}) != 1:
            raise StateError(f"vectors for party {m} differ in dimension")
    target = reduced_separable_target(p, a)
    omega = np.exp(2j * np.pi / d)

    first = MeasurementRound(
        party=n,
        elements={k: sum(np.sqrt(p[j]) * np.outer(np.eye(d)[j], np.eye(d)[(j + k) % d])
                         for j in range(d)) for k in range(d)},
        corrections={k: [LocalOperator(m, shift(d, -k)) for m in range(1, n)]
                     for k in range(d)},
        description=f"POVM sum_j sqrt(p_j)|j><j+k| on A{n}; shift A1..A{n - 1} by -k",
    )
    stages: list[Stage] = [lambda s, path: first]
    for m in range(1, n):
        vecs = a[m - 1]
        rnd = MeasurementRound(
            party=m,
            elements={k: sum(omega ** (j * k) * np.outer(vecs[j], np.eye(d)[j])
                             for j in range(d)) / np.sqrt(d) for k in range(d)},
            description=f"POVM d^-1/2 sum_j w^(jk)|a_j^({m})><j| on A{m}",
        )
        stages.append(lambda s, path, rnd=rnd: rnd)

    def phase_gate(s, path):
        total = sum(path[1:]) % d
        return (f"phase gate w^(-j*{total}) on A{n}", [LocalOperator(n, clock(d, -total))])

    stages.append(phase_gate)
    branches = _run(ghz(d, n), stages, target, exhaustive, seed, finalize=lambda s: s)
    for b in branches:
        b.phase = float(2 * np.pi * (sum(b.path[1:]) % d) / d)
    return ProtocolTrace("ghz-to-rsep", "exhaustive" if exhaustive else "sampled", branches,
                         target, seed, {"d": d, "N": n, "p": p.tolist()})


# -- repeat until success ----------------------------------------------------

def _success_operators(witness) -> list[LocalOperator]:
    ops = []
    for op in witness.ops:
        m = op.matrix / np.linalg.norm(op.matrix, 2)
        ops.append(LocalOperator(op.party, m))
    return ops


def _failure_operator(m: np.ndarray) -> np.ndarray:
    rest = np.eye(m.shape[1]) - m.conj().T @ m
    w, v = np.linalg.eigh((rest + rest.conj().T) / 2)
    w = np.clip(w, 0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def filter_rounds(witness) -> list[MeasurementRound]:
    """Two-outcome local measurements whose joint success branch applies the witness.

    Input and output dimensions of each success operator may differ; the
    failure operator is padded so both outcomes land in the same space.
    """
    rounds = []
    for op in _success_operators(witness):
        m = op.matrix
        fail = _failure_operator(m)
        dout, din = m.shape
        if dout != din:
            size = max(dout, din)
            pad_s = np.zeros((size, din), dtype=complex)
            pad_s[:dout] = m
            pad_f = np.zeros((size, din), dtype=complex)
            pad_f[:din] = fail
            m_elem, f_elem = pad_s, pad_f
        else:
            m_elem, f_elem = m, fail
        rounds.append(MeasurementRound(op.party, {"succ": m_elem, "fail": f_elem},
                                       description=f"filter on A{op.party}"))
    return rounds


def repeat_until_success(s: PureState, witness, target: PureState, max_trials: int = 1000,
                         seed: int | None = 0, stop_on_success: bool = True) -> ProtocolTrace:
    """Repeat a local filtering measurement on fresh copies of ``s``.

    Each party rescales its witness operator to unit operator norm; a trial
    succeeds when every party obtains the success outcome.  The exact
    single-trial probability comes from the exhaustive branch tree, trials
    are then sampled from that tree with ``seed``.
    """
    out = witness.apply(s)
    if out.dims != target.dims or overlap(out, target) < 1 - TOL_FID:
        raise StateError("witness invalid: it does not map the source to the target")
    ops = _success_operators(witness)
    rounds = filter_rounds(witness)

    # exhaustive tree: a branch ends at the first failure
    branches = []

    def rec(state, k, path, prob, steps):
        if k == len(rounds):
            final = state
            for op in ops:
                dout = op.matrix.shape[0]
                if final.dims[op.party - 1] != dout:
                    final = apply_local(final, LocalOperator(op.party, np.eye(dout, final.dims[op.party - 1])))
            branches.append(Branch(path, prob, steps, overlap(final, target), final))
            return
        for label in ("succ", "fail"):
            p, post = _branch(state, rounds[k], label)
            if post is None:
                continue
            rec_steps = steps + [StepRecord(rounds[k].description, label, p, checksum(post))]
            if label == "fail":
                branches.append(Branch(path + (label,), prob * p, rec_steps, 0.0, post))
            else:
                rec(post, k + 1, path + (label,), prob * p, rec_steps)

    rec(s, 0, (), 1.0, [])
    succ = [b for b in branches if b.path and all(x == "succ" for x in b.path)
            and len(b.path) == len(rounds)]
    p_exact = float(sum(b.probability for b in succ))
    direct = apply_local_all(s, ops)
    p_direct = direct.norm2() / s.norm2()
    if abs(p_exact - p_direct) > 1e-10:
        raise ProtocolError("branch tree disagrees with the product filter probability")
    if succ and succ[0].final_overlap < 1 - TOL_FID:
        raise ProtocolError("success branch does not produce the target")

    rng = np.random.default_rng(seed)
    probs = [b.probability for b in branches]
    trials = successes = 0
    first_success = None
    while trials < max_trials:
        trials += 1
        b = branches[int(rng.choice(len(branches), p=np.array(probs) / sum(probs)))]
        if b in succ:
            successes += 1
            if first_success is None:
                first_success = trials
            if stop_on_success:
                break
    sigma = math.sqrt(p_exact * (1 - p_exact) / trials) if trials else 0.0
    extras = {
        "single_trial_probability": p_exact,
        "trials": trials,
        "successes": successes,
        "first_success_trial": first_success,
        "empirical_frequency": successes / trials if trials else 0.0,
        "binomial_sigma": sigma,
        "analytic_success_bound": 1 - (1 - p_exact) ** trials,
        "stop_on_success": stop_on_success,
    }
    return ProtocolTrace("repeat-until-success", "exhaustive", branches, target, seed, extras,
                         success_probability=p_exact)


def apply_local_all(s: PureState, ops: Sequence[LocalOperator]) -> PureState:
    for op in ops:
        s = apply_local(s, op)
    return s


# -- teleportation -------------------------------------------------------------

def bell_basis_elements(d: int) -> dict:
    """Destructive generalized Bell measurement <Phi_ab| on a d*d-level system."""
    omega = np.exp(2j * np.pi / d)
    out = {}
    for a, b in itertools.product(range(d), repeat=2):
        phi = np.zeros(d * d, dtype=complex)
        for j in range(d):
            phi[j * d + (j + b) % d] = omega ** (a * j) / np.sqrt(d)
        out[(a, b)] = phi.conj()[None, :]
    return out


def bell_correction(d: int, a: int, b: int) -> np.ndarray:
    return clock(d, a) @ shift(d, -b)


def _canonical_pair_ops(resource: PureState) -> tuple[np.ndarray, np.ndarray]:
    u, sv, vh = np.linalg.svd(resource.tensor)
    return u.conj().T, vh.conj()


def teleport(resource: PureState, payload: PureState, exhaustive: bool = True,
             seed: int | None = None) -> ProtocolTrace:
    """Move a one-party ``payload`` from x to y through a maximally entangled pair (x, y)."""
    if resource.n != 2 or resource.dims[0] != resource.dims[1]:
        raise StateError("resource must be a two-party state with equal local dimensions")
    d = resource.dims[0]
    lam = np.linalg.svd(resource.tensor, compute_uv=False) ** 2
    lam = lam / lam.sum()
    if np.abs(lam - 1 / d).max() > TOL_FID:
        raise StateError("resource not maximally entangled")
    if payload.n != 1 or payload.dims[0] != d:
        raise StateError(f"payload must be a single {d}-level system")
    ux, uy = _canonical_pair_ops(resource)
    # parties: payload, x, y; payload and x sit in the same lab and are merged
    start = tensor_product(payload, resource)
    start = apply_locals(start, [LocalOperator(2, ux), LocalOperator(3, uy)])
    start = merge_parties(start, 1, 2)
    first = StepRecord("rotate resource into sum_k |kk>; payload and x held jointly", None, 1.0,
                       checksum(start))
    rnd = MeasurementRound(1, bell_basis_elements(d),
                           {(a, b): [LocalOperator(2, bell_correction(d, a, b))]
                            for a, b in itertools.product(range(d), repeat=2)},
                           description="generalized Bell measurement on (payload, x); "
                                       "correction Z^a X^-b on y")
    branches = _run(start, [lambda s, path: rnd], payload, exhaustive, seed)
    for b in branches:
        b.steps.insert(0, first)
    return ProtocolTrace("teleport", "exhaustive" if exhaustive else "sampled", branches,
                         payload, seed, {"d": d})


# -- finite-copy demonstration plans -----------------------------------------

@dataclass
class PlanBlock:
    """Steps that build one destination block from fresh source copies."""

    parties: tuple[int, ...]
    root: int
    tree: list[tuple[int, int]]      # (parent, child) edges of the source graph
    assembly: str                    # "local", "ghz" or "teleport"
    paths: dict = field(default_factory=dict)   # party -> path from root, for teleport

    def describe(self) -> list[str]:
        if self.assembly == "local":
            return [f"A{self.parties[0]} prepares its factor locally"]
        if self.assembly == "ghz":
            lines = [f"extract Bell pair on edge (A{u},A{v}) from a fresh source copy"
                     for u, v in self.tree]
            lines.append(f"merge pairs into GHZ_2 at shared parties (root A{self.root})")
            extra = sorted({p for e in self.tree for p in e} - set(self.parties))
            if extra:
                lines.append("measure " + ",".join(f"A{p}" for p in extra)
                             + " in the Fourier basis")
            lines.append("apply local isometries onto the destination block")
            return lines
        lines = [f"A{self.root} prepares block {list(self.parties)} locally"]
        for j, path in self.paths.items():
            lines.append(f"Bell pairs A{self.root}-A{j} along path "
                         + "-".join(f"A{p}" for p in path) + f"; teleport the A{j} share")
        return lines


@dataclass
class DemoPlan:
    route: str                       # "filter" or "bell-merge-teleport"
    blocks: list[PlanBlock]
    witness: object | None = None

    def describe(self) -> list[str]:
        if self.route == "filter":
            return ["apply the SLOCC witness as one local filtering round per party"]
        return [line for b in self.blocks for line in b.describe()]


class _Lab:
    """A register of subsystems, each held by one party.

    Every LOCC round is evaluated on all outcomes and must leave the same
    state on each; one outcome is then followed with a seeded generator.
    """

    def __init__(self, seed: int | None):
        self.state: PureState | None = None
        self.owners: list[int] = []
        self.ids: list[int] = []
        self.next_id = 0
        self.steps: list[StepRecord] = []
        self.path: list = []
        self.slocc_probability = 1.0
        self.rng = np.random.default_rng(seed)

    def pos(self, sid: int) -> int:
        return self.ids.index(sid) + 1

    def add(self, s: PureState, owners: Sequence[int], description: str) -> list[int]:
        new = list(range(self.next_id, self.next_id + s.n))
        self.next_id += s.n
        self.state = s if self.state is None else tensor_product(self.state, s)
        self.owners += list(owners)
        self.ids += new
        self._record(description, None, 1.0)
        return new

    def _record(self, description, outcome, p):
        self.steps.append(StepRecord(description, outcome, p, checksum(self.state)))

    def merge(self, a: int, b: int):
        """Combine subsystems a and b (same owner) into subsystem a."""
        if self.owners[self.pos(a) - 1] != self.owners[self.pos(b) - 1]:
            raise ProtocolError("merging subsystems held by different parties")
        pa, pb = self.pos(a), self.pos(b)
        self.state = merge_parties(self.state, pa, pb)
        keep, gone = (pa, pb) if pa < pb else (pb, pa)
        sid_keep = self.ids[keep - 1]
        del self.owners[gone - 1], self.ids[gone - 1]
        if sid_keep != a:
            # merged system sits at the earlier slot; let it carry id a
            self.ids[keep - 1] = a

    def measure(self, sid: int, elements: dict, corrections: dict, description: str):
        rnd = MeasurementRound(
            self.pos(sid), elements,
            {k: [LocalOperator(self.pos(t), u) for t, u in ops]
             for k, ops in corrections.items()},
            description=description)
        outcomes = []
        for label in rnd.labels:
            p, post = _branch(self.state, rnd, label)
            if post is not None:
                outcomes.append((label, p, post))
        total = sum(p for _, p, _ in outcomes)
        if abs(total - 1) > TOL_PROB:
            raise ProtocolError(f"'{description}': probabilities sum to {total}")
        ref = outcomes[0][2]
        for label, _, post in outcomes[1:]:
            if post.dims != ref.dims or overlap(post, ref) < 1 - TOL_PROB:
                raise ProtocolError(f"'{description}': outcome {label!r} leaves a different state")
        ps = np.array([p for _, p, _ in outcomes])
        label, p, post = outcomes[int(self.rng.choice(len(outcomes), p=ps / ps.sum()))]
        self.state = post
        self.path.append(label)
        self._record(f"{description} [{len(outcomes)} outcomes agree]", label, p)
        self._drop_trivial()

    def local(self, sid: int, m: np.ndarray, description: str):
        self.state = apply_local(self.state, LocalOperator(self.pos(sid), m))
        self._record(description, None, 1.0)

    def _drop_trivial(self):
        keep = [k for k, d in enumerate(self.state.dims) if d != 1]
        if len(keep) == len(self.owners):
            return
        if not keep:
            raise ProtocolError("register emptied")
        self.state = PureState(tuple(self.state.dims[k] for k in keep), self.state.amps)
        self.owners = [self.owners[k] for k in keep]
        self.ids = [self.ids[k] for k in keep]

    def subsystems_of(self, owners: Sequence[int]) -> list[int]:
        return [sid for sid, o in zip(self.ids, self.owners) if o in owners]


def _bell_pair(lab: _Lab, src: PureState, u: int, v: int, attempts: int, seed: int) -> tuple[int, int]:
    tr = bell_extract(src, u, v, attempts, seed)
    if tr is None:
        raise ProtocolError(f"no Bell pair found on edge (A{u},A{v})")
    lab.slocc_probability *= tr.success_probability
    for st in tr.branches[0].steps:
        lab.steps.append(StepRecord(f"[fresh copy] {st.description}", st.outcome,
                                    st.probability, st.checksum))
    out = tr.output.normalized()
    return tuple(lab.add(out, (u, v), f"Bell pair (A{u},A{v}) joins the register"))


def _fourier_out(lab: _Lab, sid: int, partner: int, label: str):
    elements = {k: np.conj(f)[None, :] for k, f in enumerate(_fourier_vectors(2))}
    lab.measure(sid, elements, {k: [(partner, clock(2, k))] for k in range(2)},
                f"Fourier measurement on {label}; phase fix Z^k on A{lab.owners[lab.pos(partner) - 1]}")


def _ghz_over_tree(lab: _Lab, src, root: int, tree, attempts: int, seed: int) -> dict:
    """GHZ_2 over the tree vertices; returns owner -> subsystem id."""
    holder: dict[int, int] = {}
    comp: list[int] = []
    merge_el = _merge_elements(2, compress=True)
    for u, v in tree:
        a, b = _bell_pair(lab, src, u, v, attempts, seed)
        if not holder:
            holder = {u: a, v: b}
            comp = [a, b]
            continue
        x = holder[u]
        lab.merge(x, a)
        lab.measure(x, merge_el, {i: [(b, shift(2, -i))] for i in range(2)},
                    f"merge at A{u}: project onto span{{|j,j+i>}}, keep |j>")
        holder[v] = b
        comp.append(b)
    return holder


def _ghz_isometries(block: PureState):
    """Isometries V_i with (V_1 x ... x V_n) GHZ_2 ~ block, or None."""
    from .structure import ghz_witness

    try:
        wit = ghz_witness(block)
    except StateError:
        return None
    if wit is None or wit.ops[0].matrix.shape[1] != 2:
        return None
    mats = [op.matrix for op in wit.ops]
    scale = np.linalg.norm(mats[0][:, 0])
    mats[0] = mats[0] / scale
    for m in mats:
        if np.abs(m.conj().T @ m - np.eye(2)).max() > 1e-9:
            return None
    return mats


def _isometry_round(m: np.ndarray) -> dict:
    """A measurement whose first outcome applies isometry ``m``."""
    rest = _failure_operator(m)
    if np.linalg.norm(rest) < 1e-12:
        return {"apply": m}
    return {"apply": m, "off-support": rest}


def _run_block(lab: _Lab, src: PureState, dst_block: PureState, pb: PlanBlock,
               attempts: int, seed: int) -> dict:
    if pb.assembly == "local":
        sid = lab.add(dst_block.normalized(), pb.parties, f"A{pb.parties[0]} prepares its factor")
        return {pb.parties[0]: sid[0]}
    if pb.assembly == "ghz":
        holder = _ghz_over_tree(lab, src, pb.root, pb.tree, attempts, seed)
        for z in sorted(set(holder) - set(pb.parties)):
            partner = holder[pb.parties[0]]
            _fourier_out(lab, holder.pop(z), partner, f"A{z}")
        mats = _ghz_isometries(dst_block)
        for p, m in zip(pb.parties, mats):
            lab.measure(holder[p], _isometry_round(m), {}, f"isometry on A{p}")
        return holder
    # teleport assembly
    r = pb.root
    dims = dst_block.dims
    local = lab.add(dst_block.normalized(), [r] * len(pb.parties),
                    f"A{r} prepares the block state locally")
    final = {}
    for k, p in enumerate(pb.parties):
        if p == r:
            final[p] = local[k]
            continue
        d = dims[k]
        nbits = max(1, math.ceil(math.log2(d)))
        size = 2 ** nbits
        if size != d:
            lab.local(local[k], np.eye(size, d), f"A{r} embeds the A{p} share into {size} levels")
        pairs = []
        for _ in range(nbits):
            path = pb.paths[p]
            tree = list(zip(path[:-1], path[1:]))
            holder = _ghz_over_tree(lab, src, path[0], tree, attempts, seed)
            for z in path[1:-1]:
                _fourier_out(lab, holder.pop(z), holder[r], f"A{z}")
            pairs.append((holder[r], holder[p]))
        x, y = pairs[0]
        for a, b in pairs[1:]:
            lab.merge(x, a)
            lab.merge(y, b)
        lab.merge(local[k], x)
        lab.measure(local[k], bell_basis_elements(size),
                    {(a, b): [(y, bell_correction(size, a, b))]
                     for a, b in itertools.product(range(size), repeat=2)},
                    f"teleport the A{p} share: Bell measurement at A{r}, Z^a X^-b at A{p}")
        if size != d:
            lab.measure(y, _isometry_round(np.eye(d, size)), {},
                        f"A{p} truncates to {d} levels")
        final[p] = y
    return final


def execute_plan(plan: DemoPlan, src: PureState, dst: PureState, seed: int = 0,
                 attempts: int = 64) -> ProtocolTrace:
    """Carry out a demonstration plan on fresh copies of ``src``."""
    from .structure import restrict

    lab = _Lab(seed)
    if plan.route == "filter":
        lab.add(src.normalized(), range(1, src.n + 1), "source copy")
        for rnd in filter_rounds(plan.witness):
            p, post = _branch(lab.state, rnd, "succ")
            if post is None:
                raise ProtocolError("filter annihilates the source")
            lab.state = post
            lab.slocc_probability *= p
            lab.path.append("succ")
            lab._record(rnd.description, "succ", p)
        out = lab.state
        for op in plan.witness.ops:
            dout = op.matrix.shape[0]
            if out.dims[op.party - 1] != dout:
                out = apply_local(out, LocalOperator(op.party, np.eye(dout, out.dims[op.party - 1])))
        final = out
    else:
        holders = {}
        for pb in plan.blocks:
            block_state = restrict(dst, pb.parties)
            holders.update(_run_block(lab, src, block_state, pb, attempts, seed))
        order = [lab.pos(holders[p]) for p in range(1, dst.n + 1)]
        if len(order) != lab.state.n:
            raise ProtocolError("register holds leftover subsystems")
        final = permute_parties(lab.state, order)
    ov = overlap(final, dst) if final.dims == dst.dims else 0.0
    branch = Branch(tuple(lab.path), lab.slocc_probability, lab.steps, ov, final)
    return ProtocolTrace("mcslocc-plan", "slocc", [branch], dst, seed,
                         {"route": plan.route, "plan": plan.describe(),
                          "source_copies": sum(1 for s in lab.steps
                                               if s.description.startswith("[fresh copy] rank"))
                          + (1 if plan.route == "filter" else 0)},
                         success_probability=lab.slocc_probability)
