"""Named fixture states.

Kets are 0-based: GHZ_d is sum_{i=0}^{d-1} |i...i>.  Every entry carries the
invariants it is known to have so the test suite can self-check the catalog.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .statecore import PureState, from_terms, ghz, tensor_product


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    build: Callable[[], PureState]
    description: str
    rank: int | None = None
    local_ranks: tuple[int, ...] | None = None
    partition: tuple[tuple[int, ...], ...] | None = None


def w_state() -> PureState:
    return from_terms((2, 2, 2), [(0, 0, 1), (0, 1, 0), (1, 0, 0)])


def bell(d: int = 2) -> PureState:
    return ghz(d, 2)


def theta_state(cos_theta: float = 0.8) -> PureState:
    sin_theta = np.sqrt(1 - cos_theta ** 2)
    return from_terms((2, 2), {(0, 0): cos_theta, (1, 1): sin_theta})


PSI_TERMS = {
    1: [(0, 0, 0), (1, 1, 1), (0, 2, 2), (1, 2, 2)],
    2: [(0, 1, 0), (0, 0, 1), (1, 1, 2), (1, 2, 1)],
    3: [(0, 0, 0), (1, 1, 1), (0, 2, 2)],
    4: [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 2), (1, 2, 1)],
    5: [(1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 2, 2)],
    6: [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 2, 2)],
}
PSI_RANKS = {1: 3, 2: 4, 3: 3, 4: 4, 5: 4, 6: 4}


def psi(k: int) -> PureState:
    return from_terms((2, 3, 3), PSI_TERMS[k])


def fig1_state() -> PureState:
    kets = ["0000", "0110", "1200", "1310", "0001", "0111", "1201", "1311"]
    return from_terms((2, 4, 2, 2), [tuple(int(c) for c in k) for k in kets])


def tgp10_state() -> PureState:
    plus = np.ones(2, dtype=complex)
    amps = np.kron(np.kron(plus, plus), plus)
    amps[0] += 1
    return PureState((2, 2, 2), amps)


def incomparable_rank4() -> PureState:
    # |111>+|122>+|213>+|224> in 1-based kets
    return from_terms((2, 2, 4), [(0, 0, 0), (0, 1, 1), (1, 0, 2), (1, 1, 3)])


def ghz_squared() -> PureState:
    g = ghz(2, 3)
    return tensor_product(g, g, {1: 1, 2: 2, 3: 3})


def _entries() -> dict[str, CatalogEntry]:
    e = {}

    def add(entry):
        e[entry.name] = entry

    add(CatalogEntry("Bell", bell, "|00>+|11>", 2, (2, 2), ((1, 2),)))
    add(CatalogEntry("theta08", theta_state, "0.8|00>+0.6|11>", 2, (2, 2), ((1, 2),)))
    add(CatalogEntry("W", w_state, "|001>+|010>+|100>", 3, (2, 2, 2), ((1, 2, 3),)))
    add(CatalogEntry("GHZ2x3", lambda: ghz(2, 3), "GHZ_2 on 3 qubits", 2, (2, 2, 2),
                     ((1, 2, 3),)))
    add(CatalogEntry("GHZ2sq", ghz_squared, "GHZ_2 (x) GHZ_2, copies grouped per party",
                     4, (4, 4, 4), ((1, 2, 3),)))
    for k in range(1, 7):
        lr = (2, 3, 3)
        add(CatalogEntry(f"Psi{k}", (lambda k=k: psi(k)), f"2x3x3 orbit representative {k}",
                         PSI_RANKS[k], lr, ((1, 2, 3),)))
    add(CatalogEntry("fig1", fig1_state, "four-party example with graph A1-A2-A3, A4 isolated",
                     4, (2, 4, 2, 1), ((1, 2, 3), (4,))))
    add(CatalogEntry("tgp10", tgp10_state, "|000>+(|0>+|1>)^(x)3", 2, (2, 2, 2), ((1, 2, 3),)))
    add(CatalogEntry("rank4inc", incomparable_rank4, "|111>+|122>+|213>+|224> (1-based)",
                     4, (2, 2, 4), ((1, 2, 3),)))
    add(CatalogEntry("prod3", lambda: from_terms((2, 2, 2), [(0, 0, 0)]), "|000>",
                     1, (1, 1, 1), ((1,), (2,), (3,))))
    add(CatalogEntry("Bell_0", lambda: tensor_product(bell(), from_terms((2,), [(0,)])),
                     "Bell(1,2) (x) |0>", 2, (2, 2, 1), ((1, 2), (3,))))
    add(CatalogEntry("0_Bell", lambda: tensor_product(from_terms((2,), [(0,)]), bell()),
                     "|0> (x) Bell(2,3)", 2, (1, 2, 2), ((1,), (2, 3))))
    for d in (3, 4, 5):
        add(CatalogEntry(f"GHZ{d}", (lambda d=d: ghz(d, 3)), f"GHZ_{d} on 3 parties",
                         d, (d, d, d), ((1, 2, 3),)))
    return e


CATALOG = _entries()
_GHZ_RE = re.compile(r"^GHZ(\d+)x(\d+)$")


def get(name: str) -> PureState:
    if name in CATALOG:
        return CATALOG[name].build()
    m = _GHZ_RE.match(name)
    if m:
        d, n = int(m.group(1)), int(m.group(2))
        if d >= 1 and n >= 1:
            return ghz(d, n)
    raise KeyError(f"unknown catalog entry {name!r}")


def names() -> list[str]:
    return list(CATALOG)
