"""Tensor rank of 2 x M x N tensors from the Kronecker structure of a matrix pencil.

The two slices A0, A1 of the tensor (along the dimension-2 party) define the
pencil s*A0 + t*A1.  Its Kronecker canonical form consists of L_eps blocks
(column minimal indices), L_eta^T blocks (row minimal indices) and a regular
part with Jordan blocks.  The rank is

    sum_{eps >= 1} (eps + 1) + sum_{eta >= 1} (eta + 1) + n_reg + delta

where delta is the largest number of Jordan blocks of size >= 2 belonging to
a single eigenvalue.  Every quantity is obtained from ranks of block Toeplitz
matrices, so no explicit canonical-form transformation is needed.

Integer / small-rational inputs are handled exactly: minimal indices with
Gaussian-rational arithmetic, eigenvalues as roots of an exact polynomial
refined to 50 digits, Jordan counts from high-precision singular values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np
from sympy import Symbol
from sympy.polys.domains import QQ, QQ_I
from sympy.polys.matrices import DomainMatrix

EIG_CLUSTER_TOL = 1e-8
NUMERIC_RANK_TOL = 1e-9
CLUSTER_TOL = 1e-3
_MAX_DEN = 10**6
_MU = Symbol("mu")


@dataclass
class PencilStructure:
    col_indices: list[int]
    row_indices: list[int]
    n_reg: int
    # eigenvalue -> (geometric multiplicity, number of blocks of size >= 2)
    eigen: list[tuple[complex, int, int]] = field(default_factory=list)
    exact: bool = False

    @property
    def delta(self) -> int:
        return max((big for _, _, big in self.eigen), default=0)

    @property
    def rank(self) -> int:
        return (sum(e + 1 for e in self.col_indices if e >= 1)
                + sum(e + 1 for e in self.row_indices if e >= 1)
                + self.n_reg + self.delta)


def _snap(x: float) -> Fraction | None:
    f = Fraction(x).limit_denominator(_MAX_DEN)
    if abs(float(f) - x) <= 1e-12 * max(1.0, abs(x)):
        return f
    return None


def _as_gaussian_rational(a: np.ndarray):
    """Entries as Gaussian rationals, or None if some entry is not a small rational."""
    out = []
    for z in a.reshape(-1):
        re, im = _snap(float(z.real)), _snap(float(z.imag))
        if re is None or im is None:
            return None
        out.append(QQ_I(QQ(re.numerator, re.denominator), QQ(im.numerator, im.denominator)))
    return np.array(out, dtype=object).reshape(a.shape)


class _Field:
    """Rank computations either exactly over Q(i) or in floating point."""

    def __init__(self, a0: np.ndarray, a1: np.ndarray):
        scale = max(np.abs(a0).max(), np.abs(a1).max())
        self.a0f, self.a1f = a0 / scale, a1 / scale
        e0, e1 = _as_gaussian_rational(a0), _as_gaussian_rational(a1)
        self.exact = e0 is not None and e1 is not None
        if self.exact:
            self.a0, self.a1 = e0, e1
            self.zero = QQ_I(0, 0)
        else:
            self.a0, self.a1 = self.a0f, self.a1f
            self.zero = 0.0

    def scalar(self, c: int):
        return QQ_I(c, 0) if self.exact else float(c)

    def zeros(self, m, n):
        z = np.empty((m, n), dtype=object if self.exact else complex)
        z[...] = self.zero
        return z

    def rank(self, m: np.ndarray) -> int:
        if m.size == 0:
            return 0
        if self.exact:
            return DomainMatrix(m.tolist(), m.shape, QQ_I).rank()
        s = np.linalg.svd(m.astype(complex), compute_uv=False)
        return int(np.sum(s > NUMERIC_RANK_TOL * max(s[0], 1e-300)))


def _toeplitz(fld: _Field, p: np.ndarray, q: np.ndarray, k: int) -> np.ndarray:
    """Matrix of x(s,t) = sum_i x_i s^(k-i) t^i  ->  coefficients of (s P + t Q) x."""
    m, n = p.shape
    t = fld.zeros((k + 2) * m, (k + 1) * n)
    for i in range(k + 1):
        t[i * m:(i + 1) * m, i * n:(i + 1) * n] = p
        t[(i + 1) * m:(i + 2) * m, i * n:(i + 1) * n] = q
    return t


def _minimal_indices(fld: _Field, p: np.ndarray, q: np.ndarray, count: int) -> list[int]:
    """Column minimal indices of s*p + t*q given how many there are."""
    indices: list[int] = []
    n = p.shape[1]
    prev_dim, prev_le = 0, 0
    k = 0
    while len(indices) < count:
        dim = (k + 1) * n - fld.rank(_toeplitz(fld, p, q, k))
        le = dim - prev_dim  # number of indices <= k
        indices += [k] * (le - prev_le)
        prev_dim, prev_le = dim, le
        k += 1
        if k > n + p.shape[0] + 1:
            raise ArithmeticError("minimal index computation did not terminate")
    return indices


def _normal_rank(fld: _Field, rng) -> int:
    best = 0
    for _ in range(3):
        c = int(rng.integers(2, 50))
        best = max(best, fld.rank(fld.a0 + fld.a1 * fld.scalar(c)))
    return best


def _mp_rank(rows, tol_digits: int = 30) -> tuple[int, int]:
    a = mpmath.matrix(rows)
    s = mpmath.svd_c(a, compute_uv=False)
    vals = sorted((abs(s[i]) for i in range(len(s))), reverse=True)
    if not vals or vals[0] == 0:
        return 0, a.cols
    thr = vals[0] * mpmath.mpf(10) ** (-tol_digits)
    return sum(1 for v in vals if v > thr), a.cols


def _eigen_exact(fld: _Field, b, r: int, n_reg: int, rng) -> list[complex]:
    """Distinct eigenvalues mu of a0 + mu*b, as 50-digit mpc numbers."""
    ring = QQ_I[_MU]
    m, n = fld.a0.shape
    pencil = [[ring.convert(fld.a0[i, j]) + ring.convert(b[i, j]) * ring.gens[0]
               for j in range(n)] for i in range(m)]
    g = None
    for _ in range(8):
        u = rng.integers(-3, 4, size=(r, m))
        v = rng.integers(-3, 4, size=(n, r))
        comp = [[sum((ring.convert(int(u[i, a])) * pencil[a][c] * ring.convert(int(v[c, j]))
                      for a in range(m) for c in range(n)), ring.zero)
                 for j in range(r)] for i in range(r)]
        det = DomainMatrix(comp, (r, r), ring).det()
        if det == ring.zero:
            continue
        g = det if g is None else ring.gcd(g, det)
        if g.degree() == n_reg:
            break
    if g is None or g.degree() != n_reg:
        raise ArithmeticError("could not isolate the regular part of the pencil")
    if n_reg == 0:
        return []
    sqf = ring.exquo(g, ring.gcd(g, g.diff(ring.gens[0])))
    deg = sqf.degree()
    terms = {mon[0]: c for mon, c in sqf.terms()}
    coeffs = []
    for k in range(deg, -1, -1):
        c = QQ_I.convert(terms.get(k, QQ_I.zero))
        coeffs.append(mpmath.mpc(mpmath.mpf(c.x.numerator) / c.x.denominator,
                                 mpmath.mpf(c.y.numerator) / c.y.denominator))
    if deg == 1:
        return [-coeffs[1] / coeffs[0]]
    return list(mpmath.polyroots(coeffs, maxsteps=500, extraprec=300))


def _eigen_numeric(a0, b, r, rng) -> list[complex]:
    from scipy.linalg import eigvals

    m, n = a0.shape
    cands = []
    for _ in range(2):
        u = rng.standard_normal((r, m)) + 1j * rng.standard_normal((r, m))
        v = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
        w = eigvals(u @ a0 @ v, -(u @ b @ v))
        cands.append(w[np.isfinite(w)])
    first, second = cands
    # a defective eigenvalue of multiplicity k splits by about eps**(1/k); the
    # mean over its whole cluster is still accurate, so clusters are wide
    keep = [z for z in first
            if second.size and np.min(np.abs(second - z)) <= CLUSTER_TOL * (1 + abs(z))]
    clusters: list[list[complex]] = []
    for z in sorted(keep, key=lambda z: (z.real, z.imag)):
        for cl in clusters:
            if abs(np.mean(cl) - z) <= CLUSTER_TOL * (1 + abs(z)):
                cl.append(z)
                break
        else:
            clusters.append([z])
    return [complex(np.mean(cl)) for cl in clusters]


def _jordan_counts(fld: _Field, b, mu, p: int) -> tuple[int, int]:
    """(number of Jordan blocks, number of blocks of size >= 2) at eigenvalue mu."""
    m, n = fld.a0.shape
    if fld.exact:
        def conv(z):
            z = QQ_I.convert(z)
            return mpmath.mpc(mpmath.mpf(z.x.numerator) / z.x.denominator,
                              mpmath.mpf(z.y.numerator) / z.y.denominator)

        a0 = [[conv(fld.a0[i, j]) for j in range(n)] for i in range(m)]
        bb = [[conv(b[i, j]) for j in range(n)] for i in range(m)]
        pm = [[a0[i][j] + mu * bb[i][j] for j in range(n)] for i in range(m)]
        w1 = pm
        w2 = ([pm[i] + [0] * n for i in range(m)]
              + [bb[i] + pm[i] for i in range(m)])
        r1, c1 = _mp_rank(w1)
        r2, c2 = _mp_rank(w2)
    else:
        pm = fld.a0 + mu * b
        w2 = np.block([[pm, np.zeros_like(pm)], [b, pm]])
        r1, c1 = fld.rank(pm), n
        r2, c2 = fld.rank(w2), 2 * n
    g1 = (c1 - r1) - p
    g2 = (c2 - r2) - 2 * p
    return g1, g2 - g1


def pencil_structure(a0: np.ndarray, a1: np.ndarray, seed: int = 0) -> PencilStructure:
    a0 = np.asarray(a0, dtype=complex)
    a1 = np.asarray(a1, dtype=complex)
    if a0.shape != a1.shape:
        raise ValueError("pencil slices differ in shape")
    rng = np.random.default_rng(seed)
    fld = _Field(a0, a1)
    m, n = a0.shape
    r = _normal_rank(fld, rng)
    cols = _minimal_indices(fld, fld.a0, fld.a1, n - r)
    rows = _minimal_indices(fld, fld.a0.T.copy(), fld.a1.T.copy(), m - r)
    n_reg = n - sum(e + 1 for e in cols) - sum(rows)
    if n_reg != m - sum(cols) - sum(e + 1 for e in rows) or n_reg < 0:
        raise ArithmeticError("inconsistent Kronecker block sizes")
    st = PencilStructure(cols, rows, n_reg, exact=fld.exact)
    if n_reg == 0:
        return st
    # move every eigenvalue off infinity: a0 + mu * (a1 + c a0)
    for c in itertools.chain([0, 1, -1, 2, -2, 3], range(4, 100)):
        b = fld.a1 + fld.a0 * fld.scalar(c)
        if fld.rank(b) == r:
            break
    else:
        raise ArithmeticError("no regular direction found for the pencil")
    with mpmath.workdps(60):
        if fld.exact:
            eigs = _eigen_exact(fld, b, r, n_reg, rng)
        else:
            eigs = _eigen_numeric(fld.a0, b, r, rng)
        p = n - r
        for mu in eigs:
            geo, big = _jordan_counts(fld, b, mu, p)
            if geo > 0:
                st.eigen.append((complex(mu), geo, big))
    return st


def rank_2mn(t: np.ndarray, seed: int = 0) -> tuple[int, PencilStructure]:
    """Tensor rank of a 2 x M x N array via its pencil structure."""
    t = np.asarray(t, dtype=complex)
    if t.ndim != 3 or t.shape[0] != 2:
        raise ValueError(f"expected a 2 x M x N tensor, got shape {t.shape}")
    st = pencil_structure(t[0], t[1], seed=seed)
    return st.rank, st
