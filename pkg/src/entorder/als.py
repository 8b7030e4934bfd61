"""Alternating least squares search for CP decompositions of complex tensors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FIT_TOL = 1e-8
BORDER_GUARD = 1e6


@dataclass
class AlsResult:
    rank: int
    factors: list[np.ndarray] | None  # one (d_k x rank) matrix per mode
    residual: float
    border_artifact: bool
    restarts_used: int

    @property
    def success(self) -> bool:
        return self.factors is not None


def _unfold(t: np.ndarray, mode: int) -> np.ndarray:
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1)


def _khatri_rao(mats: list[np.ndarray]) -> np.ndarray:
    r = mats[0].shape[1]
    out = mats[0]
    for m in mats[1:]:
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, r)
    return out


def reconstruct(factors: list[np.ndarray]) -> np.ndarray:
    shape = tuple(f.shape[0] for f in factors)
    return (factors[0] @ _khatri_rao(factors[1:]).T).reshape(shape)


def _term_norms(factors: list[np.ndarray]) -> np.ndarray:
    return np.prod([np.linalg.norm(f, axis=0) for f in factors], axis=0)


def _single_run(t: np.ndarray, rank: int, iterations: int, rng) -> tuple[list, float]:
    n = t.ndim
    unfolded = [_unfold(t, k) for k in range(n)]
    factors = [rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
               for d in t.shape]
    res = np.inf
    history = []
    for it in range(iterations):
        for k in range(n):
            others = [factors[j] for j in range(n) if j != k]
            kr = _khatri_rao(others)
            # T_(k) ~= F_k @ kr.T
            sol, *_ = np.linalg.lstsq(kr, unfolded[k].T, rcond=None)
            factors[k] = sol.T
        # rebalance column norms to keep the iteration well scaled
        norms = [np.linalg.norm(f, axis=0) + 1e-300 for f in factors]
        geo = np.prod(norms, axis=0) ** (1.0 / n)
        factors = [f / nm * geo for f, nm in zip(factors, norms)]
        res = np.linalg.norm(reconstruct(factors) - t)
        if res < FIT_TOL * 1e-2:
            break
        history.append(res)
        if it >= 100 and it % 50 == 0:
            old = history[-50]
            if res > 1e-3 and res > 0.999 * old:
                break
    return factors, float(res)


def als_search(t: np.ndarray, rank: int, restarts: int = 32, iterations: int = 2000,
               seed: int = 0) -> AlsResult:
    """Look for a rank-``rank`` CP decomposition of ``t``.

    Restart ``i`` is seeded with ``seed + i``.  A fit whose relative residual
    is below ``FIT_TOL`` but whose terms blow up beyond ``BORDER_GUARD`` times
    the tensor norm is rejected as a border-rank artifact.
    """
    t = np.asarray(t, dtype=complex)
    scale = np.linalg.norm(t)
    tn = t / scale
    best_res = np.inf
    saw_border = False
    for i in range(restarts):
        rng = np.random.default_rng(seed + i)
        factors, res = _single_run(tn, rank, iterations, rng)
        best_res = min(best_res, res)
        if res < FIT_TOL:
            if _term_norms(factors).max() > BORDER_GUARD:
                saw_border = True
                continue
            factors = [f.copy() for f in factors]
            factors[0] = factors[0] * scale
            return AlsResult(rank, factors, res, False, i + 1)
    return AlsResult(rank, None, best_res, saw_border, restarts)
