"""Ground-truth and baseline algorithms.

``exact_min_discrepancy`` enumerates colorings exhaustively (capped at
n = 24, sign-symmetry halved, blocked so the per-row sums of a shared
prefix are reused across a whole suffix batch).  ``random_coloring`` is
the trivial baseline.  ``beck_fiala_rounding`` is the classical kernel
walk: keep every set with more than t floating variables at exactly zero
discrepancy by moving inside the null space of their incidence rows until
a variable hits ±1, then sign-fix the rest; the result never exceeds
2t - 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instances import InputError, Instance, SetSystemInstance, discrepancy

ENUMERATION_CAP = 24

_RANK_TOL = 1e-10


def _sign_block(nbits: int) -> np.ndarray:
    """All ±1 rows of length nbits, in binary counting order."""
    if nbits == 0:
        return np.ones((1, 0))
    codes = np.arange(2 ** nbits, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(nbits)[None, :]) & 1
    return bits.astype(np.float64) * 2.0 - 1.0


def exact_min_discrepancy(instance: Instance, cap: int = ENUMERATION_CAP) -> tuple[float, np.ndarray]:
    """Exhaustive minimum of the max row discrepancy, with one witness.

    The last element is pinned to +1 (global sign flips give the same
    value); low bits are enumerated in one vectorized block per high-bit
    pattern.
    """
    n = instance.n
    if n > cap:
        raise InputError(
            f"exact enumeration refused: n={n} exceeds the cap of {cap}")
    w = instance.weights
    m = w.shape[0]
    if n == 0:
        return 0.0, np.zeros(0, dtype=np.int8)
    if m == 0:
        return 0.0, np.ones(n, dtype=np.int8)

    n_low = min(12, n - 1)
    n_high = n - n_low                      # includes the pinned element
    low_signs = _sign_block(n_low)          # (2^n_low, n_low)
    low_sums = low_signs @ w[:, :n_low].T   # (2^n_low, m)
    high_signs = _sign_block(n_high - 1)    # last element pinned to +1
    w_high = w[:, n_low:]

    best = np.inf
    best_pair = (0, 0)
    for h in range(high_signs.shape[0]):
        sh = np.concatenate([high_signs[h], [1.0]])
        base = w_high @ sh
        cand = np.abs(low_sums + base[None, :]).max(axis=1)
        i = int(np.argmin(cand))
        if cand[i] < best:
            best = float(cand[i])
            best_pair = (i, h)
            if best == 0.0:
                break
    i, h = best_pair
    witness = np.concatenate([low_signs[i], high_signs[h], [1.0]])
    return best, witness.astype(np.int8)


@dataclass
class BaselineReport:
    """Best coloring found by a baseline and how it was produced."""

    algorithm: str
    value: float
    coloring: np.ndarray
    trials: int
    seed: int


def random_coloring(instance: Instance, seed: int, trials: int) -> BaselineReport:
    """Best of ``trials`` uniform ±1 colorings."""
    if trials < 1:
        raise InputError("need at least one trial")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    w = instance.weights
    best = np.inf
    best_coloring = np.ones(instance.n, dtype=np.int8)
    done = 0
    while done < trials:
        batch = min(trials - done, 4096)
        signs = rng.integers(0, 2, size=(batch, instance.n), dtype=np.int64) * 2 - 1
        if w.shape[0]:
            vals = np.abs(signs @ w.T).max(axis=1)
        else:
            vals = np.zeros(batch)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best = float(vals[i])
            best_coloring = signs[i].astype(np.int8)
        done += batch
    if instance.n == 0:
        best = 0.0
    return BaselineReport("random", best, best_coloring, trials, seed)


def _kernel_vector(A: np.ndarray, tol: float = _RANK_TOL) -> np.ndarray | None:
    """A nonzero null vector of A via elimination with partial pivoting."""
    A = np.array(A, dtype=np.float64)
    rows, cols = A.shape
    pivot_col_of_row: list[int] = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        p = r + int(np.argmax(np.abs(A[r:, c])))
        if abs(A[p, c]) <= tol:
            continue
        A[[r, p]] = A[[p, r]]
        A[r] = A[r] / A[r, c]
        mask = np.ones(rows, dtype=bool)
        mask[r] = False
        A[mask] -= np.outer(A[mask, c], A[r])
        pivot_col_of_row.append(c)
        r += 1
    pivots = set(pivot_col_of_row)
    free = [c for c in range(cols) if c not in pivots]
    if not free:
        return None
    f = free[0]
    y = np.zeros(cols)
    y[f] = 1.0
    for row_idx, c in enumerate(pivot_col_of_row):
        y[c] = -A[row_idx, f]
    return y


def beck_fiala_rounding(instance: SetSystemInstance) -> np.ndarray:
    """Iterated rounding for set systems; max discrepancy at most 2t - 1."""
    if not isinstance(instance, SetSystemInstance):
        raise InputError("iterated rounding applies to set systems")
    n = instance.n
    t = instance.t
    x = np.zeros(n)
    floating = np.ones(n, dtype=bool)
    inc = instance.weights

    while floating.any():
        float_idx = np.flatnonzero(floating)
        counts = inc[:, float_idx].sum(axis=1)
        active = counts > t
        if not active.any():
            break
        A = inc[np.ix_(active, float_idx)]
        y = _kernel_vector(A)
        if y is None:
            # exact 0/1 data should never get here; retry once with a
            # looser pivot tolerance before giving up
            y = _kernel_vector(A, tol=1e-7)
            if y is None:
                raise RuntimeError("kernel walk found no null direction")
        # step along +y until the first floating variable hits ±1
        xf = x[float_idx]
        room = np.full(y.shape, np.inf)
        pos, neg = y > 0, y < 0
        room[pos] = (1.0 - xf[pos]) / y[pos]
        room[neg] = (-1.0 - xf[neg]) / y[neg]
        alpha = float(room.min())
        if not np.isfinite(alpha) or alpha <= 0:
            raise RuntimeError("kernel walk stalled")
        xf = xf + alpha * y
        hit = np.abs(xf) >= 1.0 - 1e-12
        xf[hit] = np.sign(xf[hit])
        x[float_idx] = xf
        floating[float_idx[hit]] = False

    # no set has more than t floating variables left: sign-fix the rest
    x[floating] = np.where(x[floating] >= 0.0, 1.0, -1.0)
    return np.where(x >= 0.0, 1, -1).astype(np.int8)
