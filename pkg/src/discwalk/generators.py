"""Seeded random instance generators."""

from __future__ import annotations

import numpy as np

from .instances import InputError, MatrixInstance, SetSystemInstance


def gen_set_system(n: int, t: int, set_size_range: tuple[int, int],
                   seed: int) -> SetSystemInstance:
    """Random set system with maximum element degree at most ``t``.

    Sets are drawn until fewer elements than the minimum size still have
    spare degree; every element participates in at most ``t`` sets by
    construction.
    """
    lo, hi = int(set_size_range[0]), int(set_size_range[1])
    if n < 1 or t < 1:
        raise InputError("need n >= 1 and t >= 1")
    if not 1 <= lo <= hi:
        raise InputError("set sizes must satisfy 1 <= lo <= hi")
    if lo > n:
        raise InputError(f"minimum set size {lo} exceeds n={n}")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    capacity = np.full(n, t, dtype=np.int64)
    sets = []
    while True:
        available = np.flatnonzero(capacity > 0)
        if available.size < lo:
            break
        size = int(rng.integers(lo, hi + 1))
        size = min(size, available.size)
        pick = rng.choice(available, size=size, replace=False)
        capacity[pick] -= 1
        sets.append(tuple(sorted(int(i) for i in pick)))
    return SetSystemInstance(n=n, sets=tuple(sets))


def gen_komlos_matrix(m: int, n: int, density: float, seed: int) -> MatrixInstance:
    """Random sparse ±1 pattern with every nonempty column scaled to norm 1."""
    if not 0 < density <= 1:
        raise InputError("density must lie in (0, 1]")
    if m < 0 or n < 0:
        raise InputError("need non-negative dimensions")
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    mask = rng.random((m, n)) < density
    signs = rng.integers(0, 2, size=(m, n), dtype=np.int64) * 2 - 1
    b = mask * signs.astype(np.float64)
    nnz = mask.sum(axis=0)
    scale = np.where(nnz > 0, np.sqrt(np.maximum(nnz, 1)), 1.0)
    return MatrixInstance(rows=b / scale[None, :])
