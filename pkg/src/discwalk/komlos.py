"""Matrix-row truncation machinery and preprocessing.

Rows with arbitrary real entries get their inequality constraints per
*prefix*: sort the entries of a row by increasing magnitude and add one
proportional-discrepancy and one orthogonality constraint for every
prefix of the sorted alive entries.  A prefix with cutoff ``c`` keeps the
entries with ``|b| <= c`` and corresponds to the deviation scale
``lambda = 4 * bigness / c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instances import DEFAULT_BIGNESS, InputError, MatrixInstance


@dataclass
class TruncationPrefix:
    """Entries of one row with magnitude at most ``threshold``.

    ``included`` lists entry indices sorted by increasing magnitude.
    Frozen entries are kept: truncated discrepancies are evaluated against
    the full coloring, only the SDP constraints restrict to alive entries.
    Exact zeros are excluded everywhere, they contribute nothing.
    """

    row: int
    threshold: float
    included: tuple[int, ...]
    lambda_equivalent: float


def truncation_prefixes(row, alive, bigness: float = DEFAULT_BIGNESS,
                        row_index: int = 0) -> list[TruncationPrefix]:
    """One prefix per distinct nonzero magnitude among the alive entries."""
    b = np.asarray(row, dtype=np.float64)
    a = np.asarray(alive, dtype=bool)
    if b.shape != a.shape:
        raise InputError("row and alive mask must have the same length")
    mag = np.abs(b)
    cutoffs = np.unique(mag[a & (mag > 0)])
    order = np.argsort(mag, kind="stable")
    ordered_mag = mag[order]
    out = []
    for c in cutoffs:
        inc = tuple(int(i) for i, m in zip(order, ordered_mag) if 0 < m <= c)
        out.append(TruncationPrefix(
            row=row_index,
            threshold=float(c),
            included=inc,
            lambda_equivalent=4.0 * bigness / float(c),
        ))
    return out


def preprocess(instance: MatrixInstance) -> tuple[MatrixInstance, list[int]]:
    """Drop rows whose l1 norm is below sqrt(ln n).

    Such rows can never reach a discrepancy above that cutoff, so they are
    excluded from the walk and only re-measured against the final
    coloring.  Returns the surviving instance and the discarded indices.
    """
    n = instance.n
    if n < 2:
        raise InputError("preprocessing needs at least two columns")
    cutoff = float(np.sqrt(np.log(n)))
    l1 = np.abs(instance.rows).sum(axis=1)
    keep = l1 >= cutoff
    discarded = np.flatnonzero(~keep).tolist()
    return MatrixInstance(rows=instance.rows[keep]), discarded


def survivor_bound(n: int) -> float:
    """Upper bound on how many rows can survive preprocessing."""
    return n * n / np.log(n)


def large_entry_l1(row, alive, lam: float, bigness: float = DEFAULT_BIGNESS) -> float:
    """l1 mass of the alive entries larger than the truncation cutoff.

    At the step a row activates this is at most ``lam / 4``: there can be
    few large alive entries once the alive squared mass is small, and
    Cauchy-Schwarz caps their total magnitude.
    """
    if lam <= 0:
        raise InputError("lambda must be positive")
    b = np.asarray(row, dtype=np.float64)
    a = np.asarray(alive, dtype=bool)
    cutoff = 4.0 * bigness / lam
    sel = a & (np.abs(b) > cutoff)
    return float(np.abs(b[sel]).sum())


def truncated_discrepancy(instance: MatrixInstance, coloring, prefix: TruncationPrefix) -> float:
    """Signed discrepancy of a row restricted to a prefix's entries."""
    x = np.asarray(coloring, dtype=np.float64)
    if x.shape != (instance.n,):
        raise InputError(f"coloring has shape {x.shape}, expected ({instance.n},)")
    if not prefix.included:
        return 0.0
    idx = list(prefix.included)
    return float(instance.rows[prefix.row, idx] @ x[idx])
