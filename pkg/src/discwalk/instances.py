"""Instance types and coloring-level measurements.

Two instance flavours share one walk engine: sparse set systems, where
every element lies in at most ``t`` sets, and real matrices whose columns
have Euclidean norm at most one.  A row (a set, or a matrix row) is *big*
while it still carries a lot of alive mass and *small* afterwards.  Big
rows are pinned to exact zero discrepancy by the per-step SDP, so a row
only starts accumulating discrepancy once it *activates*, i.e. turns
small for the first time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

#: Default bigness constant: a set is big while it has at least
#: ``bigness * t`` alive elements; a matrix row is big while its alive
#: squared mass exceeds ``bigness``.
DEFAULT_BIGNESS = 6.0

#: Slack accepted on the unit column-norm requirement of matrix instances.
COLUMN_NORM_EPS = 1e-12


class InputError(ValueError):
    """Malformed instance data or mismatched arguments."""


@dataclass
class SetSystemInstance:
    """Set system on ground set ``{0, ..., n-1}`` with bounded degree.

    ``t`` is the maximum number of sets any single element belongs to; it
    is derived from the data, not declared.
    """

    n: int
    sets: tuple[tuple[int, ...], ...]

    _weights: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.n = int(self.n)
        if self.n < 0:
            raise InputError("element count must be non-negative")
        canon = []
        for s in self.sets:
            tup = tuple(int(i) for i in s)
            if len(set(tup)) != len(tup):
                raise InputError(f"duplicate element in set {tup}")
            for i in tup:
                if not 0 <= i < self.n:
                    raise InputError(f"element {i} outside [0, {self.n})")
            canon.append(tup)
        self.sets = tuple(canon)

    @property
    def m(self) -> int:
        return len(self.sets)

    @property
    def degrees(self) -> np.ndarray:
        """Number of sets containing each element."""
        deg = np.zeros(self.n, dtype=np.int64)
        for s in self.sets:
            for i in s:
                deg[i] += 1
        return deg

    @property
    def t(self) -> int:
        return max_degree(self)

    @property
    def weights(self) -> np.ndarray:
        """Dense 0/1 incidence matrix, one row per set."""
        if self._weights is None:
            w = np.zeros((self.m, self.n), dtype=np.float64)
            for j, s in enumerate(self.sets):
                if s:
                    w[j, list(s)] = 1.0
            self._weights = w
        return self._weights


@dataclass
class MatrixInstance:
    """Real matrix whose columns have Euclidean norm at most one."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise InputError("matrix instance needs a 2-d array of rows")
        col_norms = np.sqrt((rows * rows).sum(axis=0)) if rows.size else np.zeros(rows.shape[1])
        if col_norms.size and float(col_norms.max(initial=0.0)) > 1.0 + COLUMN_NORM_EPS:
            worst = int(np.argmax(col_norms))
            raise InputError(
                f"column {worst} has norm {col_norms[worst]:.12g} > 1"
            )
        self.rows = rows

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return self.rows


Instance = Union[SetSystemInstance, MatrixInstance]


def max_degree(instance: SetSystemInstance) -> int:
    """Maximum number of sets containing any single element."""
    if not isinstance(instance, SetSystemInstance):
        raise InputError("max_degree is defined for set systems only")
    if not instance.sets or instance.n == 0:
        return 0
    return int(instance.degrees.max())


def discrepancy(instance: Instance, coloring) -> tuple[np.ndarray, float]:
    """Signed per-row sums of a (possibly fractional) coloring.

    Returns ``(per_row, max_abs)`` where ``per_row[j]`` is the signed
    discrepancy of row ``j`` and ``max_abs`` the largest magnitude.
    """
    x = np.asarray(coloring, dtype=np.float64)
    if x.shape != (instance.n,):
        raise InputError(f"coloring has shape {x.shape}, expected ({instance.n},)")
    w = instance.weights
    per_row = w @ x if w.size else np.zeros(w.shape[0])
    max_abs = float(np.abs(per_row).max()) if per_row.size else 0.0
    return per_row, max_abs


def alive_mass(instance: Instance, alive: np.ndarray) -> np.ndarray:
    """Per-row alive mass: ``|S ∩ A|`` for sets, ``Σ_{i∈A} b_ji²`` for rows."""
    a = np.asarray(alive, dtype=np.float64)
    if isinstance(instance, SetSystemInstance):
        return instance.weights @ a
    return (instance.rows * instance.rows) @ a


@dataclass
class RowClass:
    """Disjoint, exhaustive split of the rows into big and small."""

    big_rows: list[int]
    small_rows: list[int]


def classify_rows(instance: Instance, alive: np.ndarray, bigness: float = DEFAULT_BIGNESS) -> RowClass:
    """Split rows by alive mass.

    A set is big iff it has at least ``bigness * t`` alive elements; a
    matrix row is big iff its alive squared mass strictly exceeds
    ``bigness``.
    """
    big = big_row_mask(instance, alive, bigness)
    idx = np.arange(big.size)
    return RowClass(big_rows=idx[big].tolist(), small_rows=idx[~big].tolist())


def big_row_mask(instance: Instance, alive: np.ndarray, bigness: float = DEFAULT_BIGNESS) -> np.ndarray:
    """Boolean mask over rows, true where the row is currently big."""
    mass = alive_mass(instance, alive)
    if isinstance(instance, SetSystemInstance):
        t = instance.t
        if t == 0:
            return np.zeros(instance.m, dtype=bool)
        return mass >= bigness * t - 1e-12
    return mass > bigness


def activation_step(row_history: Sequence[bool]) -> Optional[int]:
    """First step index (1-based) at which the row was small; None if never.

    ``row_history[i]`` says whether the row was small during step ``i+1``.
    """
    for i, small in enumerate(row_history):
        if small:
            return i + 1
    return None
