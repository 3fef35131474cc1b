"""Constructive subspace certificates for the feasibility floor.

Two constructions back the per-step objective floor of d/3:

* ``column_subspace``: for any matrix with unit-bounded columns there is a
  subspace of dimension at least half the column count on which the matrix
  at most doubles squared norms (the small-singular-value span).
* ``nsd_subspace``: any non-negative combination of operators of the form
  ``v v' - 2 diag(v^2)`` is negative semidefinite on a subspace of at
  least half the dimension; the proof normalizes columns by their
  aggregated weight and reuses the first construction.

Intersecting the second subspace with the orthogonal complement of the
equality vectors leaves dimension at least d/2 - d/bigness = d/3 (at the
default bigness of 6), which is what forces any feasible dual point to
carry total mass at least d/3.  These run in test and diagnostic paths
only, never inside the walk loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .instances import DEFAULT_BIGNESS, InputError
from .sdp import (
    DEFAULT_TOL,
    KIND_DISC,
    KIND_ORTH,
    SdpProblem,
    SdpSolution,
    ToleranceSet,
    make_interior_dual,
)

#: Orthonormality tolerance for subspace bases.
BASIS_TOL = 1e-10

#: Singular-value tolerance for subspace intersections.
INTERSECT_TOL = 1e-8


@dataclass
class Subspace:
    """Subspace of R^n given by orthonormal basis columns."""

    basis: np.ndarray   # (n, dim)

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=np.float64)
        if b.ndim != 2:
            raise InputError("basis must be a 2-d array of columns")
        gram = b.T @ b
        if gram.size and float(np.abs(gram - np.eye(b.shape[1])).max()) > BASIS_TOL:
            raise InputError("basis columns are not orthonormal")
        self.basis = b

    @property
    def ambient(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def project(self, y: np.ndarray) -> np.ndarray:
        return self.basis @ (self.basis.T @ y)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """A uniformly random unit vector inside the subspace."""
        coeff = rng.standard_normal(self.dim)
        coeff /= max(np.linalg.norm(coeff), 1e-300)
        return self.basis @ coeff

    def complement(self) -> "Subspace":
        n, k = self.basis.shape
        if k == 0:
            return Subspace(np.eye(n))
        _, s, vt = np.linalg.svd(self.basis.T, full_matrices=True)
        rank = int((s > INTERSECT_TOL).sum())
        return Subspace(vt[rank:].T.copy())


def column_subspace(M: np.ndarray) -> Subspace:
    """Span of the right-singular directions with squared singular value <= 2.

    Requires every column of ``M`` to have norm at most 1 (+1e-12); the
    trace identity sum(sigma^2) = sum of squared column norms <= n then
    forces at least ceil(n/2) squared singular values to be at most 2.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise InputError("expected a 2-d matrix")
    n = M.shape[1]
    col_norms_sq = (M * M).sum(axis=0)
    if col_norms_sq.size and float(col_norms_sq.max()) > (1.0 + 1e-12) ** 2:
        raise InputError("columns must have norm at most 1")
    if n == 0:
        return Subspace(np.zeros((0, 0)))
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    sig_sq = np.zeros(n)
    sig_sq[: s.size] = s * s
    total = float(sig_sq.sum())
    if total > float(col_norms_sq.sum()) + 1e-8 * max(n, 1):
        raise RuntimeError("singular-value budget exceeded the column norms")
    keep = sig_sq <= 2.0 * (1.0 + 1e-12)
    basis = vt[keep].T.copy()
    if basis.shape[1] < -(-n // 2):
        raise RuntimeError("fewer than n/2 singular values within budget")
    return Subspace(basis)


def nsd_subspace(vectors: Sequence[np.ndarray], multipliers: Sequence[float],
                 n: int) -> Subspace:
    """Subspace of dimension >= ceil(n/2) on which the weighted operator
    ``sum_v beta_v (v v' - 2 diag(v^2))`` is negative semidefinite.

    The construction stacks rows sqrt(beta_v) * v, normalizes each column
    by its aggregated weight, takes the bounded-singular-value span, and
    direct-sums with the coordinates that carry no weight at all.
    """
    beta = np.asarray(multipliers, dtype=np.float64)
    if (beta < 0).any():
        raise InputError("multipliers must be non-negative")
    vecs = np.asarray(list(vectors), dtype=np.float64).reshape(-1, n)
    if vecs.shape[0] != beta.size:
        raise InputError("one multiplier per vector is required")

    M = np.sqrt(beta)[:, None] * vecs
    col_mass = (M * M).sum(axis=0)          # beta_i^2 of the construction
    support = col_mass > 1e-28
    basis_parts = []
    if support.any():
        D = np.sqrt(col_mass[support])
        M_unit = M[:, support] / D[None, :]
        inner = column_subspace(M_unit)
        mapped = inner.basis / D[:, None]
        ortho, _ = np.linalg.qr(mapped)
        lifted = np.zeros((n, ortho.shape[1]))
        lifted[support] = ortho
        basis_parts.append(lifted)
    free = np.flatnonzero(~support)
    if free.size:
        eye_part = np.zeros((n, free.size))
        eye_part[free, np.arange(free.size)] = 1.0
        basis_parts.append(eye_part)
    basis = np.hstack(basis_parts) if basis_parts else np.zeros((n, 0))
    sub = Subspace(basis)
    if sub.dim < -(-n // 2):
        raise RuntimeError("construction fell below the n/2 dimension bound")

    # authoritative check: the operator restricted to the subspace
    B = (M.T @ M) - 2.0 * np.diag(col_mass)
    if sub.dim:
        restricted = sub.basis.T @ B @ sub.basis
        top = float(np.linalg.eigvalsh(0.5 * (restricted + restricted.T)).max())
        scale = max(float(np.abs(B).max()), 1e-30)
        if top > 1e-8 * scale:
            raise RuntimeError(f"restricted operator not NSD: top eigenvalue {top:.3g}")
    return sub


def subspace_intersection(a: Subspace, b: Subspace) -> Subspace:
    """Intersection via the joint null space of the two complements."""
    if a.ambient != b.ambient:
        raise InputError("subspaces live in different ambient dimensions")
    n = a.ambient
    stack = np.hstack([a.complement().basis, b.complement().basis])
    if stack.shape[1] == 0:
        return Subspace(np.eye(n))
    _, s, vt = np.linalg.svd(stack.T, full_matrices=True)
    rank = int((s > INTERSECT_TOL).sum())
    return Subspace(vt[rank:].T.copy())


@dataclass
class CertificateReport:
    """Constructive evidence that the objective floor was attainable."""

    d: int
    n_equalities: int
    bigness: float
    equality_budget: float          # d / bigness
    equality_count_ok: bool
    objective: float
    floor: float
    objective_ok: bool
    witness_dim: int
    witness_floor: float            # d/2 - d/bigness
    witness_dim_ok: bool
    projected_trace: float
    projected_trace_ok: bool

    @property
    def passed(self) -> bool:
        return (self.equality_count_ok and self.objective_ok
                and self.witness_dim_ok and self.projected_trace_ok)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["passed"] = self.passed
        return out


def dual_floor_certificate(problem: SdpProblem, solution: SdpSolution,
                           bigness: float = DEFAULT_BIGNESS,
                           tol: ToleranceSet = DEFAULT_TOL,
                           eps: float = 0.01) -> CertificateReport:
    """Check the counting and subspace ingredients of the d/3 floor.

    Reports (i) that the equality count stays within d/bigness, (ii) the
    solution objective against d/3, and (iii) for an interior dual point,
    that the diagonal dual mass projected onto the constructed witness
    subspace covers the subspace dimension.
    """
    d = problem.d
    floor = d / 3.0
    n_eq = problem.n_equalities
    eq_budget = d / bigness
    eq_ok = n_eq <= eq_budget + 1e-9

    if d == 0:
        return CertificateReport(0, n_eq, bigness, eq_budget, eq_ok, 0.0, 0.0,
                                 True, 0, 0.0, True, 0.0, True)

    dual = make_interior_dual(problem, eps)
    multipliers = np.empty(problem.n_pairs)
    multipliers[problem.pd_kind == KIND_DISC] = dual.beta
    multipliers[problem.pd_kind == KIND_ORTH] = dual.beta_x
    nsd = nsd_subspace(problem.pd_v, multipliers, d)
    if n_eq:
        u, s, _ = np.linalg.svd(problem.eq_vecs.T, full_matrices=False)
        rank = int((s > 1e-10 * (s[0] if s.size else 1.0)).sum())
        big_span = Subspace(u[:, :rank])
        witness = subspace_intersection(nsd, big_span.complement())
    else:
        witness = nsd
    witness_floor = d / 2.0 - d / bigness
    dim_ok = witness.dim >= witness_floor - 1e-9

    proj_diag = (witness.basis * witness.basis) @ np.ones(witness.dim) if witness.dim else np.zeros(d)
    projected_trace = float(dual.b @ proj_diag)
    trace_ok = projected_trace >= witness.dim - 1e-8 * max(d, 1)

    objective_ok = solution.objective >= floor - tol.obj * max(d, 1)
    return CertificateReport(
        d=d, n_equalities=n_eq, bigness=bigness, equality_budget=eq_budget,
        equality_count_ok=eq_ok, objective=float(solution.objective),
        floor=floor, objective_ok=objective_ok, witness_dim=witness.dim,
        witness_floor=witness_floor, witness_dim_ok=dim_ok,
        projected_trace=projected_trace, projected_trace_ok=trace_ok,
    )
