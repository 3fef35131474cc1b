"""Per-step structured SDP: construction, a projection solver, and checks.

The problem family, indexed by the ``d`` alive variables:

    maximize   trace(X)
    subject to v' X v  =  0                       one vector per big row
               v' X v <=  2 * sum_i w_i X_ii      proportional / orthogonality pairs
               X_ii   <=  1                       diagonal caps
               X      >=  0                       (PSD)

Equalities are eliminated structurally: ``X = P Y P'`` where the columns
of ``P`` span the orthogonal complement of the equality vectors, so
``X v = 0`` holds to round-off for every big row regardless of ``Y``.
The remaining feasibility problem (PSD cone, inequality half-spaces, and
a trace floor) is solved by Dykstra-style alternating projections; for
validly classified instances the floor ``d/3`` is always attainable.  An
optional outer ascent bisects the trace floor upward toward the optimum.

The solver keeps the best iterate seen so far and reports its residual
per sweep, so the reported residual series is the convergence envelope
and is non-increasing by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .instances import (
    DEFAULT_BIGNESS,
    InputError,
    Instance,
    MatrixInstance,
    SetSystemInstance,
    big_row_mask,
)

log = logging.getLogger(__name__)

KIND_DISC = 0   # proportional discrepancy pair
KIND_ORTH = 1   # approximate orthogonality pair

#: Violation (absolute) accepted by the identity fast path before the
#: projection solver is engaged at all.
FAST_PATH_TOL = 1e-9

_TINY = 1e-300


@dataclass(frozen=True)
class ToleranceSet:
    """Named tolerances for the SDP solution contract.

    ``psd`` and ``obj`` scale with the problem dimension; the rest are
    absolute.
    """

    eq: float = 1e-8          # |v' X v| per equality, scaled by d
    ineq: float = 1e-6        # inequality slack / diagonal overflow
    psd_scale: float = 1e-8   # min eigenvalue >= -psd_scale * d
    obj: float = 1e-6         # objective >= floor - obj * d
    fact: float = 1e-8        # |<u_i,u_j> - X_ij|
    rank: float = 1e-10       # eigenvalue cutoff kept by the factorization

    def psd(self, d: int) -> float:
        return self.psd_scale * max(d, 1)


DEFAULT_TOL = ToleranceSet()


@dataclass
class PdPair:
    """One inequality ``v' X v <= 2 sum_i w_i X_ii`` in alive-local coordinates."""

    v: np.ndarray
    w: np.ndarray
    kind: int
    row: int
    threshold: float  # prefix cutoff magnitude; nan for set systems

    @property
    def label(self) -> str:
        name = "disc" if self.kind == KIND_DISC else "orth"
        if np.isnan(self.threshold):
            return f"{name}[row {self.row}]"
        return f"{name}[row {self.row}, cutoff {self.threshold:g}]"


@dataclass
class SdpProblem:
    """Structured SDP over the alive variables.

    Vectors live in alive-local coordinates of length ``d``; the implicit
    objective is to maximize the trace subject to unit diagonal caps.
    """

    alive_index: np.ndarray          # (d,) original variable indices
    eq_vecs: np.ndarray              # (E, d)
    eq_rows: np.ndarray              # (E,) originating row index per equality
    pd_v: np.ndarray                 # (M, d)
    pd_w: np.ndarray                 # (M, d), entrywise >= 0
    pd_kind: np.ndarray              # (M,) KIND_DISC / KIND_ORTH
    pd_row: np.ndarray               # (M,)
    pd_threshold: np.ndarray         # (M,)

    def __post_init__(self):
        self.alive_index = np.asarray(self.alive_index, dtype=np.int64)
        d = self.alive_index.size
        self.eq_vecs = np.asarray(self.eq_vecs, dtype=np.float64).reshape(-1, d)
        self.eq_rows = np.asarray(self.eq_rows, dtype=np.int64)
        self.pd_v = np.asarray(self.pd_v, dtype=np.float64).reshape(-1, d)
        self.pd_w = np.asarray(self.pd_w, dtype=np.float64).reshape(-1, d)
        self.pd_kind = np.asarray(self.pd_kind, dtype=np.int8)
        self.pd_row = np.asarray(self.pd_row, dtype=np.int64)
        self.pd_threshold = np.asarray(self.pd_threshold, dtype=np.float64)
        if (self.pd_w < 0).any():
            raise InputError("pair weights must be non-negative")

    @property
    def d(self) -> int:
        return self.alive_index.size

    @property
    def n_equalities(self) -> int:
        return self.eq_vecs.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.pd_v.shape[0]

    def pd_pairs(self) -> list[PdPair]:
        return [
            PdPair(self.pd_v[j], self.pd_w[j], int(self.pd_kind[j]),
                   int(self.pd_row[j]), float(self.pd_threshold[j]))
            for j in range(self.n_pairs)
        ]

    @staticmethod
    def empty(alive_index) -> "SdpProblem":
        d = len(alive_index)
        return SdpProblem(
            alive_index=np.asarray(alive_index, dtype=np.int64),
            eq_vecs=np.zeros((0, d)), eq_rows=np.zeros(0, dtype=np.int64),
            pd_v=np.zeros((0, d)), pd_w=np.zeros((0, d)),
            pd_kind=np.zeros(0, dtype=np.int8), pd_row=np.zeros(0, dtype=np.int64),
            pd_threshold=np.zeros(0),
        )


@dataclass
class DualSolution:
    """Multipliers for the dual of the per-step SDP.

    ``b`` over alive indices (>= 0), ``alpha`` over equalities (free),
    ``beta`` over proportional pairs and ``beta_x`` over orthogonality
    pairs (both >= 0), in problem order.
    """

    b: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    beta_x: np.ndarray


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_sdp_beck_fiala(instance: SetSystemInstance, x, alive,
                         bigness: float = DEFAULT_BIGNESS) -> SdpProblem:
    """Per-step problem for a set system.

    Big sets contribute one equality vector (the alive indicator of the
    set); each small set with alive elements contributes a proportional
    pair (indicator, indicator) and an orthogonality pair built from the
    current coloring restricted to the set.
    """
    x = np.asarray(x, dtype=np.float64)
    alive = np.asarray(alive, dtype=bool)
    alive_idx = np.flatnonzero(alive)
    d = alive_idx.size
    big = big_row_mask(instance, alive, bigness)

    local = np.full(instance.n, -1, dtype=np.int64)
    local[alive_idx] = np.arange(d)

    eq_vecs, eq_rows = [], []
    pv, pw, pk, pr, pt = [], [], [], [], []
    for j, members in enumerate(instance.sets):
        sel = [local[i] for i in members if local[i] >= 0]
        if not sel:
            continue
        ind = np.zeros(d)
        ind[sel] = 1.0
        if big[j]:
            eq_vecs.append(ind)
            eq_rows.append(j)
        else:
            xs = np.zeros(d)
            xs[sel] = x[alive_idx[sel]]
            pv.append(ind); pw.append(ind); pk.append(KIND_DISC); pr.append(j); pt.append(np.nan)
            pv.append(xs); pw.append(ind); pk.append(KIND_ORTH); pr.append(j); pt.append(np.nan)

    return _stack_problem(alive_idx, eq_vecs, eq_rows, pv, pw, pk, pr, pt)


def build_sdp_komlos(instance: MatrixInstance, x, alive,
                     bigness: float = DEFAULT_BIGNESS) -> SdpProblem:
    """Per-step problem for a matrix instance.

    Big rows contribute one equality vector (the row restricted to alive
    entries).  Every other row contributes, per distinct alive magnitude
    cutoff ``c``, a proportional pair ``(b, b^2)`` and an orthogonality
    pair ``(b^2 x, b^4)``, each restricted to alive entries with
    ``|b| <= c`` — at most ``2n`` constraints per row.
    """
    x = np.asarray(x, dtype=np.float64)
    alive = np.asarray(alive, dtype=bool)
    alive_idx = np.flatnonzero(alive)
    d = alive_idx.size
    big = big_row_mask(instance, alive, bigness)
    xa = x[alive_idx]

    eq_vecs, eq_rows = [], []
    pv, pw, pk, pr, pt = [], [], [], [], []
    for j in range(instance.m):
        ba = instance.rows[j, alive_idx]
        if big[j]:
            eq_vecs.append(ba.copy())
            eq_rows.append(j)
            continue
        mag = np.abs(ba)
        cutoffs = np.unique(mag[mag > 0])
        if cutoffs.size == 0:
            continue
        sel = mag[None, :] <= cutoffs[:, None]       # (p, d), nested prefixes
        sel &= mag[None, :] > 0
        b1 = sel * ba[None, :]
        b2 = b1 * ba[None, :]
        for p, c in enumerate(cutoffs):
            pv.append(b1[p]); pw.append(b2[p]); pk.append(KIND_DISC); pr.append(j); pt.append(float(c))
            pv.append(b2[p] * xa); pw.append(b2[p] * b2[p]); pk.append(KIND_ORTH); pr.append(j); pt.append(float(c))

    return _stack_problem(alive_idx, eq_vecs, eq_rows, pv, pw, pk, pr, pt)


def _stack_problem(alive_idx, eq_vecs, eq_rows, pv, pw, pk, pr, pt) -> SdpProblem:
    d = len(alive_idx)
    return SdpProblem(
        alive_index=alive_idx,
        eq_vecs=np.array(eq_vecs, dtype=np.float64).reshape(-1, d),
        eq_rows=np.array(eq_rows, dtype=np.int64),
        pd_v=np.array(pv, dtype=np.float64).reshape(-1, d),
        pd_w=np.array(pw, dtype=np.float64).reshape(-1, d),
        pd_kind=np.array(pk, dtype=np.int8),
        pd_row=np.array(pr, dtype=np.int64),
        pd_threshold=np.array(pt, dtype=np.float64),
    )


def build_step_problem(instance: Instance, x, alive,
                       bigness: float = DEFAULT_BIGNESS) -> SdpProblem:
    if isinstance(instance, SetSystemInstance):
        return build_sdp_beck_fiala(instance, x, alive, bigness)
    return build_sdp_komlos(instance, x, alive, bigness)


# ---------------------------------------------------------------------------
# Solution containers and residuals
# ---------------------------------------------------------------------------

@dataclass
class ResidualReport:
    """Per-constraint violations of a candidate Gram matrix."""

    eq_abs: np.ndarray          # |v' X v| per equality
    pd_slack: np.ndarray        # rhs - lhs per pair (negative = violated)
    diag_overflow: np.ndarray   # X_ii - 1 (positive = violated)
    min_eigenvalue: float
    objective: float
    floor: float
    d: int
    pd_labels: list[str] = field(default_factory=list)

    @property
    def max_eq(self) -> float:
        return float(self.eq_abs.max()) if self.eq_abs.size else 0.0

    @property
    def max_pd_violation(self) -> float:
        if not self.pd_slack.size:
            return 0.0
        return float(max(0.0, -self.pd_slack.min()))

    @property
    def max_diag_overflow(self) -> float:
        if not self.diag_overflow.size:
            return 0.0
        return float(max(0.0, self.diag_overflow.max()))

    def failures(self, tol: ToleranceSet = DEFAULT_TOL) -> list[str]:
        out = []
        scale = max(self.d, 1)
        for i, r in enumerate(self.eq_abs):
            if r > tol.eq * scale:
                out.append(f"eq[{i}]: residual {r:.3g}")
        for j, s in enumerate(self.pd_slack):
            if s < -tol.ineq:
                label = self.pd_labels[j] if j < len(self.pd_labels) else f"pair[{j}]"
                out.append(f"{label}: violation {-s:.3g}")
        for i, o in enumerate(self.diag_overflow):
            if o > tol.ineq:
                out.append(f"diag[{i}]: overflow {o:.3g}")
        if self.min_eigenvalue < -tol.psd(self.d):
            out.append(f"psd: min eigenvalue {self.min_eigenvalue:.3g}")
        if self.objective < self.floor - tol.obj * scale:
            out.append(f"objective {self.objective:.6g} below floor {self.floor:.6g}")
        return out

    def passed(self, tol: ToleranceSet = DEFAULT_TOL) -> bool:
        return not self.failures(tol)

    def to_dict(self) -> dict:
        return {
            "max_eq_residual": self.max_eq,
            "max_pd_violation": self.max_pd_violation,
            "max_diag_overflow": self.max_diag_overflow,
            "min_eigenvalue": self.min_eigenvalue,
            "objective": self.objective,
            "floor": self.floor,
        }


@dataclass
class SolveInfo:
    fast_path: bool
    sweeps: int
    ascent_rounds: int
    target: float
    residual_history: list[float]


@dataclass
class SdpSolution:
    """Feasible Gram matrix plus a factor whose rows are the update vectors."""

    gram: np.ndarray
    vectors: np.ndarray          # (d, r) with <u_i, u_j> = X_ij
    objective: float
    residuals: ResidualReport
    info: SolveInfo


class SolverError(RuntimeError):
    """The projection solver could not reach the feasibility floor.

    For validly classified instances the floor is always attainable, so
    this signals a solver failure or a malformed problem, not a property
    of the input set system.
    """

    def __init__(self, message: str, residuals: Optional[ResidualReport] = None):
        super().__init__(message)
        self.residuals = residuals


# ---------------------------------------------------------------------------
# Geometry: null-space elimination of the equalities
# ---------------------------------------------------------------------------

def nullspace_basis(vecs: np.ndarray) -> Optional[np.ndarray]:
    """Orthonormal basis (columns) of the joint null space of the rows.

    Returns None when there is nothing to eliminate (identity geometry).
    """
    v = np.asarray(vecs, dtype=np.float64)
    if v.size == 0:
        return None
    norms = np.linalg.norm(v, axis=1)
    v = v[norms > 0]
    if v.shape[0] == 0:
        return None
    v = v / np.linalg.norm(v, axis=1)[:, None]
    _, s, vt = np.linalg.svd(v, full_matrices=True)
    tol = max(v.shape) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    rank = int((s > tol).sum())
    return vt[rank:].T.copy()


class _Compiled:
    """Problem geometry in the reduced (null-space) coordinates.

    Static parts (the basis ``P``, diagonal of ``P P'``, reduced
    proportional vectors, inequality right-hand sides) survive for as long
    as the alive set and the big/small split do; only the orthogonality
    vectors move with the coloring and are refreshed per step.
    """

    def __init__(self, problem: SdpProblem):
        self.problem = problem
        d = problem.d
        self.P = nullspace_basis(problem.eq_vecs)
        self.q = d if self.P is None else self.P.shape[1]
        if self.P is None:
            self.pdiag = np.ones(d)
        else:
            self.pdiag = np.einsum("ij,ij->i", self.P, self.P)
        self.rhs_coeff = 2.0 * (problem.pd_w @ self.pdiag)
        self.vt = self._reduce(problem.pd_v)
        self._mats = None

    def _reduce(self, rows: np.ndarray) -> np.ndarray:
        return rows if self.P is None else rows @ self.P

    def refresh(self, problem: SdpProblem):
        """Adopt a new problem with identical structure but moved coloring."""
        orth = problem.pd_kind == KIND_ORTH
        self.problem = problem
        if self.P is None:
            self.vt = problem.pd_v
        elif orth.any():
            self.vt[orth] = problem.pd_v[orth] @ self.P
        if orth.any():
            self._mats = None   # orthogonality half-spaces are stale

    def lift(self, Y: np.ndarray) -> np.ndarray:
        if self.P is None:
            return Y
        return self.P @ Y @ self.P.T

    def restrict(self, X: np.ndarray) -> np.ndarray:
        if self.P is None:
            return X
        return self.P.T @ X @ self.P

    def identity_violation(self) -> float:
        """Worst constraint violation of Y = I (X = P P')."""
        if self.vt.size == 0:
            return 0.0
        lhs = np.einsum("mq,mq->m", self.vt, self.vt)
        return float(max(0.0, (lhs - self.rhs_coeff).max()))

    def halfspaces(self):
        """Dense half-space data ``<A_j, Y> <= b_j`` for the projections."""
        if self._mats is not None:
            return self._mats
        q = self.q
        prob = self.problem
        mats, bs, classes = [], [], []
        for j in range(prob.n_pairs):
            if self.P is None:
                wt = np.diag(prob.pd_w[j])
            else:
                wt = self.P.T @ (prob.pd_w[j][:, None] * self.P)
            a = np.outer(self.vt[j], self.vt[j]) - 2.0 * wt
            mats.append(a); bs.append(0.0); classes.append("pd")
        rows = np.eye(prob.d) if self.P is None else self.P
        for i in range(prob.d):
            p = rows[i]
            if self.pdiag[i] < 1e-14:
                continue    # variable annihilated by the equalities; cap is free
            mats.append(np.outer(p, p)); bs.append(1.0); classes.append("cap")
        nrm2 = np.array([max((a * a).sum(), _TINY) for a in mats])
        self._mats = (mats, np.array(bs), nrm2, classes)
        return self._mats

    def violations(self, Y: np.ndarray, tau: float, tol: ToleranceSet) -> float:
        """Max violation normalized so that <= 1 means within tolerance."""
        if self.P is None:
            xdiag = np.diag(Y)
        else:
            xdiag = np.einsum("iq,qp,ip->i", self.P, Y, self.P)
        worst = 0.0
        if self.vt.size:
            lhs = np.einsum("mq,qp,mp->m", self.vt, Y, self.vt)
            rhs = 2.0 * (self.problem.pd_w @ xdiag)
            worst = max(worst, float((lhs - rhs).max()) / (0.25 * tol.ineq))
        if xdiag.size:
            worst = max(worst, float((xdiag - 1.0).max()) / (0.25 * tol.ineq))
        worst = max(worst, (tau - float(np.trace(Y))) / (0.25 * tol.obj * max(self.problem.d, 1)))
        return worst


def _psd_project(Y: np.ndarray) -> np.ndarray:
    Y = 0.5 * (Y + Y.T)
    w, e = np.linalg.eigh(Y)
    if w.size == 0 or w[0] >= 0.0:
        return Y
    wc = np.clip(w, 0.0, None)
    return (e * wc) @ e.T


def _dykstra(comp: _Compiled, Y0: np.ndarray, tau: float, tol: ToleranceSet,
             max_sweeps: int, plateau: int = 60, plateau_gain: float = 1e-3):
    """Alternating projections onto the half-spaces, trace floor, and PSD cone.

    Returns ``(Y_best, converged, history, sweeps)`` where the history is
    the best-so-far normalized violation per sweep.
    """
    mats, bs, nrm2, _ = comp.halfspaces()
    M = len(mats)
    q = comp.q
    lam = np.zeros(M)
    lam_tr = 0.0
    R = np.zeros((q, q))
    Y = _psd_project(np.array(Y0, dtype=np.float64))
    best_v = np.inf
    best_Y = Y
    best_sweep = 0
    history: list[float] = []
    for sweep in range(1, max_sweeps + 1):
        for j in range(M):
            Aj = mats[j]
            Z = Y + lam[j] * Aj if lam[j] != 0.0 else Y
            g = float((Aj * Z).sum()) - bs[j]
            lj = g / nrm2[j]
            if lj < 0.0:
                lj = 0.0
            if lj != 0.0 or lam[j] != 0.0:
                Y = Z - lj * Aj
            lam[j] = lj
        # trace floor: half-space -trace(Y) <= -tau
        Z = Y.copy()
        if lam_tr != 0.0:
            Z[np.diag_indices(q)] -= lam_tr
        lam_tr = max(0.0, (tau - float(np.trace(Z))) / q)
        if lam_tr != 0.0:
            Z[np.diag_indices(q)] += lam_tr
        Y = Z
        T = Y + R
        Y = _psd_project(T)
        R = T - Y
        v = comp.violations(Y, tau, tol)
        if v < best_v:
            best_v, best_Y, best_sweep = v, Y.copy(), sweep
        history.append(best_v)
        if best_v <= 1.0:
            return best_Y, True, history, sweep
        if sweep - best_sweep >= plateau and best_v > 1.0:
            window = history[-plateau]
            if window - best_v <= plateau_gain * max(best_v, 1.0):
                break
    return best_Y, best_v <= 1.0, history, len(history)


# ---------------------------------------------------------------------------
# Solution assembly
# ---------------------------------------------------------------------------

def _residual_report(problem: SdpProblem, X: np.ndarray, min_eig: float,
                     floor: float) -> ResidualReport:
    d = problem.d
    diag = np.diag(X) if d else np.zeros(0)
    if problem.n_equalities:
        eq_abs = np.abs(np.einsum("ed,df,ef->e", problem.eq_vecs, X, problem.eq_vecs))
    else:
        eq_abs = np.zeros(0)
    if problem.n_pairs:
        lhs = np.einsum("md,df,mf->m", problem.pd_v, X, problem.pd_v)
        rhs = 2.0 * (problem.pd_w @ diag)
        pd_slack = rhs - lhs
    else:
        pd_slack = np.zeros(0)
    return ResidualReport(
        eq_abs=eq_abs,
        pd_slack=pd_slack,
        diag_overflow=diag - 1.0,
        min_eigenvalue=float(min_eig),
        objective=float(diag.sum()),
        floor=floor,
        d=d,
        pd_labels=[p.label for p in problem.pd_pairs()] if problem.n_pairs <= 256 else [],
    )


def _assemble(problem: SdpProblem, comp: _Compiled, Y: Optional[np.ndarray],
              fast: bool, sweeps: int, rounds: int, tau: float,
              history: list[float], tol: ToleranceSet) -> SdpSolution:
    d = problem.d
    if d == 0:
        report = _residual_report(problem, np.zeros((0, 0)), 0.0, 0.0)
        return SdpSolution(np.zeros((0, 0)), np.zeros((0, 0)), 0.0, report,
                           SolveInfo(fast, sweeps, rounds, tau, history))
    if fast:
        U = np.eye(d) if comp.P is None else comp.P
        X = np.eye(d) if comp.P is None else comp.P @ comp.P.T
        min_eig = 1.0 if comp.q == d else 0.0
    else:
        w, e = np.linalg.eigh(0.5 * (Y + Y.T))
        wc = np.clip(w, 0.0, None)
        keep = wc > tol.rank
        F = e[:, keep] * np.sqrt(wc[keep])
        U = F if comp.P is None else comp.P @ F
        X = comp.lift(0.5 * (Y + Y.T))
        min_eig = float(min(w[0] if w.size else 0.0, 0.0))
    X = 0.5 * (X + X.T)
    floor = d / 3.0
    report = _residual_report(problem, X, min_eig, floor)
    return SdpSolution(X, U, report.objective, report,
                       SolveInfo(fast, sweeps, rounds, tau, history))


def solve(problem: SdpProblem, tol: ToleranceSet = DEFAULT_TOL, *,
          warm_start: Optional[np.ndarray] = None, ascend: bool = True,
          max_sweeps: int = 4000, ascent_sweeps: int = 300,
          ascent_rounds: int = 16) -> SdpSolution:
    """Find a feasible Gram matrix with trace at least ``d/3``.

    With ``ascend`` the trace floor is pushed upward (exponential probing
    followed by bisection), stopping within a small relative gap of the
    optimum; without it any feasible point at the floor is accepted.
    ``warm_start`` is a candidate Gram matrix in the original coordinates.
    """
    d = problem.d
    comp = _Compiled(problem)
    if d == 0:
        return _assemble(problem, comp, None, True, 0, 0, 0.0, [], tol)
    floor = d / 3.0
    if comp.q == 0:
        if floor <= tol.obj * d:
            return _assemble(problem, comp, np.zeros((0, 0)), False, 0, 0, floor, [], tol)
        raise SolverError(
            "equalities span the whole space; the trace floor is unreachable")

    sweeps_total = 0
    history: list[float] = []
    best_Y = None

    if comp.identity_violation() <= FAST_PATH_TOL and comp.q >= floor - tol.obj * d:
        best_Y = np.eye(comp.q)
        sol = _assemble(problem, comp, best_Y, True, 0, 0, floor, [0.0], tol)
        if not ascend:
            return sol
    else:
        Y0 = np.eye(comp.q) if warm_start is None else comp.restrict(warm_start)
        Y, ok, hist, sw = _dykstra(comp, Y0, floor, tol, max_sweeps,
                                   plateau=400, plateau_gain=1e-6)
        sweeps_total += sw
        history.extend(hist)
        if not ok:
            report = _residual_report(problem, comp.lift(Y), 0.0, floor)
            raise SolverError(
                f"projection solver failed to reach the d/3 floor "
                f"(d={d}, worst residuals: {report.failures(tol)[:3]})", report)
        best_Y = Y
        sol = _assemble(problem, comp, best_Y, False, sweeps_total, 0, floor, history, tol)

    if not ascend:
        return sol

    # outer trace ascent: exponential probe, then bisection
    lo = float(np.trace(best_Y))
    hi = None
    rounds = 0
    tau = min(float(d), max(lo * 1.25, lo + 0.05 * d))
    while rounds < ascent_rounds and lo < d - 1e-9:
        if hi is not None and hi - lo <= max(5e-3 * max(lo, 1.0), 1e-9):
            break
        Y, ok, hist, sw = _dykstra(comp, best_Y, tau, tol, ascent_sweeps)
        sweeps_total += sw
        rounds += 1
        if ok:
            best_Y = Y
            lo = float(np.trace(Y))
            tau = min(float(d), lo * 1.25 + 1e-6 * d) if hi is None else 0.5 * (lo + hi)
        else:
            hi = tau
            tau = 0.5 * (lo + hi)
    final = _assemble(problem, comp, best_Y, False, sweeps_total, rounds,
                      lo, history or [0.0], tol)
    return final


class StepSolver:
    """Warm-started solver for the per-step problems of one walk.

    Consecutive problems differ only slightly (the coloring drifts by one
    small step and the alive set shrinks occasionally), so the equality
    null-space geometry is cached per (alive set, big rows) epoch, the
    previous solution warm-starts the projections, and the identity in
    reduced coordinates is tried first — that candidate is feasible (and
    diagonal-cap optimal) whenever no inequality binds, which covers the
    bulk of the steps in practice.
    """

    def __init__(self, tol: ToleranceSet = DEFAULT_TOL, max_sweeps: int = 4000):
        self.tol = tol
        self.max_sweeps = max_sweeps
        self._key = None
        self._comp: Optional[_Compiled] = None
        self._Y: Optional[np.ndarray] = None
        self._X: Optional[np.ndarray] = None
        self._alive: Optional[np.ndarray] = None
        self.fast_steps = 0
        self.engaged_steps = 0

    def _structure_key(self, p: SdpProblem):
        return (p.alive_index.tobytes(), p.eq_rows.tobytes(), p.pd_row.tobytes(),
                p.pd_kind.tobytes(), p.pd_threshold.tobytes())

    def solve(self, problem: SdpProblem) -> SdpSolution:
        d = problem.d
        if d == 0:
            return _assemble(problem, _Compiled(problem), None, True, 0, 0, 0.0, [], self.tol)
        key = self._structure_key(problem)
        if key == self._key and self._comp is not None:
            comp = self._comp
            comp.refresh(problem)
            warm_Y = self._Y
        else:
            comp = _Compiled(problem)
            warm_Y = None
            if self._X is not None and self._alive is not None:
                keep = np.isin(self._alive, problem.alive_index)
                if keep.any():
                    Xr = np.eye(d)
                    sub = self._X[np.ix_(keep, keep)]
                    pos = np.searchsorted(problem.alive_index, self._alive[keep])
                    Xr[np.ix_(pos, pos)] = sub
                    warm_Y = comp.restrict(Xr)
            self._key, self._comp = key, comp
        floor = d / 3.0
        if comp.q == 0:
            raise SolverError("equalities span the whole space at an alive step")
        if comp.identity_violation() <= FAST_PATH_TOL and comp.q >= floor - self.tol.obj * d:
            self.fast_steps += 1
            Y = np.eye(comp.q)
            sol = _assemble(problem, comp, Y, True, 0, 0, floor, [0.0], self.tol)
        else:
            self.engaged_steps += 1
            Y0 = warm_Y if warm_Y is not None else np.eye(comp.q)
            Y, ok, hist, sw = _dykstra(comp, Y0, floor, self.tol, self.max_sweeps,
                                       plateau=400, plateau_gain=1e-6)
            if not ok:
                report = _residual_report(problem, comp.lift(Y), 0.0, floor)
                raise SolverError(
                    f"per-step solve failed at d={d}: {report.failures(self.tol)[:3]}",
                    report)
            sol = _assemble(problem, comp, Y, False, sw, 0, floor, hist, self.tol)
        self._Y = Y
        self._X = sol.gram
        self._alive = problem.alive_index
        return sol


# ---------------------------------------------------------------------------
# Standalone checks
# ---------------------------------------------------------------------------

def factorize(gram: np.ndarray, tol: ToleranceSet = DEFAULT_TOL) -> np.ndarray:
    """Rows of a factor ``U`` with ``U U' = gram`` up to the tolerance set.

    Eigenvalues in ``[-psd_tol, rank_tol]`` are truncated to zero and
    their directions dropped.
    """
    G = np.asarray(gram, dtype=np.float64)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InputError("gram matrix must be square")
    d = G.shape[0]
    if d == 0:
        return np.zeros((0, 0))
    scale = max(float(np.abs(G).max()), 1.0)
    if float(np.abs(G - G.T).max()) > 1e-8 * scale:
        raise InputError("gram matrix is not symmetric")
    w, e = np.linalg.eigh(0.5 * (G + G.T))
    if w[0] < -tol.psd(d):
        raise InputError(f"gram matrix has eigenvalue {w[0]:.3g} below -psd tolerance")
    wc = np.clip(w, 0.0, None)
    keep = wc > tol.rank
    return e[:, keep] * np.sqrt(wc[keep])


def check_feasibility(problem: SdpProblem, solution: SdpSolution,
                      tol: ToleranceSet = DEFAULT_TOL) -> ResidualReport:
    """Recompute every residual of a solution from scratch."""
    X = np.asarray(solution.gram, dtype=np.float64)
    if X.shape != (problem.d, problem.d):
        raise InputError("solution dimension does not match the problem")
    min_eig = float(np.linalg.eigvalsh(X).min()) if problem.d else 0.0
    return _residual_report(problem, X, min_eig, problem.d / 3.0)


def dual_operator(problem: SdpProblem, dual: DualSolution) -> np.ndarray:
    """Assemble the dual constraint operator over the alive coordinates."""
    d = problem.d
    op = np.diag(np.asarray(dual.b, dtype=np.float64))
    for a, v in zip(dual.alpha, problem.eq_vecs):
        op += a * np.outer(v, v)
    disc = np.flatnonzero(problem.pd_kind == KIND_DISC)
    orth = np.flatnonzero(problem.pd_kind == KIND_ORTH)
    if len(dual.beta) != disc.size or len(dual.beta_x) != orth.size:
        raise InputError("dual multiplier lengths do not match the problem")
    for mult, j in zip(dual.beta, disc):
        op += mult * (np.outer(problem.pd_v[j], problem.pd_v[j]) - 2.0 * np.diag(problem.pd_w[j]))
    for mult, j in zip(dual.beta_x, orth):
        op += mult * (np.outer(problem.pd_v[j], problem.pd_v[j]) - 2.0 * np.diag(problem.pd_w[j]))
    return op


def check_dual_feasibility(problem: SdpProblem, dual: DualSolution,
                           tol: ToleranceSet = DEFAULT_TOL) -> bool:
    """Whether the multipliers satisfy the sign constraints and dominate I."""
    b = np.asarray(dual.b, dtype=np.float64)
    if b.shape != (problem.d,):
        raise InputError("dual b has the wrong length")
    if (b < 0).any() or (np.asarray(dual.beta) < 0).any() or (np.asarray(dual.beta_x) < 0).any():
        return False
    if problem.d == 0:
        return True
    op = dual_operator(problem, dual)
    min_eig = float(np.linalg.eigvalsh(op - np.eye(problem.d)).min())
    return min_eig >= -tol.psd(problem.d)


def make_interior_dual(problem: SdpProblem, eps: float = 0.01) -> DualSolution:
    """A strictly feasible dual point: b = (1+eps), tiny pair multipliers."""
    d = problem.d
    n_disc = int((problem.pd_kind == KIND_DISC).sum())
    n_orth = int((problem.pd_kind == KIND_ORTH).sum())
    small = eps / (8.0 * max(d, 1) ** 2)
    return DualSolution(
        b=np.full(d, 1.0 + eps),
        alpha=np.zeros(problem.n_equalities),
        beta=np.full(n_disc, small),
        beta_x=np.full(n_orth, small),
    )
