"""Energy and martingale diagnostics, reconstructed by replay.

For a row with weight vector ``c`` (the 0/1 indicator of a set, a matrix
row, or its truncation), the step-k quantities are

    disc      D(k) = sum_i c_i x_k(i)
    energy    E(k) = sum_i c_i^2 x_k(i)^2
    quad     dQ(k) = gamma^2 sum_i c_i^2 <r_k, u_i>^2
    lin      dL(k) = 2 gamma <r_k, sum_i c_i^2 x_{k-1}(i) u_i>
    expected dQ'(k) = gamma^2 sum_i c_i^2 |u_i|^2

so that E(k) = E(0) + Q(k) + L(k) exactly whenever no clamping occurred,
and Q' accumulates the conditional expectation of Q.  Everything here is
recomputed from recorded step data (never accumulated in the hot loop),
so the walk stays lean and the diagnostics stay independently auditable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .instances import InputError, Instance, MatrixInstance, SetSystemInstance, alive_mass
from .komlos import TruncationPrefix
from .walk import FullTrace, RunReport


@dataclass
class FreedmanQuery:
    """Deviation threshold, accumulated variance bound, and increment cap."""

    lam: float
    sigma_sq: float
    m: float

    def __post_init__(self):
        if self.lam < 0 or self.sigma_sq < 0 or self.m < 0:
            raise InputError("Freedman query parameters must be non-negative")


def freedman_bound(query: FreedmanQuery) -> float:
    """Martingale tail bound: min(1, 2 exp(-lam^2 / (2 (sigma^2 + m lam / 3))))."""
    lam, s2, m = query.lam, query.sigma_sq, query.m
    denom = 2.0 * (s2 + m * lam / 3.0)
    if denom == 0.0:
        return 0.0 if lam > 0 else 1.0
    return min(1.0, 2.0 * math.exp(-lam * lam / denom))


def freedman_bound_array(lam, sigma_sq, m) -> np.ndarray:
    """Vectorized version of :func:`freedman_bound`."""
    lam = np.asarray(lam, dtype=np.float64)
    s2 = np.asarray(sigma_sq, dtype=np.float64)
    mm = np.asarray(m, dtype=np.float64)
    if (lam < 0).any() or (s2 < 0).any() or (mm < 0).any():
        raise InputError("Freedman query parameters must be non-negative")
    denom = 2.0 * (s2 + mm * lam / 3.0)
    out = np.ones(np.broadcast(lam, denom).shape)
    zero = denom == 0.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = np.minimum(1.0, 2.0 * np.exp(-np.where(zero, 0.0, lam * lam / np.where(zero, 1.0, denom))))
    out = np.where(zero, np.where(lam > 0, 0.0, 1.0), vals)
    return out


@dataclass
class EnergyTrace:
    """Per-step ledgers of one row, indexed so that series[k] is after step k+1.

    ``centered`` is the running difference Q - Q' (the compensated quad
    energy).  ``disc_var`` and ``lin_var`` hold the per-step conditional
    variances of the disc and lin increments, for the dominance checks
    against 2 dQ' and 8 dQ'.
    """

    row: int
    activation_k: Optional[int]
    k: np.ndarray
    disc: np.ndarray
    energy: np.ndarray
    quad: np.ndarray
    lin: np.ndarray
    quad_pred: np.ndarray
    disc_var: np.ndarray
    lin_var: np.ndarray
    clamp_steps: np.ndarray

    @property
    def centered(self) -> np.ndarray:
        return self.quad - self.quad_pred

    def decomposition_error(self) -> float:
        """Worst relative error of E(k) = Q(k) + L(k) along the series."""
        resid = np.abs(self.energy - self.quad - self.lin)
        scale = np.maximum(np.abs(self.energy), 1.0)
        return float((resid / scale).max()) if resid.size else 0.0


def _row_weights(instance: Instance, row: int,
                 truncation: Optional[TruncationPrefix]) -> np.ndarray:
    if isinstance(instance, SetSystemInstance):
        if truncation is not None:
            raise InputError("truncations apply to matrix instances only")
        c = np.zeros(instance.n)
        c[list(instance.sets[row])] = 1.0
        return c
    c = instance.rows[row].copy()
    if truncation is not None:
        if truncation.row != row:
            raise InputError("truncation belongs to a different row")
        mask = np.zeros(instance.n, dtype=bool)
        mask[list(truncation.included)] = True
        c = np.where(mask, c, 0.0)
    return c


def energy_ledger(instance: Instance, trace: FullTrace, row: int,
                  truncation: Optional[TruncationPrefix] = None) -> EnergyTrace:
    """Replay recorded steps into the D/E/Q/L/Q' ledgers of one row."""
    if trace is None or not trace.records:
        raise InputError("energy ledgers need a full step trace")
    params = trace.params
    gamma = params.step_size
    c = _row_weights(instance, row, truncation)
    c2 = c * c

    n = instance.n
    x = np.zeros(n)
    ks, Ds, Es, Qs, Ls, Qps, dvars, lvars, clamps = [], [], [], [], [], [], [], [], []
    Q = L = Qp = 0.0
    activation = None
    for rec in trace.records:
        idx = rec.alive_index
        if idx is None or rec.update_vecs is None:
            raise InputError("step records lack update vectors; rerun with trace='full'")
        if activation is None:
            # classification always looks at the full row, even when the
            # ledger itself is truncated
            if isinstance(instance, SetSystemInstance):
                t = instance.t
                count = float(np.isin(idx, list(instance.sets[row])).sum())
                small = t == 0 or count < params.bigness * t - 1e-12
            else:
                full_sq = instance.rows[row] ** 2
                small = float(full_sq[idx].sum()) <= params.bigness
            if small:
                activation = rec.k
        U = rec.update_vecs
        signs = rec.signs.astype(np.float64)
        proj = U @ signs if U.size else np.zeros(idx.size)
        ca = c[idx]
        c2a = c2[idx]
        xa_prev = x[idx]
        dQ = gamma * gamma * float(c2a @ (proj * proj))
        dL = 2.0 * gamma * float((c2a * xa_prev) @ proj)
        dQp = gamma * gamma * float(c2a @ (U * U).sum(axis=1)) if U.size else 0.0
        dvar = gamma * gamma * float(np.sum((U.T @ ca) ** 2)) if U.size else 0.0
        lvar = 4.0 * gamma * gamma * float(np.sum((U.T @ (c2a * xa_prev)) ** 2)) if U.size else 0.0
        # mirror the walk update exactly, including the clamp
        xa = xa_prev + gamma * proj
        clamped = int(np.count_nonzero(np.abs(xa) > 1.0))
        np.clip(xa, -1.0, 1.0, out=xa)
        x[idx] = xa
        Q += dQ
        L += dL
        Qp += dQp
        ks.append(rec.k)
        Ds.append(float(c @ x))
        Es.append(float(c2 @ (x * x)))
        Qs.append(Q)
        Ls.append(L)
        Qps.append(Qp)
        dvars.append(dvar)
        lvars.append(lvar)
        clamps.append(clamped)
    return EnergyTrace(
        row=row, activation_k=activation,
        k=np.array(ks, dtype=np.int64),
        disc=np.array(Ds), energy=np.array(Es), quad=np.array(Qs),
        lin=np.array(Ls), quad_pred=np.array(Qps),
        disc_var=np.array(dvars), lin_var=np.array(lvars),
        clamp_steps=np.array(clamps, dtype=np.int64),
    )


def energy_rise_after_activation(trace: EnergyTrace, cap: float,
                                 slack: float = 0.0) -> bool:
    """Whether the post-activation energy rise stays within the cap.

    ``slack`` allows for the freeze-to-round gap when the energy series
    extends through the final rounding; for walk-only series it is zero.
    """
    if trace.activation_k is None:
        raise InputError("row never activated")
    base_idx = int(np.searchsorted(trace.k, trace.activation_k)) - 1
    base = float(trace.energy[base_idx]) if base_idx >= 0 else 0.0
    tail = trace.energy[base_idx + 1:] if base_idx + 1 < trace.energy.size else trace.energy[:0]
    rise = float(tail.max() - base) if tail.size else 0.0
    return rise <= cap + slack + 1e-9


@dataclass
class TailRow:
    lam: float
    exceed_frequency: float
    bound: float
    exceedances: int
    trials: int


@dataclass
class TailTable:
    """Empirical exceedance frequencies against the reference tail curve."""

    kind: str
    rows: list[TailRow]
    median_max_discrepancy: float
    p90_max_discrepancy: float

    def to_rows(self) -> list[dict]:
        return [dict(lam=r.lam, exceed_frequency=r.exceed_frequency,
                     bound=r.bound, exceedances=r.exceedances, trials=r.trials)
                for r in self.rows]


def tail_estimate(reports: Sequence[RunReport], lambda_grid: Sequence[float]) -> TailTable:
    """Exceedance frequencies of per-row discrepancies over a report batch.

    Set systems threshold at ``lam * sqrt(t)`` against the reference
    curve ``8 exp(-lam^2 / (100 a))``; matrices threshold at ``lam``
    against ``8 exp(-lam^2 / (1000 a))``.  The curves are reported for
    comparison, never asserted — their constants are loose.
    """
    reports = list(reports)
    if len(reports) < 2:
        raise InputError("tail estimates need at least two reports")
    kinds = {r.meta.get("kind") for r in reports}
    if len(kinds) != 1:
        raise InputError("mixed report kinds")
    kind = kinds.pop()
    bigness = reports[0].params.bigness
    all_disc = np.concatenate([np.abs(np.asarray(r.per_row_discrepancy)) for r in reports])
    maxes = np.array([r.max_discrepancy for r in reports])
    rows = []
    for lam in lambda_grid:
        if kind == "set_system":
            t = max(reports[0].meta.get("t", 1), 1)
            threshold = lam * math.sqrt(t)
            bound = min(1.0, 8.0 * math.exp(-lam * lam / (100.0 * bigness)))
        else:
            threshold = lam
            bound = min(1.0, 8.0 * math.exp(-lam * lam / (1000.0 * bigness)))
        exceed = int((all_disc >= threshold).sum()) if lam > 0 else int((all_disc > 0).sum())
        rows.append(TailRow(lam=float(lam),
                            exceed_frequency=exceed / all_disc.size,
                            bound=bound, exceedances=exceed,
                            trials=int(all_disc.size)))
    return TailTable(
        kind=kind, rows=rows,
        median_max_discrepancy=float(np.median(maxes)),
        p90_max_discrepancy=float(np.percentile(maxes, 90)),
    )
