"""The random-walk driver: per-step solve, random projection, freezing.

One step: classify rows by alive mass, solve the structured SDP on the
alive variables, draw independent ±1 signs, move every alive variable by
``step_size * <signs, u_i>``, clamp to [-1, 1], and freeze everything at
or beyond the freeze threshold.  The walk ends when nothing is alive (or
a step cap is hit), after which frozen variables round to their sign and
any survivors are forced to a sign deterministically.

Each step's sign vector is derived from ``(seed, k)`` through a
counter-based generator, so records are reproducible independently of
execution order.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import komlos as _komlos
from .instances import (
    DEFAULT_BIGNESS,
    InputError,
    Instance,
    MatrixInstance,
    SetSystemInstance,
    alive_mass,
    discrepancy,
)
from .sdp import (
    DEFAULT_TOL,
    KIND_DISC,
    KIND_ORTH,
    SdpProblem,
    SdpSolution,
    StepSolver,
    ToleranceSet,
)

log = logging.getLogger(__name__)

TRACE_NONE = "none"
TRACE_SCALAR = "scalar"
TRACE_FULL = "full"


@dataclass
class WalkParams:
    """Step size, step budget, bigness, freeze threshold, seed, and mode."""

    step_size: float
    max_steps: int
    bigness: float = DEFAULT_BIGNESS
    freeze_threshold: float = 0.5
    seed: int = 0
    mode: str = "practical"
    tmax_extension: float = 2.0
    trace: str = TRACE_NONE
    snapshot_every: int = 100
    preprocess: bool = True

    def __post_init__(self):
        if self.step_size <= 0:
            raise InputError("step_size must be positive")
        if self.bigness < 1:
            raise InputError("bigness must be at least 1")
        if not 0 < self.freeze_threshold < 1:
            raise InputError("freeze_threshold must lie strictly between 0 and 1")
        if self.max_steps < 0:
            raise InputError("max_steps must be non-negative")
        if self.seed < 0:
            raise InputError("seed must be non-negative")
        if self.mode not in ("practical", "paper"):
            raise InputError("mode must be 'practical' or 'paper'")
        if self.trace not in (TRACE_NONE, TRACE_SCALAR, TRACE_FULL):
            raise InputError("trace must be none, scalar, or full")
        if self.tmax_extension < 1.0:
            raise InputError("tmax_extension must be at least 1")

    @classmethod
    def practical(cls, instance: Instance, seed: int = 0, **overrides) -> "WalkParams":
        """Desk-scale defaults: step size 0.1/sqrt(n), generous step cap."""
        n = max(instance.n, 1)
        gamma = overrides.pop("step_size", 0.1 / math.sqrt(n))
        cap = overrides.pop(
            "max_steps",
            int(math.ceil(50.0 * (3.0 / gamma ** 2) * math.log(2 * n))))
        return cls(step_size=gamma, max_steps=cap,
                   freeze_threshold=_default_threshold(instance.n),
                   seed=seed, mode="practical", **overrides)

    @classmethod
    def paper_faithful(cls, instance: Instance, seed: int = 0, **overrides) -> "WalkParams":
        """The analysis parameters; the step budget grows like n^4 log n
        for set systems and is astronomically large for matrices."""
        n = instance.n
        if n < 2:
            raise InputError("paper-faithful parameters need n >= 2")
        if isinstance(instance, SetSystemInstance):
            gamma = 1.0 / (n * n * math.log(n))
        else:
            gamma = 1.0 / n ** 6
        gamma = overrides.pop("step_size", gamma)
        cap = overrides.pop("max_steps",
                            int(math.ceil((12.0 / gamma ** 2) * math.log(n))))
        return cls(step_size=gamma, max_steps=cap,
                   freeze_threshold=_default_threshold(n),
                   seed=seed, mode="paper", **overrides)

    def to_dict(self) -> dict:
        return asdict(self)


def _default_threshold(n: int) -> float:
    # 1 - 1/n, except at n <= 1 where that leaves no open freeze band
    return 1.0 - 1.0 / n if n >= 2 else 0.5


@dataclass
class WalkState:
    """Fractional coloring, alive mask, step counter, and the RNG key."""

    x: np.ndarray
    alive: np.ndarray
    step_count: int
    rng_key: int


def sign_vector(rng_key: int, k: int, size: int) -> np.ndarray:
    """±1 signs for step k from a counter-based generator keyed on (key, k)."""
    gen = np.random.Generator(np.random.Philox(key=(int(rng_key) << 64) + int(k)))
    return (gen.integers(0, 2, size=size, dtype=np.int64) * 2 - 1).astype(np.float64)


def init_state(instance: Instance, params: WalkParams) -> WalkState:
    """All-zero coloring with every variable alive."""
    return WalkState(
        x=np.zeros(instance.n),
        alive=np.ones(instance.n, dtype=bool),
        step_count=0,
        rng_key=params.seed,
    )


def potential(state: WalkState) -> float:
    """Sum of 1 - x_i^2 over the alive variables."""
    xa = state.x[state.alive]
    return float(np.sum(1.0 - xa * xa))


def final_round(state: WalkState) -> np.ndarray:
    """Round to ±1: sign of the value, with exact zeros sent to +1.

    Frozen variables sit at magnitude >= the freeze threshold, so for them
    this coincides with rounding up iff the value reached the threshold;
    still-alive variables get a deterministic sign.
    """
    return np.where(state.x >= 0.0, 1, -1).astype(np.int8)


@dataclass
class StepRecord:
    """What one step did; heavyweight fields only in full-trace mode."""

    k: int
    objective: float
    signs: np.ndarray
    frozen_this_step: np.ndarray
    per_row_increment: Optional[np.ndarray] = None
    alive_index: Optional[np.ndarray] = None
    update_vecs: Optional[np.ndarray] = None
    clamped: int = 0


@dataclass
class FullTrace:
    """Per-step replay data retained in full-trace mode."""

    params: WalkParams
    records: list[StepRecord] = field(default_factory=list)


@dataclass
class ScalarTrace:
    """Light per-step series: objective, frozen count, potential."""

    k: list[int] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    frozen_count: list[int] = field(default_factory=list)
    potential: list[float] = field(default_factory=list)
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)


@dataclass
class RunDiagnostics:
    """Scalar aggregates checked by the acceptance suite."""

    min_objective_margin: float = math.inf    # min over steps of trace - d/3
    min_objective_ratio: float = math.inf     # min over steps of trace / d
    max_big_increment: float = 0.0
    max_preactivation_disc: float = 0.0
    max_potential_identity_err: float = 0.0   # relative
    max_eq_residual: float = 0.0
    max_pd_violation: float = 0.0
    max_diag_overflow: float = 0.0
    min_psd_eigenvalue: float = 0.0
    clamp_events: int = 0
    fast_path_steps: int = 0
    engaged_steps: int = 0
    max_step_seconds: float = 0.0
    total_solve_seconds: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("min_objective_margin", "min_objective_ratio"):
            if math.isinf(d[key]):
                d[key] = None
        return d


@dataclass
class RunReport:
    """Everything a finished run exposes, reproducible from (instance, params)."""

    final_coloring: np.ndarray
    per_row_discrepancy: np.ndarray
    max_discrepancy: float
    steps_taken: int
    alive_at_end_of_walk: int
    seed: int
    params: WalkParams
    diagnostics: RunDiagnostics
    meta: dict
    bounds: dict
    activation_steps: list
    forced_rounding: bool
    discarded_rows: list
    traces: Optional[object] = None

    def to_dict(self) -> dict:
        return {
            "kind": self.meta.get("kind"),
            "meta": self.meta,
            "params": self.params.to_dict(),
            "seed": self.seed,
            "final_coloring": [int(v) for v in self.final_coloring],
            "per_row_discrepancy": [float(v) for v in self.per_row_discrepancy],
            "max_discrepancy": float(self.max_discrepancy),
            "steps_taken": int(self.steps_taken),
            "alive_at_end_of_walk": int(self.alive_at_end_of_walk),
            "forced_rounding": bool(self.forced_rounding),
            "activation_steps": list(self.activation_steps),
            "discarded_rows": list(self.discarded_rows),
            "bounds": self.bounds,
            "diagnostics": self.diagnostics.to_dict(),
        }


class _ProblemFactory:
    """Builds the per-step SDP quickly by caching per-epoch structure.

    An epoch is a stretch of steps with an unchanged alive set and
    big/small split; within it only the orthogonality vectors move (they
    carry the coloring), and those are refreshed with one vectorized
    multiply.  Output is identical to the pure builders in ``sdp``.
    """

    def __init__(self, instance: Instance, bigness: float):
        self.instance = instance
        self.bigness = bigness
        self._key = None
        self._static = None

    def build(self, x: np.ndarray, alive: np.ndarray) -> tuple[SdpProblem, np.ndarray]:
        from .instances import big_row_mask

        big = big_row_mask(self.instance, alive, self.bigness)
        key = (alive.tobytes(), big.tobytes())
        if key != self._key:
            self._static = self._rebuild(alive, big)
            self._key = key
        (alive_idx, eq_vecs, eq_rows, disc_v, orth_base, pd_w,
         pd_kind, pd_row, pd_threshold, orth_mask) = self._static
        pd_v = disc_v.copy()
        if orth_mask.any():
            pd_v[orth_mask] = orth_base * x[alive_idx][None, :]
        problem = SdpProblem(
            alive_index=alive_idx, eq_vecs=eq_vecs, eq_rows=eq_rows,
            pd_v=pd_v, pd_w=pd_w, pd_kind=pd_kind, pd_row=pd_row,
            pd_threshold=pd_threshold)
        return problem, big

    def _rebuild(self, alive: np.ndarray, big: np.ndarray):
        inst = self.instance
        alive_idx = np.flatnonzero(alive)
        d = alive_idx.size
        eq_vecs, eq_rows = [], []
        pv, base, pw, pk, pr, pt = [], [], [], [], [], []
        if isinstance(inst, SetSystemInstance):
            local = np.full(inst.n, -1, dtype=np.int64)
            local[alive_idx] = np.arange(d)
            for j, members in enumerate(inst.sets):
                sel = [local[i] for i in members if local[i] >= 0]
                if not sel:
                    continue
                ind = np.zeros(d)
                ind[sel] = 1.0
                if big[j]:
                    eq_vecs.append(ind); eq_rows.append(j)
                else:
                    pv.append(ind); base.append(np.zeros(d)); pw.append(ind)
                    pk.append(KIND_DISC); pr.append(j); pt.append(np.nan)
                    pv.append(np.zeros(d)); base.append(ind); pw.append(ind)
                    pk.append(KIND_ORTH); pr.append(j); pt.append(np.nan)
        else:
            for j in range(inst.m):
                ba = inst.rows[j, alive_idx]
                if big[j]:
                    eq_vecs.append(ba.copy()); eq_rows.append(j)
                    continue
                mag = np.abs(ba)
                cutoffs = np.unique(mag[mag > 0])
                if cutoffs.size == 0:
                    continue
                sel = (mag[None, :] <= cutoffs[:, None]) & (mag[None, :] > 0)
                b1 = sel * ba[None, :]
                b2 = b1 * ba[None, :]
                b4 = b2 * b2
                for p, c in enumerate(cutoffs):
                    pv.append(b1[p]); base.append(np.zeros(d)); pw.append(b2[p])
                    pk.append(KIND_DISC); pr.append(j); pt.append(float(c))
                    pv.append(np.zeros(d)); base.append(b2[p]); pw.append(b4[p])
                    pk.append(KIND_ORTH); pr.append(j); pt.append(float(c))
        pd_kind = np.array(pk, dtype=np.int8)
        return (
            alive_idx,
            np.array(eq_vecs).reshape(-1, d),
            np.array(eq_rows, dtype=np.int64),
            np.array(pv).reshape(-1, d),
            np.array(base).reshape(-1, d)[pd_kind == KIND_ORTH] if pk else np.zeros((0, d)),
            np.array(pw).reshape(-1, d),
            pd_kind,
            np.array(pr, dtype=np.int64),
            np.array(pt, dtype=np.float64),
            pd_kind == KIND_ORTH,
        )


class _RunContext:
    """Per-run bookkeeping: activation tracking, diagnostics, traces."""

    def __init__(self, instance: Instance, params: WalkParams):
        self.instance = instance
        self.params = params
        self.weights = instance.weights
        m = self.weights.shape[0]
        self.activation = np.full(m, -1, dtype=np.int64)
        self.diag = RunDiagnostics()
        self.scalar = ScalarTrace() if params.trace != TRACE_NONE else None
        self.full = FullTrace(params=params) if params.trace == TRACE_FULL else None


def step(instance: Instance, state: WalkState, params: WalkParams,
         solver: Optional[StepSolver] = None,
         _ctx: Optional[_RunContext] = None,
         _factory: Optional[_ProblemFactory] = None) -> tuple[WalkState, StepRecord]:
    """Advance the walk by one step; returns the new state and its record.

    Standalone calls construct a cold solver; a run passes its own so the
    per-step solves warm-start each other.
    """
    if not state.alive.any():
        raise InputError("step needs at least one alive variable")
    solver = solver if solver is not None else StepSolver()
    factory = _factory if _factory is not None else _ProblemFactory(instance, params.bigness)
    gamma = params.step_size
    k = state.step_count + 1

    # defensive sweep: anything already at/over the threshold freezes
    # untouched (a no-op in normal runs, where freezing happens at step end)
    over = state.alive & (np.abs(state.x) >= params.freeze_threshold)
    alive = state.alive & ~over
    pre_frozen = np.flatnonzero(over)

    x_new = state.x.copy()
    alive_idx = np.flatnonzero(alive)
    tick = time.perf_counter()

    if alive_idx.size:
        problem, big = factory.build(state.x, alive)
        sol = solver.solve(problem)
        U = sol.vectors
        signs = sign_vector(state.rng_key, k, U.shape[1])
        proj = U @ signs if U.size else np.zeros(alive_idx.size)
        delta = gamma * proj
        xa = x_new[alive_idx] + delta
        clamped = int(np.count_nonzero(np.abs(xa) > 1.0))
        np.clip(xa, -1.0, 1.0, out=xa)
        x_new[alive_idx] = xa
        newly_local = np.abs(xa) >= params.freeze_threshold
        newly = alive_idx[newly_local]
        objective = sol.objective
    else:
        sol = None
        big = np.zeros(instance.weights.shape[0], dtype=bool)
        signs = np.zeros(0)
        delta = np.zeros(0)
        clamped = 0
        newly = np.zeros(0, dtype=np.int64)
        objective = 0.0

    alive_new = alive.copy()
    alive_new[newly] = False
    frozen = np.concatenate([pre_frozen, newly])
    new_state = WalkState(x=x_new, alive=alive_new, step_count=k,
                          rng_key=state.rng_key)

    record = StepRecord(k=k, objective=objective, signs=signs.astype(np.int8),
                        frozen_this_step=frozen, clamped=clamped)

    if _ctx is not None:
        _observe(_ctx, state, new_state, sol, big, alive_idx, delta,
                 record, time.perf_counter() - tick)
    return new_state, record


def _observe(ctx: _RunContext, state: WalkState, new_state: WalkState,
             sol: Optional[SdpSolution], big: np.ndarray,
             alive_idx: np.ndarray, delta: np.ndarray,
             record: StepRecord, seconds: float):
    diag = ctx.diag
    params = ctx.params
    k = record.k
    diag.max_step_seconds = max(diag.max_step_seconds, seconds)
    diag.total_solve_seconds += seconds
    diag.clamp_events += record.clamped

    if sol is not None:
        d = alive_idx.size
        res = sol.residuals
        diag.min_objective_margin = min(diag.min_objective_margin, sol.objective - d / 3.0)
        diag.min_objective_ratio = min(diag.min_objective_ratio, sol.objective / d)
        diag.max_eq_residual = max(diag.max_eq_residual, res.max_eq)
        diag.max_pd_violation = max(diag.max_pd_violation, res.max_pd_violation)
        diag.max_diag_overflow = max(diag.max_diag_overflow, res.max_diag_overflow)
        diag.min_psd_eigenvalue = min(diag.min_psd_eigenvalue, res.min_eigenvalue)
        if sol.info.fast_path:
            diag.fast_path_steps += 1
        else:
            diag.engaged_steps += 1
        # analytic conditional-expectation identity for the potential drop:
        # E[G_k | solve] = G_restricted - gamma^2 * sum_i |u_i|^2, which must
        # match G_restricted - gamma^2 * trace(X)
        xa = state.x[alive_idx]
        g_restricted = float(np.sum(1.0 - xa * xa))
        u_mass = float((sol.vectors * sol.vectors).sum())
        gamma2 = params.step_size ** 2
        rel = gamma2 * abs(u_mass - sol.objective) / max(g_restricted, 1e-12)
        diag.max_potential_identity_err = max(diag.max_potential_identity_err, rel)

    w = ctx.weights
    if w.size:
        if big.any():
            big_idx = np.flatnonzero(big)
            if alive_idx.size:
                big_inc = w[np.ix_(big_idx, alive_idx)] @ delta
                if big_inc.size:
                    diag.max_big_increment = max(diag.max_big_increment,
                                                 float(np.abs(big_inc).max()))
        newly_active = (~big) & (ctx.activation < 0)
        if newly_active.any():
            pre_disc = w[newly_active] @ state.x
            ctx.activation[newly_active] = k
            diag.max_preactivation_disc = max(diag.max_preactivation_disc,
                                              float(np.abs(pre_disc).max()))

    if ctx.scalar is not None:
        ctx.scalar.k.append(k)
        ctx.scalar.objective.append(record.objective)
        ctx.scalar.frozen_count.append(int(new_state.alive.size - new_state.alive.sum()))
        ctx.scalar.potential.append(potential(new_state))
        if params.snapshot_every and k % params.snapshot_every == 0:
            ctx.scalar.snapshots.append((k, (w @ new_state.x).copy()))
    if ctx.full is not None:
        record.alive_index = alive_idx.copy()
        if sol is not None:
            record.update_vecs = sol.vectors.copy()
        record.per_row_increment = None
        if alive_idx.size:
            dx = np.zeros(state.x.shape[0])
            dx[alive_idx] = delta
            record.per_row_increment = w @ dx
        ctx.full.records.append(record)


def run(instance: Instance, params: WalkParams) -> RunReport:
    """Drive the walk to completion and assemble the report.

    Matrix instances are preprocessed first (rows with l1 mass below
    sqrt(ln n) sit out the walk); the report always measures every
    original row against the final coloring.
    """
    walked, discarded = instance, []
    if isinstance(instance, MatrixInstance) and params.preprocess and instance.n >= 2:
        walked, discarded = _komlos.preprocess(instance)

    state = init_state(walked, params)
    solver = StepSolver()
    factory = _ProblemFactory(walked, params.bigness)
    ctx = _RunContext(walked, params)

    hard_cap = int(math.ceil(params.max_steps * params.tmax_extension)) \
        if params.mode == "practical" else params.max_steps
    forced = False
    while state.alive.any():
        if state.step_count >= hard_cap:
            forced = True
            break
        state, _ = step(walked, state, params, solver, _ctx=ctx, _factory=factory)

    alive_at_end = int(state.alive.sum())
    coloring = final_round(state)

    per_row, max_abs = discrepancy(instance, coloring.astype(np.float64))
    # map activation data back to the original row indexing
    gone = set(discarded)
    kept = [j for j in range(instance.weights.shape[0]) if j not in gone]
    activation = [None] * instance.weights.shape[0]
    for local_j, orig_j in enumerate(kept):
        a = int(ctx.activation[local_j])
        activation[orig_j] = a if a > 0 else None

    meta = {
        "kind": "set_system" if isinstance(instance, SetSystemInstance) else "matrix",
        "n": instance.n,
        "m": instance.weights.shape[0],
    }
    bounds: dict = {}
    if isinstance(instance, SetSystemInstance):
        t = instance.t
        meta["t"] = t
        bounds["hard_cap"] = 2.0 * params.bigness * t + 1.0
        if instance.n >= 2 and t >= 1:
            bounds["sqrt_t_log_n"] = math.sqrt(t * math.log(instance.n))
            bounds["ratio"] = max_abs / bounds["sqrt_t_log_n"]
    else:
        if instance.n >= 2:
            root = math.sqrt(math.log(instance.n))
            lam = 8.0 * root
            cutoff = 4.0 * params.bigness / lam
            trunc = instance.rows * (np.abs(instance.rows) <= cutoff)
            trunc_disc = trunc @ coloring.astype(np.float64)
            bounds["sqrt_log_n"] = root
            bounds["ratio"] = max_abs / root
            bounds["lambda_report"] = lam
            bounds["max_truncated_discrepancy"] = float(np.abs(trunc_disc).max()) if trunc_disc.size else 0.0
            bounds["survivor_bound"] = _komlos.survivor_bound(instance.n)
            bounds["survivors"] = instance.weights.shape[0] - len(discarded)

    traces = None
    if params.trace == TRACE_FULL:
        traces = ctx.full
    elif params.trace == TRACE_SCALAR:
        traces = ctx.scalar

    return RunReport(
        final_coloring=coloring,
        per_row_discrepancy=per_row,
        max_discrepancy=max_abs,
        steps_taken=state.step_count,
        alive_at_end_of_walk=alive_at_end,
        seed=params.seed,
        params=params,
        diagnostics=ctx.diag,
        meta=meta,
        bounds=bounds,
        activation_steps=activation,
        forced_rounding=forced,
        discarded_rows=list(discarded),
        traces=traces,
    )
