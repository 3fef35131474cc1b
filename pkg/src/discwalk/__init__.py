"""Low-discrepancy ±1 colorings by a random walk over per-step SDPs.

Set systems with bounded element degree and matrices with unit-norm
columns share one engine: each step solves a small structured SDP that
pins high-mass rows to zero discrepancy while guaranteeing enough update
mass for progress, projects the solution onto random signs, and freezes
variables that reach the boundary.  Exact oracles, classical iterated
rounding, subspace certificates, and energy/martingale diagnostics ride
along for verification.
"""

from .analysis import (
    EnergyTrace,
    FreedmanQuery,
    energy_ledger,
    energy_rise_after_activation,
    freedman_bound,
    freedman_bound_array,
    tail_estimate,
)
from .certificates import (
    CertificateReport,
    Subspace,
    column_subspace,
    dual_floor_certificate,
    nsd_subspace,
    subspace_intersection,
)
from .generators import gen_komlos_matrix, gen_set_system
from .instances import (
    DEFAULT_BIGNESS,
    InputError,
    MatrixInstance,
    RowClass,
    SetSystemInstance,
    activation_step,
    alive_mass,
    classify_rows,
    discrepancy,
    max_degree,
)
from .komlos import (
    TruncationPrefix,
    large_entry_l1,
    preprocess,
    truncated_discrepancy,
    truncation_prefixes,
)
from .oracle import (
    BaselineReport,
    beck_fiala_rounding,
    exact_min_discrepancy,
    random_coloring,
)
from .sdp import (
    DEFAULT_TOL,
    DualSolution,
    PdPair,
    ResidualReport,
    SdpProblem,
    SdpSolution,
    SolverError,
    StepSolver,
    ToleranceSet,
    build_sdp_beck_fiala,
    build_sdp_komlos,
    check_dual_feasibility,
    check_feasibility,
    factorize,
    make_interior_dual,
    solve,
)
from .walk import (
    RunReport,
    StepRecord,
    WalkParams,
    WalkState,
    final_round,
    init_state,
    potential,
    run,
    sign_vector,
    step,
)

__version__ = "0.1.0"
