"""Truncated moment problems on ``y = q(x)`` and ``y x^l = 1`` via univariate Hankel problems."""

from .completion import (
    FeasibilityOutcome,
    SolveReport,
    atom_bound,
    complete_feasibility,
    complete_single_entry,
    export_sdpa,
    solve_cubic_odd,
    solve_curve,
    solve_parabola,
)
from .core import (
    DEFAULT_TOLERANCES,
    AffineMap,
    AtomicMeasure2D,
    BivariateMomentSequence,
    CurveTMPError,
    GraphCurve,
    HyperbolicCurve,
    Status,
    ToleranceConfig,
    apply_alt,
    build_moment_matrix,
    check_curve_relations,
    monomial_curve,
    moment_residual,
    riesz_eval,
    synth_moments,
)
from .hamburger import AtomicMeasure1D, solve_sthmp, solve_thmp
from .hankel import PartialUnivariateSequence, UnivariateMomentSequence, check_nrg, check_prg, sequence_rank
from .reduction import lift_measure, reduce_to_univariate

__all__ = [name for name in dir() if not name.startswith("_")]
