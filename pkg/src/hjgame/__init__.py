"""Scalar two-player discounted differential game with piecewise-linear costs:
regime classification, admissible-solution construction, and feedback Nash
equilibrium certification."""

from .model import (
    CostSpec,
    Regime,
    RegimeReport,
    Sector,
    classify_regime,
    classify_sector,
    eval_cost,
    load_spec,
    spec_from_json_dict,
    validate_spec,
)
from .orbits import (
    ManifoldTag,
    Orbit,
    PhaseState,
    StopConditions,
    Termination,
    TerminationKind,
    find_intersection,
    integrate,
    reconstruct_x,
    shoot_stable,
    shoot_unstable,
)
from .phase import (
    DirectionMap,
    EigenData,
    capital_delta,
    direction_map,
    eigen_slope,
    linearization,
    vector_field,
)
from .solutions import (
    AdmissibilityReport,
    AdmissibleSolution,
    NonexistenceCertificate,
    PeriodicCost,
    Tolerances,
    build_conflicting_extra,
    build_conflicting_family,
    build_cooperative,
    build_mixed_family,
    build_periodic,
    certify_nonexistence,
    check_admissibility,
    load_solution,
    reconstruct_values,
    save_solution,
)

__version__ = "0.1.0"
