"""Time-integrated optimal transport (TiOT) distances between time series."""

__version__ = "0.1.0"

from .errors import DataError, InvalidInputError, SolverFailure, TiOTError
from .measures import (
    CostPair,
    DiscreteMeasure,
    TimeSeries,
    build_cost_pair,
    combine,
    euclidean_dist,
    lift_to_measure,
    zscore_normalize,
)
from .exact import (
    ExactTiOTSolution,
    TransportPlan,
    TransportSimplex,
    solve_discrete_ot,
    tiot_exact,
    tiot_lp_dual,
    value_and_supergradient,
)
from .entropic import (
    DualState,
    EtiotSolution,
    HBCDConfig,
    TheoryConstants,
    curvature_sigma,
    dual_objective,
    etaot_distance,
    etiot,
    grad_w,
    hbcd_solve,
    sinkhorn_fixed_cost,
)

__all__ = [
    "CostPair",
    "DataError",
    "DiscreteMeasure",
    "DualState",
    "EtiotSolution",
    "ExactTiOTSolution",
    "HBCDConfig",
    "InvalidInputError",
    "SolverFailure",
    "TheoryConstants",
    "TiOTError",
    "TimeSeries",
    "TransportPlan",
    "TransportSimplex",
    "build_cost_pair",
    "combine",
    "curvature_sigma",
    "dual_objective",
    "etaot_distance",
    "etiot",
    "euclidean_dist",
    "grad_w",
    "hbcd_solve",
    "lift_to_measure",
    "sinkhorn_fixed_cost",
    "solve_discrete_ot",
    "tiot_exact",
    "tiot_lp_dual",
    "value_and_supergradient",
    "zscore_normalize",
]
