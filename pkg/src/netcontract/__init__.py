"""Optimal linear contracts for risk-averse agents whose efforts spill over a network."""

from .config import TOL, Tolerances
from .contracts import (
    ContractSolution,
    empty_baseline,
    optimal_v,
    optimal_v_het,
    optimal_z,
    principal_profit,
    solve,
    w_matrix,
)
from .equilibrium import (
    Contract,
    EffortProfile,
    best_response,
    cara_utility,
    certainty_equivalent,
    certainty_equivalents,
    influence_matrix,
    nash_efforts,
)
from .errors import (
    AssumptionViolation,
    ConsistencyError,
    ModelValidationError,
    NetContractError,
    NumericError,
    PropertyViolation,
)
from .model import (
    AssumptionReport,
    EconParams,
    ModelInstance,
    Network,
    build_instance,
    check_assumptions,
    load_model,
    parse_model,
    spectral_radius,
    weak_components,
)
from .oracle import iterate_best_response, maximize_profit_numeric, simulate_outputs
from .placement import beta_sweep, crossing_points, enumerate_placements, feasible_beta_max
from .statics import (
    classify_link_effect,
    da_dbeta,
    da_dg,
    da_dparam,
    dprofit,
    dv_dbeta,
    dv_dg,
    dv_dparam,
    fd_derivative,
    marginal_effect,
)

__version__ = "0.1.0"
