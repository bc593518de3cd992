"""Monte Carlo lab for iterated random subdivision and site crossings."""

__version__ = "0.1.0"

from ._stats import MCEstimate, wilson
from .bounds import (
    BoundParams,
    DomainError,
    b1_estimate,
    bound_table_row,
    crossing_lower_bound,
    delta_iteration,
    f_eval,
    fixed_point,
    g_eval,
    h_eval,
    y1_root,
    y2_root,
)
from .core import (
    CrossingReport,
    EnumerationCapError,
    SiteConfig,
    counts_to_prob,
    crossing,
    duality_check,
    exact_crossing_counts,
    exact_crossing_prob,
    sheet_blocked,
)
from .enhance import (
    Boundary,
    RuleParams,
    apply_diminishment,
    apply_enhancement,
    phi_ns,
    psi_ns,
)
from .estimate import (
    CouplingCheck,
    CriticalEstimate,
    RuleTarget,
    ThetaTarget,
    correlation_length,
    coupling_inequality_check,
    critical_point,
    lattice_critical_point,
    rule_estimate,
    scaling_experiment,
    theta_estimate,
    theta_tilde_estimate,
)
from .fractal import (
    BudgetError,
    FractalParams,
    FractalRealization,
    dump_realization,
    level_crossing,
    level_sheet,
    sample,
)
from .lattice import Adjacency, BoxShape

__all__ = [
    "__version__",
    "MCEstimate",
    "wilson",
    "Adjacency",
    "BoxShape",
    "SiteConfig",
    "CrossingReport",
    "EnumerationCapError",
    "crossing",
    "sheet_blocked",
    "duality_check",
    "exact_crossing_counts",
    "exact_crossing_prob",
    "counts_to_prob",
    "FractalParams",
    "FractalRealization",
    "BudgetError",
    "sample",
    "level_crossing",
    "level_sheet",
    "dump_realization",
    "Boundary",
    "RuleParams",
    "apply_enhancement",
    "apply_diminishment",
    "phi_ns",
    "psi_ns",
    "ThetaTarget",
    "RuleTarget",
    "CriticalEstimate",
    "CouplingCheck",
    "theta_estimate",
    "theta_tilde_estimate",
    "rule_estimate",
    "critical_point",
    "lattice_critical_point",
    "correlation_length",
    "scaling_experiment",
    "coupling_inequality_check",
    "BoundParams",
    "DomainError",
    "f_eval",
    "g_eval",
    "h_eval",
    "fixed_point",
    "y1_root",
    "y2_root",
    "delta_iteration",
    "crossing_lower_bound",
    "bound_table_row",
    "b1_estimate",
]
