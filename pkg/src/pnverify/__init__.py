"""Sound-and-complete robustness verification for polynomial networks.

Proves or refutes l-inf robustness of skip-product / nested-affine
polynomial networks by branch and bound: PGD upper bounds, certified lower
bounds from interval propagation or box convexification, widest-side
branching.
"""

from .bab import (
    BabConfig,
    BoundMethod,
    Falsified,
    InstanceResult,
    Minimum,
    Subproblem,
    Timeout,
    Verdict,
    Verified,
    bab_minimize,
    branch,
    verify_instance,
)
from .convexify import (
    AlphaShift,
    ConvergenceFailure,
    PowerMethodConfig,
    alpha_objective_gradient,
    alpha_objective_value,
    hessian_diag_lower,
    lh_matvec,
    mn_hessian_rowsum,
    nonuniform_alpha,
    power_method_uniform_alpha,
)
from .intervals import (
    Box,
    ibp_gradient_bounds,
    ibp_hessian_bounds_dense,
    ibp_hidden_bounds,
    ibp_objective_lower,
    ibp_output_bounds,
)
from .modelio import (
    Dataset,
    MalformedFile,
    TrainingDiverged,
    generate_random_network,
    load_dataset_csv,
    load_model,
    save_dataset_csv,
    save_model,
    toy_train,
)
from .networks import (
    CcpNetwork,
    ConvCcpNetwork,
    ConvLayerSpec,
    NcpNetwork,
    Objective,
    forward,
    lower_conv_network,
    objective_gradient,
    objective_hessian_dense,
    objective_value,
)
from .pgd import NumericalError, PgdConfig, lower_bound_alpha, pgd_minimize, upper_bound

__version__ = "0.1.0"

__all__ = [
    "AlphaShift",
    "BabConfig",
    "BoundMethod",
    "Box",
    "CcpNetwork",
    "ConvCcpNetwork",
    "ConvLayerSpec",
    "ConvergenceFailure",
    "Dataset",
    "Falsified",
    "InstanceResult",
    "MalformedFile",
    "Minimum",
    "NcpNetwork",
    "NumericalError",
    "Objective",
    "PgdConfig",
    "PowerMethodConfig",
    "Subproblem",
    "Timeout",
    "TrainingDiverged",
    "Verdict",
    "Verified",
    "alpha_objective_gradient",
    "alpha_objective_value",
    "bab_minimize",
    "branch",
    "forward",
    "generate_random_network",
    "hessian_diag_lower",
    "ibp_gradient_bounds",
    "ibp_hessian_bounds_dense",
    "ibp_hidden_bounds",
    "ibp_objective_lower",
    "ibp_output_bounds",
    "lh_matvec",
    "load_dataset_csv",
    "load_model",
    "lower_bound_alpha",
    "lower_conv_network",
    "mn_hessian_rowsum",
    "nonuniform_alpha",
    "objective_gradient",
    "objective_hessian_dense",
    "objective_value",
    "pgd_minimize",
    "power_method_uniform_alpha",
    "save_dataset_csv",
    "save_model",
    "toy_train",
    "upper_bound",
    "verify_instance",
]
