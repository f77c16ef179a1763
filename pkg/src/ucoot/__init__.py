"""Co-optimal transport and its unbalanced extension on dense tabular data."""

from .coot import (
    Block,
    InnerSolver,
    ObjectiveParts,
    SolveReport,
    SolverConfig,
    WarmStart,
    bcd_solve,
    evaluate_objective,
    linearized_cost,
    local_uot_problem,
    warm_start_coot,
)
from .core import CouplingPair, Dataset, Divergence, Measure, kl_mass, load_dataset, product_kl, tensor_kl
from .estimator import COOT, UCOOT
from .exceptions import (
    ConfigurationError,
    ConvergenceWarning,
    DataFormatError,
    DegenerateProblemError,
    DimensionError,
    UcootError,
)
from .robustness import (
    BoundsReport,
    ContaminationSpec,
    contaminate,
    cost_extrema,
    fig2_instance,
    lemma_s1_min,
    prop2_bound,
    thm2_bound,
)
from .transfer import (
    LabelVector,
    barycentric_map,
    block_diag_accuracy,
    class_marginal_tv,
    foscttm,
    label_propagate,
)
from .uot import UotProblem, nnpr_solve, scaling_solve, uot_objective

__version__ = "0.1.0"
