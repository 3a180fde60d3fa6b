"""graphlds: joint estimation of linear dynamical systems on graph nodes."""

from .graphs import (
    GraphKind,
    GraphTopology,
    LaplacianSpectrum,
    build_laplacian,
    closed_form_spectrum,
    complete_graph,
    custom_graph,
    delocalization_theta,
    load_edge_list,
    path_graph,
    quadratic_variation,
    spectrum,
    star_graph,
)
from .ensembles import (
    EnsembleMeta,
    GammaDiagnostics,
    NoiseKind,
    NoiseModel,
    SimulationOverflowError,
    SystemEnsemble,
    TrajectoryBundle,
    gamma_diagnostics,
    grammian,
    max_spectral_radius,
    normalize_spectral_radius,
    sample_holder_ensemble,
    simulate,
    spectral_radius,
)
from .solver import (
    ConvergenceError,
    GramBlocks,
    PenalizedOperator,
    SingularSystemError,
    apply_penalized,
    gram_blocks,
    pinv_solve,
    solve_spd,
    stack_mats,
    unstack_mats,
)
from .estimators import (
    EstimateSet,
    EstimatorConfig,
    LambdaRule,
    Method,
    TauRule,
    estimate,
    hub_mode_energy,
    lambda_rule,
    laplacian_smoothing,
    nodewise_ols,
    pooled_ols,
    smoothing_objective,
    subspace_ls,
    tau_rule,
)
from .experiments import (
    ExperimentPlan,
    GroupSummary,
    MethodSpec,
    MetricRow,
    load_plan,
    mse,
    parse_csv,
    plan_from_dict,
    plan_to_dict,
    read_csv,
    rmse,
    rows_to_csv,
    run_plan,
    run_trial,
    summarize,
    trial_seed,
    write_csv,
    write_plot_data,
)

__version__ = "0.1.0"
