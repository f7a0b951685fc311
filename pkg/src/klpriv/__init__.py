"""KL privacy accounting for noisy gradient descent on ReLU networks."""

__version__ = "0.1.0"

from .accountant import (
    BoundReport,
    DnnBoundInputs,
    KLConstant,
    TradeoffSchedule,
    dnn_drift_bound,
    expected_grad_norm_init,
    expected_output_sqnorm_init,
    gradient_norm_constant_B,
    kl_bound_linearized,
    kl_to_dp_delta,
    lazy_R_bound,
    table_closed_form_B,
    tradeoff_schedule,
)
from .data import (
    Dataset,
    Neighbor,
    NeighborSet,
    NormMode,
    enumerate_neighbors,
    load_csv,
    normalize_to_sqrt_d,
    save_csv,
    synth_sphere,
)
from .estimator import (
    DnnModel,
    KLEstimationResult,
    KLTrace,
    LinearizedModel,
    McReport,
    TrainConfig,
    estimate_rank_MT,
    mc_grad_norm_at_init,
    mc_linearized_grad_diff,
    mc_output_sqnorm,
    neighbor_grad_diffs,
    noisy_gd_step,
    replay_worst,
    run_kl_estimation,
    run_streams,
)
from .linearized import (
    GramAnalysis,
    LazySolution,
    NtkFeatures,
    build_features,
    gram_analysis,
    lazy_solution,
    lin_empirical_grad,
    lin_empirical_loss,
    lin_forward,
    lin_per_example_grads,
    running_average,
)
from .network import (
    InitScheme,
    LossKind,
    NetArch,
    ParamVector,
    empirical_grad,
    forward,
    init_betas,
    loss_value,
    output_jacobian,
    per_example_grad,
    per_example_grad_batch,
    sample_init,
)
from .numerics import (
    RankDeficiencyError,
    RngStream,
    finite_diff_gradient,
    gaussian_matrix,
    psd_spectrum,
    solve_psd,
)
