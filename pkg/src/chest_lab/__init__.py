"""Physical-model MIMO wideband channel estimation: synthesis, greedy
estimation, Fisher information / CRB analysis and bias bounds."""

from .geometry import (
    ArrayGeometry, Direction, FrequencyGrid, TangentBasis, center, make_frequency_grid,
    make_ula, tangent_basis, validity_ratios,
)
from .channel import (
    ChannelConfig, ObservationModel, Path, build_observation, characteristic_vector,
    delay_vector, noise_variance_for_snr, observe, steering_vector, synthesize_channel,
)
from .paths import ClusterGenConfig, export_paths_csv, generate_clustered_paths, import_paths_csv
from .estimator import (
    ChannelEstimate, DictionaryGrid, GreedyEstimator, Method, cost_f, greedy_estimate, joint_estimate_path,
    ls_coefficients, relative_error, sequential_estimate_path,
)
from .analysis import (
    ParamLayout, bias_bound, bias_bound_gram, channel_jacobian, check_c_opt, crb_lower_bound,
    crb_trace, exact_single_path_error, finite_difference_jacobian, fisher_matrix,
    optimal_coefficient,
)

__version__ = "0.1.0"
