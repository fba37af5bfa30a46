"""Polynomial regression of Lipschitz functions under log-concave product measures."""
from .errors import (
    CapacityError,
    ConfigurationError,
    DegradationError,
    InputError,
    LipregError,
    UnsupportedOperationError,
)
from .measures import MeasureSpec, SampleMatrix, sample
from .polybasis import MultiIndexSet, PolyInBasis, enumerate_indices, eval_basis, ou_apply, ou_smooth_eval, project_mc
from .simulate import Dataset, TargetFunction, make_dataset
from .estimators import ls_estimate, projection_estimate, select_degree_ls, select_degree_projection
from .risklab import SweepConfig, approx_curve, approx_oracle, fit_projection_constant, l2_risk, risk_sweep
from .covdiag import empirical_covariance, lambda_min_tail, moment_growth_check, opnorm_deviation_curve, small_ball_check
from .entropylab import PackingConfig, build_packing, fourth_moment_check, kl_observations, minimax_lower_bound

__version__ = "0.1.0"
