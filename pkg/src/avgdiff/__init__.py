"""Averaging approximation of diffusions and Dynkin game valuation.

The package turns a discrete slow-fast recursion driven by stationary
mixing noise into its diffusion limit: it computes the averaged limit
coefficients, simulates the discrete scheme and the limiting diffusion,
compares their laws, and values Dynkin (game) and American stopping
problems on the discrete scheme with engines that agree to machine
precision on small instances.
"""

from .noise import (
    MixingProfile,
    NoiseModel,
    rademacher_iid,
    two_state_markov,
    phi_bound,
    moment_constant_D,
    noise_from_config,
)
from .coefficients import (
    FieldSpec,
    scalar_field,
    matrix_field,
    field_from_config,
    drift_mean,
    drift_correction,
    diffusion_matrix,
    symmetric_sqrt,
    default_truncation_lag,
    LimitCoefficients,
    build_limit_coefficients,
    audit_field,
)
from .scheme import (DiscretePath, step, simulate_path, simulate_ensemble, steps_for,
                     eps_for, reachable_radius)
from .diffusion_ref import (
    DiffusionSpec,
    DiffusionPath,
    reference_dt,
    euler_maruyama,
    euler_maruyama_ensemble,
    ks_distance,
    ks_distance_to_cdf,
    ks_by_coordinate,
    atomic_law_cdf_ks,
)
from .dynkin import (
    PayoffPair,
    ValuationResult,
    GridSpec,
    game_put_payoff,
    american_put_payoff,
    state_payoff,
    exp_transform,
    value_exact_tree,
    value_bruteforce_oracle,
    value_markov_grid,
    american_value,
)
from .crr import crr_put
from .bounds import theoretical_bounds
from .rng import derived_rng
from .errors import (
    AvgdiffError,
    InvalidModelError,
    UnsupportedModeError,
    NumericError,
    TreeTooDeepError,
    EnumerationLimitError,
    BoundaryEscapeError,
)

__version__ = "0.1.0"
