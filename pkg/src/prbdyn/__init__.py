"""prbdyn: pseudo-rigid-body chain dynamics for deformable linear objects.

An analytic simulator (spring-damper joint chain, hybrid dynamics with a
prescribed floating base, implicit Radau integration) generates ground-truth
motion, and a physics-informed sequence model (inverse-kinematics encoder,
neural dynamics, forward-kinematics decoder) learns to predict the endpoint
from partial observations.
"""

__version__ = "0.1.0"

from .dynamics import (
    ALUMINUM_ROD,
    FOAM_CYLINDER,
    GRAVITY,
    MATERIAL_PRESETS,
    JointCoeffs,
    MaterialParams,
    hybrid_accel,
    material_to_coeffs,
    mechanical_energy,
)
from .integrate import IntegrationError, step_irk3
from .kinematics import (
    ChainConfig,
    Transform,
    chain_transforms,
    element_error_bound,
    endpoint_velocity,
    euler_yz_rotation,
    fk_endpoint,
    jacobian_linear,
    uniform_discretization,
)
from .model import (
    VARIANTS,
    DivergenceError,
    ModelBundle,
    chain_points,
    decode,
    dynamics_step,
    encode,
    encode_features,
    load_bundle,
    make_bundle,
    rollout,
    save_bundle,
)
from .nn import MlpSpec, ParamVector, grad, jvp, load_params, save_params
from .simulate import (
    Trajectory,
    load_trajectory,
    multisine_excitation,
    save_trajectory,
    simulate_trajectory,
)
from .training import (
    EvalResult,
    LossConfig,
    OptConfig,
    WindowDataset,
    evaluate_rmse,
    fit,
    make_windows,
    rollout_loss,
    split,
    windows_from_trajectories,
)
