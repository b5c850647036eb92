"""Model-free model-following control by online actor-critic learning."""

from .kernel import (
    CostWeights,
    Dimensions,
    ErrorStack,
    QuadraticKernel,
    augment,
    evaluate_value,
    kron_pack_state,
    pack_kernel,
    stage_cost,
    unpack_kernel,
)
from .learner import (
    LearnerConfig,
    LearnerState,
    PlantDivergenceError,
    PolicyExtractionError,
    actor_update,
    bellman_residual,
    contraction_factor,
    critic_target,
    critic_update,
    desired_action,
    initial_state,
    run_online_episode,
    seed_kernel,
)

__version__ = "0.1.0"
