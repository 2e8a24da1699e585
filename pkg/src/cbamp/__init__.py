"""Complex Bayesian approximate message passing for sparse complex recovery."""

__version__ = "0.1.0"

from .amp import SolverConfig, SolverState, Trace, amp_init, amp_run, factor_update, variable_update  # noqa: E402
from .denoiser import bg_denoise, quadrature_denoise  # noqa: E402
from .ep_ref import EdgeMessages, ep_init, ep_iterate, ep_run, ep_solve  # noqa: E402
from .model import (  # noqa: E402
    InstanceSpec,
    MeasurementMatrix,
    PriorBG,
    ProblemInstance,
    measure,
    mse,
    prior_moments,
    sample_matrix,
    sample_signal,
)
from .real_amp import real_amp_run, real_amp_solve, stack, unstack  # noqa: E402
from .state_evolution import SEParams, se_phase_boundary, se_run, se_step  # noqa: E402
