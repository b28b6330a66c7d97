"""Joint unknown-input and state estimation for linear time-varying systems.

Filters: the input-blind Kalman filter, the unbiased joint input/state
filter (RKF), its box-constrained variant solved by an augmented Lagrangian
(AL-RKF), and a multi-mode filter for inputs from a finite set (AMM-KF).
"""

from .al_rkf import (ALParams, ALResult, BoxConstraint, al_rkf_step,
                     solve_constrained_gain)
from .amm_kf import (DecisionState, ModeSet, ModeWeights, amm_step,
                     detection_probability, mixed_covariance, mode_likelihood,
                     separation_pd, update_weights, update_weights_log)
from .errors import (AllZeroLikelihoodWarning, ConfigError,
                     DegenerateSeparationWarning, EmptyAfterBurnIn, ModelError,
                     MaxInnerIterationsWarning, NoConvergence, RankConditionError,
                     RankDeficient, SingularInnovationCovariance)
from .lti_system import (GaussianNoise, RankReport, SystemModel, Trajectory,
                         simulate, step_truth, validate_rank)
from .rkf import (GaussianBelief, InputEstimate, Innovation, estimate_input,
                  innovation, input_gain, kf_step_blind, mvu_gain, predict,
                  rkf_step, update_state)

__version__ = "0.1.0"
