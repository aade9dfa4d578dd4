"""Curiosity-driven trajectory planning for sample-efficient system identification.

The package plans maximally informative action sequences over a learned
Bayesian linear-regression dynamics model with random Fourier features,
executes them episodically in simulated control environments, and tracks
model quality against an oracle ceiling.
"""

from .acquisition import (ObjectiveKind, evr_objective, ig_bonus, pe_bonus,
                          us_objective)
from .blr import Dataset, GaussianBelief, entropy, log_likelihood, posterior_update, predict, prior_belief
from .envs import EnvId, EnvSpec, EnvState, make_env_spec, observe, reset, stage_cost, step
from .errors import (ConfigError, CurioplanError, InsufficientDataError,
                     InvalidInputError, NumericalError)
from .evaluation import downstream_cost, generate_test_set, mean_log_likelihood, oracle_model
from .explorer import (ExplorationRun, ExploreSettings, Trajectory,
                       execute_open_loop, run_random, run_rhc)
from .model import LearnedModel, ModelSettings, Transitions
from .rff import FeatureMap, featurize, fit_bandwidth, sample_feature_map
from .trajopt import ShootingProblem, SolveStats, SolverOptions, rollout_mean, solve

__version__ = "0.1.0"
