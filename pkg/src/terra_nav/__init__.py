"""Online terrain learning and dynamics-aware step planning for bipeds.

Library layout:
  terrain        synthetic heightfields and the disc range sensor
  kernels        RBF, arcsin neural-net, and attentive (mixture) kernels
  gp             exact / sparse GP regression, clustering-based local
                 approximation, hyperparameter training
  locomotion     reduced-order pendulum step dynamics and step planning
  model_error    lateral step-deviation GP and its synthetic oracle
  planner_local  footstep-level constrained RRT*, smoothing, scoring
  planner_global coarse RRT* with start-heading safety barriers
  framework      mission loop, benchmark metrics, artifact export
  cli            the terra-nav command-line interface
"""

from .errors import (ConfigError, DataError, DomainError, InfeasibleStepError,
                     NumericalError, UsageError)
from .framework import (BenchmarkReport, MissionConfig, MissionLog,
                        compute_metrics, export, log_to_bytes, run_mission)
from .gp import (GPModel, fit, kd_nearest, kmeans, local_approx_predict,
                 log_marginal_likelihood, predict, predict_mean,
                 train_hyperparams)
from .kernels import AttentiveKernel, Kernel, NeuralNetKernel, RBFKernel
from .locomotion import (ApexState, HighLevelAction, SafetyLimits, StepPlan,
                         action_between, pipm_propagate, plan_step, wrap_angle)
from .model_error import (ContextRanges, PerturbationOracle, StepContext,
                          predict_deviation, train_model_error)
from .planner_global import (RegionPartition, SafetyBarriers, build_partition,
                             extract_waypoints, lda_g_rrt, safety_barriers)
from .planner_local import (LocalTrajectory, lda_l_rrt, plan_candidates,
                            score_error, score_info, select_trajectory, smooth)
from .terrain import (SensorSpec, TerrainField, TerrainSpec, generate_terrain,
                      sense)

__version__ = "1.0.0"
