"""Statistically valid hyperparameter selection for discrete information bottleneck solvers."""

__version__ = "0.1.0"

from .bounds import BoundParams, lower_conf_bound, p_value, plugin_mi
from .prob import (
    Encoder,
    Histogram2D,
    JointPMF,
    SampleSet,
    compose,
    dsbs,
    exact_mi,
    histogram,
    joint_from_matrix,
    random_joint,
    rollout,
    sample_pairs,
)
from .selection import SelectionOutcome, ib_mht, select_conventional
from .solvers import CandidateGrid, HyperparameterPoint, SolverConfig, train_grid
