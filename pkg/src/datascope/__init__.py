"""Dataset characterization for offline reinforcement learning on finite MDPs."""

from .core import (
    Dataset,
    FiniteMDP,
    Manifest,
    OccupancyTable,
    PolicyTable,
    Trajectory,
    Transition,
    average_trajectory_return,
    evaluate_policy_exact,
    occupancy_exact,
    rollout,
    sample_transitions,
)
from .datagen import GenerationScheme, OnlineTrainerConfig, generate, train_online
from .envs import GridSpec, build_chain, build_gridworld, make_env, transform
from .io import read_dataset, write_dataset
from .measures import (
    DatasetCharacterizer,
    MeasureReport,
    References,
    characterize,
    lsaco,
    naive_bias,
    naive_entropy,
    occupancy_entropy,
    saco,
    tq,
    transition_entropy_exact,
)
from .offline import OfflineConfig, run_offline
from .sketch import CardinalitySketch, exact_unique_count, hll_count

__version__ = "0.1.0"
