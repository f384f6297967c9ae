"""Synthetic articulated-door domain: kinematics, rendering, datasets."""

from .dataset import (
    DATASET_MAGIC,
    Dataset,
    DatasetConfig,
    DatasetFormatError,
    ObjectRecord,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from .kinematics import (
    Action,
    DoorKinematics,
    GRIP_TOL,
    MAX_CATCH_UP,
    STEP_RAD,
    execute_action,
    optimal_action,
    optimal_reward,
    sample_candidate_actions,
    sample_door,
)
from .render import CAM_DIST_RANGE, render

__all__ = [
    "DATASET_MAGIC",
    "Dataset",
    "DatasetConfig",
    "DatasetFormatError",
    "ObjectRecord",
    "generate_dataset",
    "load_dataset",
    "save_dataset",
    "Action",
    "DoorKinematics",
    "GRIP_TOL",
    "MAX_CATCH_UP",
    "STEP_RAD",
    "execute_action",
    "optimal_action",
    "optimal_reward",
    "sample_candidate_actions",
    "sample_door",
    "CAM_DIST_RANGE",
    "render",
]
