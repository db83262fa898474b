"""Federated training simulator: datasets, convex tasks, and the SGD loop."""

from .data import (
    ClientDataset,
    load_dataset_binary,
    load_dataset_csv,
    save_dataset_binary,
    save_dataset_csv,
    stack_points,
    synthetic_logistic_data,
    validate_clients,
)
from .tasks import TASKS, Task, get_task, task_linear_abs, task_logistic
from .training import (
    TRACE_COLUMNS,
    RoundTrace,
    TrainConfig,
    TrainResult,
    aggregate,
    local_round,
    sample_clients,
    sample_data,
    shuffle,
    train,
    write_trace_csv,
)

__all__ = [
    "ClientDataset",
    "load_dataset_binary",
    "load_dataset_csv",
    "save_dataset_binary",
    "save_dataset_csv",
    "stack_points",
    "synthetic_logistic_data",
    "validate_clients",
    "TASKS",
    "Task",
    "get_task",
    "task_linear_abs",
    "task_logistic",
    "TRACE_COLUMNS",
    "RoundTrace",
    "TrainConfig",
    "TrainResult",
    "aggregate",
    "local_round",
    "sample_clients",
    "sample_data",
    "shuffle",
    "train",
    "write_trace_csv",
]
