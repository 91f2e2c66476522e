from .collect import QLearningConfig, collect_dataset, collect_task
from .io import MANIFEST_NAME, read_dataset, task_file_name, write_dataset
from .records import FORMAT_VERSION, DatasetManifest, EpisodeRecord, Segment, compute_rtg


__all__ = (
    "FORMAT_VERSION",
    "MANIFEST_NAME",
    "DatasetManifest",
    "EpisodeRecord",
    "QLearningConfig",
    "Segment",
    "collect_dataset",
    "collect_task",
    "compute_rtg",
    "read_dataset",
    "task_file_name",
    "write_dataset",
)
