"""Reading and writing ``radt-ds-1`` datasets.

A dataset is a directory (or any :class:`~radt.storage.Storage`) holding

* ``manifest.json``: the :class:`~radt.datagen.records.DatasetManifest`
  with ``format_version`` set to ``"radt-ds-1"``;
* one ``task_<id>.jsonl`` file per task, one episode per line::

    {"task_id": 3, "episode_id": 0, "states": [[0, 0], [0, 1], ...],
     "actions": [1, 4, ...], "rewards": [0, 1, ...], "total_return": 57}

``states[t]`` is the observation the agent acted on at step ``t``. Actions
use the integer encoding of :class:`radt.envs.Action`.
"""
from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Mapping
from typing import TYPE_CHECKING

from radt.datagen.records import FORMAT_VERSION, DatasetManifest, EpisodeRecord
from radt.exceptions import ArtifactError, DatasetFormatError
from radt.storage import Storage, as_storage


__all__ = ("MANIFEST_NAME", "task_file_name", "write_dataset", "read_dataset")

if TYPE_CHECKING:
    from radt._util import PathLikeStr

_LOGGER = logging.getLogger("radt.datagen.io")

MANIFEST_NAME = "manifest.json"


def task_file_name(task_id: int) -> str:
    return f"task_{task_id:04d}.jsonl"


def _dumps(obj: object) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def write_dataset(
    records: Mapping[int, Iterable[EpisodeRecord]],
    manifest: DatasetManifest,
    target: Storage | PathLikeStr,
) -> DatasetManifest:
    """Write per-task episode streams and the manifest.

    Each task file is owned by exactly one writer, so tasks may be written
    from parallel collectors.

    Args:
        records: Episode stream per ``task_id``
        manifest: Manifest to store; its ``files`` mapping is filled in
        target: Directory path or storage to write into

    Returns:
        The manifest as written

    Raises:
        DatasetFormatError: If a record does not belong to the manifest or
            breaks an episode invariant
    """
    storage = as_storage(target)
    files: dict[int, str] = {}
    for task_id in sorted(records):
        if task_id not in manifest.tasks:
            raise DatasetFormatError(storage, f"task_id {task_id} missing from manifest")
        task = manifest.tasks[task_id]
        lines = []
        for record in records[task_id]:
            if record.task_id != task_id:
                raise DatasetFormatError(
                    storage,
                    f"record tagged task_id {record.task_id} in stream of task {task_id}",
                    record.episode_id,
                )
            problem = record.validation_error(task)
            if problem is not None:
                raise DatasetFormatError(storage, problem, record.episode_id)
            lines.append(_dumps(record.to_dict()))
        name = task_file_name(task_id)
        storage.write(name, "".join(line + "\n" for line in lines))
        files[task_id] = name

    manifest.files = files
    storage.write(MANIFEST_NAME, json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    _LOGGER.info("Wrote dataset with %d task file(s) to %r", len(files), storage)
    return manifest


def _read_manifest(storage: Storage) -> DatasetManifest:
    try:
        raw = json.loads(storage.read(MANIFEST_NAME))
    except ArtifactError as e:
        raise DatasetFormatError(storage, "missing manifest.json") from e
    except json.JSONDecodeError as e:
        raise DatasetFormatError(storage, "manifest.json is not valid JSON") from e
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise DatasetFormatError(
            storage, f"format version {version!r} != expected {FORMAT_VERSION!r}"
        )
    try:
        return DatasetManifest.from_dict(raw)
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError(storage, "malformed manifest") from e


def read_dataset(
    source: Storage | PathLikeStr,
) -> tuple[dict[int, list[EpisodeRecord]], DatasetManifest]:
    """Read a dataset written by :func:`write_dataset`.

    Returns:
        The episode stream per ``task_id`` and the manifest

    Raises:
        DatasetFormatError: On a version mismatch, a truncated file, or an
            episode that violates its invariants; the message names the
            episode id when it is known
    """
    storage = as_storage(source)
    manifest = _read_manifest(storage)
    records: dict[int, list[EpisodeRecord]] = {}
    for task_id, name in sorted(manifest.files.items()):
        if task_id not in manifest.tasks:
            raise DatasetFormatError(storage, f"file {name} has no task in manifest")
        task = manifest.tasks[task_id]
        try:
            text = storage.read(name).decode("utf-8")
        except ArtifactError as e:
            raise DatasetFormatError(storage, f"missing episode file {name}") from e
        if text and not text.endswith("\n"):
            raise DatasetFormatError(storage, f"{name} is truncated (no final newline)")

        stream: list[EpisodeRecord] = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(storage, f"{name}:{lineno} is truncated") from e
            episode_id = raw.get("episode_id") if isinstance(raw, dict) else None
            try:
                record = EpisodeRecord.from_dict(raw)
            except (KeyError, TypeError, ValueError) as e:
                raise DatasetFormatError(
                    storage, f"{name}:{lineno} is malformed", episode_id
                ) from e
            if record.task_id != task_id:
                raise DatasetFormatError(
                    storage, f"record of task {record.task_id} in {name}", record.episode_id
                )
            problem = record.validation_error(task)
            if problem is not None:
                raise DatasetFormatError(storage, problem, record.episode_id)
            stream.append(record)
        records[task_id] = stream
    return records, manifest
