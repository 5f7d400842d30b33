"""
CSV and manifest writers/readers for run artifacts.

Trace and report CSVs carry a mandatory header row; the manifest is flat
`key = value` text that the config loader can read back, with run results
under the `run.` prefix.
"""
import csv
import logging
import os
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..analysis import ConvergenceReport
from ..errors import InvalidParameterError
from ..schemas import RunManifest

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "k", "sim_time", "worker", "p", "epoch_index", "d_max",
    "suboptimality", "distance_sq", "residual_norm",
]
REPORT_COLUMNS = TRACE_COLUMNS + ["bound_thm32", "bound_cor33", "bound_thm36"]

RUN_PREFIX = "run."
TRACE_SUFFIX = ".trace.csv"
REPORT_SUFFIX = ".report.csv"
MANIFEST_SUFFIX = ".manifest"


def _write_rows(path: str, columns: List[str], rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    logger.info(f"Wrote {path}")


def write_trace_csv(report: ConvergenceReport, path: str):
    _write_rows(path, TRACE_COLUMNS, report.rows(with_bounds=False))


def write_report_csv(report: ConvergenceReport, path: str):
    _write_rows(path, REPORT_COLUMNS, report.rows(with_bounds=True))


def read_trace_csv(path: str) -> List[Dict[str, str]]:
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = [c for c in TRACE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise InvalidParameterError(f"{path}: missing trace columns {', '.join(missing)}")
        return list(reader)


def workers_from_rows(rows: List[Dict[str, str]]) -> Tuple[np.ndarray, int]:
    """Update order (k >= 1) and worker count of an asynchronous trace CSV"""
    workers = np.array([int(row["worker"]) for row in rows if int(row["k"]) >= 1], dtype=np.int64)
    if workers.size == 0:
        raise InvalidParameterError("trace has no exchanges")
    if workers.min() < 0:
        raise InvalidParameterError("synchronous traces have no per-worker delays")
    return workers, int(workers.max()) + 1


def _format(value) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def write_manifest(manifest: RunManifest, path: str):
    lines = [f"# run manifest {manifest.run_id}"]
    for key, value in manifest.config.items():
        lines.append(f"{key} = {value}")
    for key, value in manifest.model_dump(exclude={"config"}).items():
        if value is None:
            continue
        lines.append(f"{RUN_PREFIX}{key} = {_format(value)}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    logger.info(f"Wrote {path}")


def read_manifest(path: str) -> Dict[str, str]:
    pairs = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, value = line.split("=", 1)
            pairs[key.strip()] = value.strip()
    return pairs


def manifest_path_for(trace_path: str) -> str:
    """`<run>.trace.csv` -> `<run>.manifest` in the same directory"""
    stem = trace_path[:-len(TRACE_SUFFIX)] if trace_path.endswith(TRACE_SUFFIX) else os.path.splitext(trace_path)[0]
    return stem + MANIFEST_SUFFIX


def recorded_workers(trace_path: str) -> Optional[int]:
    """Worker count stored in the manifest next to a trace, if there is one"""
    path = manifest_path_for(trace_path)
    if not os.path.isfile(path):
        return None
    value = read_manifest(path).get("workers")
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        raise InvalidParameterError(f"{path}: workers = {value!r} is not an integer")
