import csv
import json
import os
from typing import Dict, List, Optional, Sequence

import numpy as np

from errors import ConfigurationError
from evolution import SnapshotLog, Trajectory
from grid import DensityField, MomentumGrid
from utils import ensure_dir, format_float, setup_logger

logger = setup_logger("SnapshotStore")

MANIFEST_NAME = "trajectory.json"


def encode_exact(obj):
    """Floats -> 17-significant-digit strings, recursively."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, complex):
        return {"real": format_float(obj.real), "imag": format_float(obj.imag)}
    if isinstance(obj, dict):
        return {str(k): encode_exact(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [encode_exact(v) for v in obj]
    return str(obj)


def write_json(path: str, data: Dict):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(encode_exact(data), f, indent=4, ensure_ascii=False)
        f.write("\n")


def write_table(path: str, columns: Dict[str, Sequence]):
    """CSV with one column per key; numbers at 17 significant digits."""
    names = list(columns)
    length = {len(columns[name]) for name in names}
    if len(length) > 1:
        raise ConfigurationError(f"{path}: columns have different lengths", "cli")
    rows = zip(*(columns[name] for name in names))
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(names)
        for row in rows:
            writer.writerow(
                [v if isinstance(v, str) else format_float(v) for v in row]
            )
    logger.debug(f"Wrote table: {path}")


class SnapshotStore:
    """
    A directory holding a trajectory: `trajectory.csv`, one density CSV per
    snapshot under `snapshots/`, and a manifest with everything needed to
    reproduce the run.
    """

    def __init__(self, output_dir: str = "output"):
        self.output_dir = output_dir
        self.snapshots_dir = os.path.join(output_dir, "snapshots")
        ensure_dir(self.output_dir)

    def save_density(self, field: DensityField, filename: str) -> str:
        filepath = os.path.join(self.output_dir, filename)
        ensure_dir(os.path.dirname(filepath))
        d = field.grid.d
        columns = {f"q_{axis + 1}": field.grid.nodes[:, axis] for axis in range(d)}
        columns["n"] = field.values
        write_table(filepath, columns)
        return filepath

    def save_trajectory(self, trajectory: Trajectory, manifest: Optional[Dict] = None) -> List[str]:
        """Writes the trajectory; returns the written files relative to the output directory."""
        ensure_dir(self.snapshots_dir)
        write_table(
            os.path.join(self.output_dir, "trajectory.csv"),
            {
                "t": trajectory.times,
                "total_number": [log.total_number for log in trajectory.logs],
                "max_residual": [log.max_residual for log in trajectory.logs],
                "min_value": [log.min_value for log in trajectory.logs],
            },
        )

        entries: List[Dict] = []
        for index, (snapshot, log) in enumerate(zip(trajectory.snapshots, trajectory.logs)):
            filename = os.path.join("snapshots", f"snapshot_{index:05d}.csv")
            self.save_density(snapshot, filename)
            entries.append(
                {"t": log.t, "file": filename.replace(os.sep, "/"), "clipped_mass": log.clipped_mass}
            )

        data = dict(manifest or {})
        data["grid"] = trajectory.grid.describe()
        data["snapshots"] = entries
        path = os.path.join(self.output_dir, MANIFEST_NAME)
        write_json(path, data)
        logger.info(f"Saved {len(entries)} snapshots to: {self.output_dir}")
        return ["trajectory.csv"] + [entry["file"] for entry in entries] + [MANIFEST_NAME]


def load_density(path: str, grid: MomentumGrid) -> DensityField:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if table.shape != (grid.size, grid.d + 1):
        raise ConfigurationError(
            f"{path}: expected {grid.size} rows of {grid.d + 1} columns", "kinetics"
        )
    if not np.array_equal(table[:, : grid.d], grid.nodes):
        raise ConfigurationError(f"{path}: momenta do not match the grid nodes", "kinetics")
    return DensityField(grid, table[:, grid.d])


def load_trajectory(directory: str) -> Trajectory:
    """Rebuilds a saved trajectory bit-exactly from its manifest and CSVs."""
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise ConfigurationError(f"no manifest in {directory}", "kinetics")
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)

    shape = manifest["grid"]
    grid = MomentumGrid(int(shape["d"]), float(shape["q_max"]), int(shape["N"]))

    table = np.loadtxt(
        os.path.join(directory, "trajectory.csv"), delimiter=",", skiprows=1, ndmin=2
    )
    entries = manifest["snapshots"]
    if table.shape[0] != len(entries):
        raise ConfigurationError("trajectory.csv and manifest disagree on snapshots", "kinetics")

    trajectory = Trajectory(grid=grid)
    for row, entry in zip(table, entries):
        field = load_density(os.path.join(directory, entry["file"]), grid)
        log = SnapshotLog(
            t=float(row[0]),
            total_number=float(row[1]),
            max_residual=float(row[2]),
            min_value=float(row[3]),
            clipped_mass=float(entry.get("clipped_mass", 0.0)),
        )
        trajectory.append(field, log)
    logger.info(f"Loaded trajectory with {len(trajectory.times)} snapshots from {directory}")
    return trajectory
