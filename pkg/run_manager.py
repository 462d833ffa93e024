import hashlib
import json
import os
from typing import Dict, List, Optional

from snapshot_store import encode_exact, write_json
from utils import ensure_dir, setup_logger

logger = setup_logger("RunManager")

MANIFEST_NAME = "manifest.json"


def generate_run_id(experiment: str, config: Dict) -> str:
    """
    Run ID from the resolved configuration.
    Format: {experiment}_{12_char_hash}; identical configs give identical IDs.
    """
    canonical = json.dumps(encode_exact(config), sort_keys=True)
    digest = hashlib.md5(canonical.encode()).hexdigest()[:12]
    return f"{experiment}_{digest}"


class RunManager:
    def __init__(self, output_dir: str = "output"):
        self.output_dir = output_dir
        ensure_dir(self.output_dir)
        self.run_id: Optional[str] = None
        self.metadata: Dict = {}

    def create_run(self, experiment: str, config: Dict) -> str:
        """
        Start a run: writes the manifest echoing the full resolved config.

        Args:
            experiment: Experiment kind
            config: Resolved configuration as a plain dict

        Returns:
            run_id: Deterministic run identifier
        """
        self.run_id = generate_run_id(experiment, config)
        self.metadata = {
            "run_id": self.run_id,
            "experiment": experiment,
            "status": "initialized",
            "config": config,
            "artifacts": [],
            "results": {},
        }
        self.save_manifest()
        logger.info(f"Created run: {self.run_id}")
        return self.run_id

    def path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def record_artifact(self, filename: str):
        self.record_artifacts([filename])

    def record_artifacts(self, filenames: List[str]):
        artifacts = self.metadata.setdefault("artifacts", [])
        added = [name for name in filenames if name not in artifacts]
        if added:
            artifacts.extend(added)
            self.save_manifest()

    def update_status(self, status: str, results: Optional[Dict] = None, error: Optional[str] = None):
        """
        Update run status in the manifest.

        Args:
            status: New status ("running", "completed", "failed")
            results: Summary values to echo (optional)
            error: Failure message naming the violated invariant (optional)
        """
        self.metadata["status"] = status
        if results is not None:
            self.metadata["results"] = results
        if error is not None:
            self.metadata["error"] = error
        self.save_manifest()
        logger.debug(f"Updated run status: {status}")

    def save_manifest(self):
        if not self.run_id:
            raise ValueError("No run initialized")
        write_json(self.path(MANIFEST_NAME), self.metadata)

    @property
    def artifacts(self) -> List[str]:
        return list(self.metadata.get("artifacts", []))


def load_manifest(output_dir: str) -> Optional[Dict]:
    manifest_file = os.path.join(output_dir, MANIFEST_NAME)
    if os.path.exists(manifest_file):
        with open(manifest_file, "r", encoding="utf-8") as f:
            return json.load(f)
    return None
