"""
Writes scenario bundles to disk: manifest, report and CSV tables
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd
import pydantic
import scipy

from src.core.config import get_settings
from src.core.constants import HBAR
from src.models.scenario import ProtocolResult, ScenarioBundle
from src.models.statistics import WorkDistribution

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.15g"
WORK_COLUMNS = ["work_quanta", "work_joules", "probability", "stderr"]


class OutputService:
    """Byte-stable serialization of a completed scenario bundle"""

    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)

    def emit(self, bundle: ScenarioBundle) -> List[Path]:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            written = [self._write_json("manifest.json", self.manifest(bundle))]
            for result in bundle.protocols:
                written.extend(self._write_protocol(result))
            written.append(self._write_json("report.json", self.report(bundle)))
        except OSError as e:
            logger.error(f"Failed writing outputs under {self.out_dir}: {e}")
            raise OSError(f"Cannot write outputs to {self.out_dir}: {e}") from e
        logger.info(f"Wrote {len(written)} files to {self.out_dir}")
        return written

    def manifest(self, bundle: ScenarioBundle) -> Dict[str, Any]:
        settings = get_settings()
        return {
            "app": settings.app_name,
            "version": settings.app_version,
            "config": bundle.config.model_dump(mode="json"),
            "seed": bundle.config.sampling.seed,
            "shots": bundle.config.sampling.shots,
            "rng_consumed": bundle.rng_consumed,
            "protocols": [result.point.label for result in bundle.protocols],
            "libraries": {
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pandas": pd.__version__,
                "pydantic": pydantic.VERSION,
            },
        }

    def report(self, bundle: ScenarioBundle) -> Dict[str, Any]:
        errors = list(bundle.errors)
        protocols = {}
        for result in bundle.protocols:
            if result.exact.is_empty:
                errors.append(f"{result.point.label}: empty work distribution")
            protocols[result.point.label] = {**result.report, "checks": result.checks, "passed": result.passed}
        return {
            "experiment": bundle.config.experiment.value,
            "protocols": protocols,
            "checks": bundle.checks,
            "errors": errors,
            "passed": bundle.passed and not errors,
        }

    def _write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        path = self.out_dir / name
        path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")
        return path

    def _write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.out_dir / name
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return path

    def _write_protocol(self, result: ProtocolResult) -> List[Path]:
        label = result.point.label
        entries = result.transitions.entries
        transitions = pd.DataFrame(entries, columns=[f"m{m}" for m in range(entries.shape[1])])
        transitions.insert(0, "n", np.arange(entries.shape[0]))
        written = [
            self._write_csv(f"transitions_{label}.csv", transitions),
            self._write_csv(f"work_exact_{label}.csv", work_frame(result.exact, result.quantum)),
        ]
        if result.sampled is not None:
            written.append(self._write_csv(f"work_sampled_{label}.csv", work_frame(result.sampled, result.quantum)))
        if result.records is not None:
            written.append(self._write_csv(f"records_{label}.csv", result.records))
        return written


def work_frame(dist: WorkDistribution, quantum: float) -> pd.DataFrame:
    """work_quanta, work_joules, probability, stderr; header only when empty"""
    if dist.is_empty:
        return pd.DataFrame(columns=WORK_COLUMNS)
    return pd.DataFrame(
        {
            "work_quanta": dist.support,
            "work_joules": dist.support * HBAR * quantum,
            "probability": dist.probabilities,
            "stderr": dist.stderr(),
        }
    )


def _plain(value: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None"""
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return [_plain(item) for item in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        number = float(value)
        return number if np.isfinite(number) else None
    return value


def emit_outputs(bundle: ScenarioBundle, out_dir: str) -> List[Path]:
    return OutputService(out_dir).emit(bundle)
