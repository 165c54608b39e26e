"""
Fleet simulation and featurization service.

Turns a fleet description into cycle/label CSVs plus a physics sidecar,
and cycle CSVs into QdLinear feature files.
"""

import logging
from pathlib import Path
from typing import Optional

from tqdm import tqdm

from ..core.ecm import fleet_cell_params, generate_fleet
from ..core.features import qdlinear, truncate_partial
from ..exceptions import FeatureError
from ..schemas.ecm import CycleRecord, FleetConfig
from ..schemas.features import FeatureDataset, PhysicsSidecar, QdLinearFeature, VoltageGrid
from ..utils.file_utils import (
    labels_path_for,
    read_cycles_csv,
    read_labels_csv,
    write_cycles_csv,
    write_features,
    write_labels_csv,
)
from ..utils.json_utils import load_model_document, write_json

logger = logging.getLogger(__name__)


def physics_path_for(cycles_path: str | Path) -> Path:
    """Physics sidecar of a cycle file: ``cycles.csv`` -> ``cycles_physics.json``."""
    path = Path(cycles_path)
    return path.with_name(f"{path.stem}_physics.json")


def physics_for_fleet(fleet: FleetConfig) -> PhysicsSidecar:
    return PhysicsSidecar(
        cells=fleet_cell_params(fleet),
        schedule=fleet.schedule,
        arrhenius_k=fleet.arrhenius_k,
    )


def featurize_records(
    records: list[CycleRecord],
    grid: VoltageGrid,
    c_nom: float = 1.0,
    observed_fraction: float = 1.0,
    stride: int = 1,
    progress: bool = False,
) -> list[QdLinearFeature]:
    """
    QdLinear features of every ``stride``-th cycle of each cell.

    Cycles that never enter the grid are skipped with a warning.
    """
    features: list[QdLinearFeature] = []
    for record in tqdm(records, desc="featurize", disable=not progress):
        if (record.cycle - 1) % stride:
            continue
        try:
            feature = qdlinear(record, grid, c_nom)
        except FeatureError as e:
            logger.warning(f"Skipping {record.cell_id}/{record.cycle}: {e.message}")
            continue
        if observed_fraction < 1.0:
            feature = truncate_partial(feature, observed_fraction)
        features.append(feature)
    return features


class FleetService:
    """Simulation and feature extraction for one fleet."""

    def __init__(self, jobs: int = 1, progress: bool = False):
        self.jobs = jobs
        self.progress = progress

    def simulate(self, fleet: FleetConfig) -> tuple[list[CycleRecord], dict[tuple[str, int], float]]:
        """Simulate the fleet; labels are keyed by (cell_id, cycle)."""
        records, labels = generate_fleet(fleet, jobs=self.jobs, progress=self.progress)
        label_map = {(r.cell_id, r.cycle): lab.soh_pct for r, lab in zip(records, labels)}
        return records, label_map

    def simulate_to_files(self, fleet: FleetConfig, out: str | Path) -> Path:
        """
        Write cycles to ``out``, labels to ``<stem>_labels.csv`` and the
        physics sidecar to ``<stem>_physics.json``.
        """
        records, labels = self.simulate(fleet)
        path = write_cycles_csv(out, records)
        write_labels_csv(
            labels_path_for(path), [(cid, cyc, soh) for (cid, cyc), soh in labels.items()]
        )
        write_json(physics_path_for(path), physics_for_fleet(fleet).model_dump(mode="json"))
        logger.info(f"Fleet '{fleet.name}': {len(records)} cycles written to {path}")
        return path

    def featurize_file(
        self,
        cycles_path: str | Path,
        out: str | Path,
        grid: VoltageGrid,
        observed_fraction: float = 1.0,
        c_nom: Optional[float] = None,
        physics_path: Optional[str | Path] = None,
    ) -> FeatureDataset:
        """
        Featurize a cycle CSV and write the feature file with its sidecar and labels.

        The physics sidecar defaults to ``<stem>_physics.json`` next to the
        cycle file; the nominal capacity defaults to the sidecar's first cell.
        """
        records = read_cycles_csv(cycles_path)
        physics_file = Path(physics_path) if physics_path else physics_path_for(cycles_path)
        physics = (
            load_model_document(physics_file, PhysicsSidecar) if physics_file.exists() else None
        )
        if c_nom is None:
            c_nom = next(iter(physics.cells.values())).capacity_nom if physics and physics.cells else 1.0
        label_file = labels_path_for(cycles_path)
        labels = read_labels_csv(label_file) if label_file.exists() else {}

        features = featurize_records(
            records,
            grid,
            c_nom=c_nom,
            observed_fraction=observed_fraction,
            progress=self.progress,
        )
        write_features(out, features, labels if labels else None, grid, physics)
        return FeatureDataset(
            features=features, grid=grid, labels=labels, physics=physics, c_nom=c_nom
        )
