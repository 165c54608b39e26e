"""
Shared fixtures: a tiny network, a short calce-like fleet and its features.
"""

import numpy as np
import pytest

from batteryttt.core.ecm import generate_fleet
from batteryttt.schemas.ecm import EcmParams
from batteryttt.schemas.features import FeatureDataset, VoltageGrid
from batteryttt.schemas.model import ModelConfig
from batteryttt.schemas.training import LossConfig, OptimConfig
from batteryttt.services.fleet_service import featurize_records, physics_for_fleet
from batteryttt.utils import config_loader
from batteryttt.utils.presets import fleet_from_preset

GRID_POINTS = 16


@pytest.fixture(autouse=True)
def _fresh_global_config():
    """Every test starts from config/config.yaml."""
    config_loader._config = None
    yield
    config_loader._config = None


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(
        t_full=GRID_POINTS,
        patch_len=4,
        embed_dim=8,
        backbone_dim=16,
        n_heads=2,
        n_layers=1,
        prompt_len=2,
        n_prototypes=4,
        vocab_size=8,
        backbone_blocks=1,
        seed=0,
    )


@pytest.fixture
def grid() -> VoltageGrid:
    return VoltageGrid(v_lower=2.7, v_upper=4.2, n_points=GRID_POINTS)


@pytest.fixture
def linear_params() -> EcmParams:
    """Two-point OCV table, calce-like RC branch."""
    return EcmParams(
        r_ohmic=0.05,
        r_pol=0.03,
        c_pol=1000.0,
        ocv_table=[(0.0, 3.0), (1.0, 4.2)],
        capacity_nom=1.1,
    )


@pytest.fixture(scope="session")
def small_fleet():
    return fleet_from_preset("calce", n_cells=2, n_cycles=3, seed=1)


@pytest.fixture(scope="session")
def small_fleet_data(small_fleet):
    return generate_fleet(small_fleet)


@pytest.fixture(scope="session")
def source_dataset(small_fleet, small_fleet_data) -> FeatureDataset:
    records, labels = small_fleet_data
    grid = VoltageGrid(v_lower=2.7, v_upper=4.2, n_points=GRID_POINTS)
    c_nom = small_fleet.base_params.capacity_nom
    features = featurize_records(records, grid, c_nom)
    return FeatureDataset(
        features=features,
        grid=grid,
        labels={(r.cell_id, r.cycle): lab.soh_pct for r, lab in zip(records, labels)},
        physics=physics_for_fleet(small_fleet),
        c_nom=c_nom,
    )


@pytest.fixture
def fast_optim() -> OptimConfig:
    return OptimConfig(max_epochs=3, batch_size=4, tta_steps=3, seed=0)


@pytest.fixture
def loss_config() -> LossConfig:
    return LossConfig(lam=0.1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
