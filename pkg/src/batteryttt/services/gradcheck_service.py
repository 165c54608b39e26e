"""
Finite-difference gate for the full differentiable composite:
embed -> reprogram -> encode with prompt -> decode -> PG-SSL loss.
"""

import logging
from dataclasses import dataclass
from typing import Optional

from ..core.ecm import fleet_cell_params, simulate_charge_cycle
from ..core.features import apply_random_mask, qdlinear, truncate_partial
from ..core.loss import LossBatch, pg_ssl_loss, physics_context_for
from ..core.model import ModelState, decode, latent_of
from ..core.tensor import grad_check_report, resolution_floor
from ..schemas.ecm import CellState
from ..schemas.features import MaskSpec, VoltageGrid
from ..schemas.model import ModelConfig
from ..schemas.training import LossConfig
from ..utils.presets import fleet_from_preset, grid_for_fleet
from .fleet_service import physics_for_fleet

logger = logging.getLogger(__name__)


@dataclass
class GradCheckResult:
    max_rel_error: float
    coordinates: int
    tolerance: float
    below_floor: int = 0
    floor: float = 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def as_dict(self) -> dict:
        return {
            "max_rel_error": self.max_rel_error,
            "coordinates": self.coordinates,
            "tolerance": self.tolerance,
            "below_floor": self.below_floor,
            "floor": self.floor,
            "passed": self.passed,
        }


class GradCheckService:
    """Checks tape gradients of every pretraining parameter on one synthetic sample."""

    def __init__(
        self,
        model_config: ModelConfig,
        loss: LossConfig,
        preset: str = "calce",
    ):
        self.model_config = model_config
        # A zero lambda would skip the residual branch
        self.loss = loss if loss.lam > 0 else loss.model_copy(update={"lam": 0.1})
        self.preset = preset

    def _sample(self, seed: int):
        fleet = fleet_from_preset(self.preset, n_cells=1, n_cycles=1, seed=seed)
        fleet = fleet.model_copy(
            update={"protocol": fleet.protocol.model_copy(update={"mode": "CC"})}
        )
        grid: VoltageGrid = grid_for_fleet(fleet, self.model_config.t_full)
        params = next(iter(fleet_cell_params(fleet).values()))
        record = simulate_charge_cycle(
            params,
            CellState(soc=0.0, u_pol=0.0, capacity_full=params.capacity_full),
            fleet.protocol,
            cell_id=fleet.cell_id(0),
        )
        feature = truncate_partial(qdlinear(record, grid, params.capacity_nom), 0.6)
        masked, _ = apply_random_mask(feature, MaskSpec(ratio=0.3, seed=seed))
        context = physics_context_for(feature, physics_for_fleet(fleet), grid)
        return masked, LossBatch.from_features([feature], grid, [context])

    def run(
        self,
        seed: int = 0,
        epsilon: float = 1e-5,
        max_coords: int = 200,
        tolerance: float = 1e-4,
        state: Optional[ModelState] = None,
        resolve: bool = True,
    ) -> GradCheckResult:
        """
        Check every pretraining parameter of ``state`` (fresh when None).

        With ``resolve``, coordinates whose tape and finite-difference
        derivatives both lie below the central-difference resolution at
        ``tolerance`` are skipped and counted in ``below_floor``.
        """
        state = state or ModelState.initialize(self.model_config)
        names = sorted(state.set_mode("pretrain"))
        params = [state.store.param(n) for n in names]
        masked, batch = self._sample(seed)

        def loss_fn():
            return pg_ssl_loss(decode(state, latent_of(state, masked)), batch, self.loss).total

        floor = resolution_floor(loss_fn().item(), epsilon, tolerance) if resolve else 0.0
        report = grad_check_report(
            loss_fn, params, epsilon=epsilon, max_coords=max_coords, seed=seed, floor=floor
        )
        logger.info(
            f"Gradient check over {report.checked} coordinates: max relative error "
            f"{report.max_rel_error:.3e}, {report.below_floor} below the {floor:.2e} floor"
        )
        return GradCheckResult(
            max_rel_error=report.max_rel_error,
            coordinates=report.checked,
            tolerance=tolerance,
            below_floor=report.below_floor,
            floor=floor,
        )
