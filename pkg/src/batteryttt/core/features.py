"""
QdLinear feature extraction: charge capacity interpolated onto a fixed
voltage grid, plus partial-observation and random-mask variants.
"""

import logging
import math
from dataclasses import replace

import numpy as np

from ..exceptions import DomainError, FeatureError
from ..schemas.ecm import CycleRecord
from ..schemas.features import MaskSpec, QdLinearFeature, VoltageGrid

logger = logging.getLogger(__name__)

# Grid points within this fraction of a grid cell above the max voltage still count as observed.
_OBS_TOLERANCE = 1e-9


def ceil_count(fraction: float, total: int) -> int:
    """ceil(fraction * total), robust to float noise such as 0.3 * 100."""
    return int(math.ceil(round(fraction * total, 9)))


def qdlinear(cycle: CycleRecord, grid: VoltageGrid, c_nom: float = 1.0) -> QdLinearFeature:
    """Interpolate cumulative capacity onto ``grid``.

    Voltage is made monotone with a cumulative max; repeated voltages (CV
    plateau, noise) keep their first occurrence. Grid points above the cycle's
    maximum voltage are unobserved.

    Raises:
        FeatureError: If fewer than 2 samples fall inside the grid range
    """
    if len(cycle) == 0:
        raise FeatureError(f"cycle {cycle.cell_id}/{cycle.cycle} has no samples")
    voltage = np.maximum.accumulate(cycle.voltage_v)
    inside = (voltage >= grid.v_lower) & (voltage <= grid.v_upper)
    if int(inside.sum()) < 2:
        raise FeatureError(
            f"cycle {cycle.cell_id}/{cycle.cycle}: fewer than 2 samples inside "
            f"[{grid.v_lower}, {grid.v_upper}] V"
        )

    v_unique, first = np.unique(voltage, return_index=True)
    q_unique = cycle.q_ah[first]
    grid_v = grid.points()
    values = np.interp(grid_v, v_unique, q_unique, left=0.0)
    obs_mask = grid_v <= voltage[-1] + _OBS_TOLERANCE * grid.spacing
    n_obs = int(obs_mask.sum())
    if n_obs == 0:
        raise FeatureError(f"cycle {cycle.cell_id}/{cycle.cycle} never reaches the grid")

    charging = cycle.current_a[cycle.current_a > 0]
    current = float(np.median(charging)) if charging.size else 0.0
    return QdLinearFeature(
        values=values,
        obs_mask=obs_mask,
        current_a=current,
        temp_c=float(np.median(cycle.temp_c)),
        cell_id=cycle.cell_id,
        cycle=cycle.cycle,
        c_nom=c_nom,
    )


def truncate_partial(feature: QdLinearFeature, observed_fraction: float) -> QdLinearFeature:
    """Keep only the first ceil(fraction * T') grid points observed.

    Values beyond the prefix are retained in ``values`` but flagged unobserved.
    """
    if not 0.0 < observed_fraction <= 1.0:
        raise DomainError(f"observed_fraction must lie in (0, 1], got {observed_fraction}")
    n_keep = ceil_count(observed_fraction, feature.t_full)
    prefix = np.arange(feature.t_full) < n_keep
    obs_mask = feature.obs_mask & prefix
    return replace(feature, obs_mask=obs_mask, masked=feature.masked & obs_mask)


def apply_random_mask(
    feature: QdLinearFeature, spec: MaskSpec
) -> tuple[QdLinearFeature, np.ndarray]:
    """Hide ceil(ratio * T) observed positions behind the mask flag channel."""
    n_obs = feature.n_observed
    n_mask = min(ceil_count(spec.ratio, n_obs), n_obs)
    if n_mask == 0:
        return feature.with_mask(np.zeros(feature.t_full, dtype=bool)), np.empty(0, dtype=np.int64)
    rng = np.random.default_rng(spec.seed)
    indices = np.sort(rng.choice(n_obs, size=n_mask, replace=False)).astype(np.int64)
    masked = np.zeros(feature.t_full, dtype=bool)
    masked[indices] = True
    return feature.with_mask(masked), indices


def feature_channels(feature: QdLinearFeature) -> np.ndarray:
    """(T', 3) model input: normalized capacity where visible, observed flag, mask flag.

    Unobserved and masked positions carry an exact zero in the value channel.
    """
    visible = feature.obs_mask & ~feature.masked
    channels = np.zeros((feature.t_full, 3), dtype=np.float64)
    channels[:, 0] = np.where(visible, feature.values / feature.c_nom, 0.0)
    channels[:, 1] = feature.obs_mask
    channels[:, 2] = feature.masked
    return channels
