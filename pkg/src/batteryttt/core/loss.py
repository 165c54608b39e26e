"""
Physics-guided self-supervised loss.

    L = mean_obs (x_hat - x)^2 + lambda * mean (r / (theta2 dV))^2

r is the first-order ECM residual of the generated voltage-time curve,
evaluated by central differences on the non-uniform time grid. r / theta2
is the residual as a voltage; dV is the span of the voltage grid.
Capacities are normalized by nominal capacity, so both terms are squared
fractions of their full-scale range.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..exceptions import ContractError
from ..schemas.ecm import CurrentConvention, EcmCoefficients, EcmParams
from ..schemas.features import PhysicsSidecar, QdLinearFeature, VoltageGrid
from ..schemas.training import LossConfig
from . import tensor as T
from .ecm import apply_degradation, derive_coefficients, inverse_ocv, ocv_arrays
from .model import generated_times
from .tensor import Value

logger = logging.getLogger(__name__)


@dataclass
class PhysicsContext:
    """Per-sample quantities the residual needs (theta, current, OCV, SOC window)."""

    coeffs: EcmCoefficients
    current_a: float
    ocv_soc: np.ndarray
    ocv_v: np.ndarray
    soc_start: float
    soc_end: float
    c_nom: float

    @classmethod
    def from_params(
        cls,
        params: EcmParams,
        current_a: float,
        grid: VoltageGrid,
        temperature: float = 25.0,
        arrhenius_k: float = 0.0,
    ) -> "PhysicsContext":
        """Derive theta and the SOC window of a charge over ``grid``.

        At constant current with a settled RC branch, OCV = v - I (R + R_p) and
        R + R_p = theta1 / theta2.
        """
        coeffs = derive_coefficients(params, temperature, arrhenius_k)
        drop = current_a * coeffs.theta1 / coeffs.theta2
        socs, volts = ocv_arrays(params)
        return cls(
            coeffs=coeffs,
            current_a=current_a,
            ocv_soc=np.array(socs),
            ocv_v=np.array(volts),
            soc_start=inverse_ocv(params, grid.v_lower - drop),
            soc_end=inverse_ocv(params, grid.v_upper - drop),
            c_nom=params.capacity_nom,
        )


def physics_context_for(
    feature: QdLinearFeature, physics: Optional[PhysicsSidecar], grid: VoltageGrid
) -> Optional[PhysicsContext]:
    """Context for ``feature`` or None when the residual cannot be formed."""
    if physics is None or feature.cell_id not in physics.cells:
        return None
    if feature.current_a <= 0:
        logger.warning(
            f"{feature.cell_id}/{feature.cycle}: zero charge current, "
            "time grid undefined; residual disabled for this sample"
        )
        return None
    params = apply_degradation(physics.cells[feature.cell_id], feature.cycle - 1, physics.schedule)
    return PhysicsContext.from_params(
        params, feature.current_a, grid, feature.temp_c, physics.arrhenius_k
    )


@dataclass
class ResidualInputs:
    """Voltages, generated times and physics for the ODE residual.

    ``t_grid`` and ``ocv_at_soc`` may be Values (differentiable) or arrays;
    the leading batch axis is optional.
    """

    v_grid: np.ndarray
    t_grid: Value
    current: np.ndarray
    coeffs: Sequence[EcmCoefficients]
    ocv_at_soc: Optional[Value] = None

    def __post_init__(self):
        self.t_grid = T.as_value(self.t_grid)
        if self.ocv_at_soc is not None:
            self.ocv_at_soc = T.as_value(self.ocv_at_soc)
        if isinstance(self.coeffs, EcmCoefficients):
            self.coeffs = [self.coeffs]
        self.current = np.atleast_1d(np.asarray(self.current, dtype=np.float64))


def _rowwise(values: np.ndarray, shape: tuple[int, ...]) -> Value:
    """Constant of ``shape`` holding one value per batch row (or a single value)."""
    values = np.asarray(values, dtype=np.float64)
    if len(shape) == 1:
        return T.constant(np.full(shape, float(values.reshape(-1)[0])))
    return T.constant(np.broadcast_to(values.reshape(-1, 1), shape))


def ode_residual(
    inputs: ResidualInputs,
    mode: str = "ocv_corrected",
    convention: CurrentConvention = CurrentConvention.CHARGE_POSITIVE,
) -> Value:
    """Residual of theta1 I + theta2 u + du/dt = 0 at interior grid points.

    paper_literal: r = theta1 I + theta2 v + dv/dt
    ocv_corrected: r = theta1 I + theta2 (v - ocv) + d(v - ocv)/dt

    I is the discharge-positive current, so a charge-positive current flips
    sign. Returns shape (..., T' - 2).

    Raises:
        ContractError: If t_grid is not strictly increasing or mode is unknown
    """
    if mode not in ("paper_literal", "ocv_corrected"):
        raise ContractError(f"unknown residual mode '{mode}'")
    t_grid = inputs.t_grid
    v = np.asarray(inputs.v_grid, dtype=np.float64)
    if v.shape[-1] != t_grid.shape[-1] or t_grid.shape[-1] < 3:
        raise ContractError(f"v_grid {v.shape} and t_grid {t_grid.shape} must align (>= 3 points)")
    if np.any(np.diff(t_grid.data, axis=-1) <= 0):
        raise ContractError("t_grid must be strictly increasing")

    interior = t_grid.shape[:-1] + (t_grid.shape[-1] - 2,)
    v = np.broadcast_to(v, t_grid.shape)
    dv = v[..., 2:] - v[..., :-2]
    v_mid = v[..., 1:-1]
    dt = t_grid[..., 2:] - t_grid[..., :-2]

    sign = -convention.charge_sign
    theta1 = np.array([c.theta1 for c in inputs.coeffs])
    theta2 = np.array([c.theta2 for c in inputs.coeffs])
    drive = _rowwise(theta1 * sign * inputs.current, interior)
    theta2_c = _rowwise(theta2, interior)

    if mode == "paper_literal":
        return drive + theta2_c * T.constant(v_mid) + T.constant(dv) / dt

    if inputs.ocv_at_soc is None:
        raise ContractError("ocv_corrected mode needs ocv_at_soc")
    ocv = inputs.ocv_at_soc
    if ocv.shape != t_grid.shape:
        ocv = T.expand(T.reshape(ocv, (1,) * (t_grid.ndim - 1) + ocv.shape), t_grid.shape)
    gap = T.constant(v_mid) - ocv[..., 1:-1]
    d_gap = T.constant(dv) - (ocv[..., 2:] - ocv[..., :-2])
    return drive + theta2_c * gap + d_gap / dt


def ocv_along_curve(x_hat: Value, contexts: Sequence[PhysicsContext]) -> Value:
    """OCV at the SOC implied by each point of the generated curve.

    soc_j = soc_start + (x_j / x_end) (soc_end - soc_start).
    """
    batch, t_full = x_hat.shape
    x_end = T.expand(x_hat[:, -1:], x_hat.shape)
    fraction = x_hat / x_end
    start = np.array([c.soc_start for c in contexts])
    span = np.array([c.soc_end - c.soc_start for c in contexts])
    soc = _rowwise(start, x_hat.shape) + fraction * _rowwise(span, x_hat.shape)

    first = contexts[0]
    shared = all(
        np.array_equal(c.ocv_soc, first.ocv_soc) and np.array_equal(c.ocv_v, first.ocv_v)
        for c in contexts
    )
    if shared:
        return T.interp(soc, first.ocv_soc, first.ocv_v)
    rows = [T.interp(soc[i : i + 1, :], c.ocv_soc, c.ocv_v) for i, c in enumerate(contexts)]
    return T.concat(rows, axis=0)


def recon_loss_batch(x_hat: Value, targets: np.ndarray, obs_mask: np.ndarray) -> Value:
    """Per-sample mean squared error over observed positions, averaged over the batch."""
    obs_mask = np.atleast_2d(np.asarray(obs_mask, dtype=bool))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if x_hat.ndim == 1:
        x_hat = T.reshape(x_hat, (1, x_hat.shape[0]))
    counts = obs_mask.sum(axis=-1)
    if np.any(counts == 0):
        raise ContractError("reconstruction needs at least one observed position (T = 0)")
    if x_hat.shape != obs_mask.shape:
        raise ContractError(f"x_hat {x_hat.shape} vs mask {obs_mask.shape}")
    weights = obs_mask / (counts[:, None] * counts.size)
    diff = x_hat - T.constant(np.where(obs_mask, targets, 0.0))
    return T.sum_(diff * diff * T.constant(weights))


def recon_loss(
    x_hat: Value, x: QdLinearFeature, masked_indices: Optional[Sequence[int]] = None
) -> Value:
    """MSE over the observed prefix, masked positions included (pre-mask targets)."""
    n_obs = x.n_observed
    if n_obs == 0:
        raise ContractError("reconstruction needs at least one observed position (T = 0)")
    if masked_indices is not None and len(masked_indices) and max(masked_indices) >= n_obs:
        raise ContractError("masked indices must lie inside the observed prefix")
    if x_hat.ndim == 1:
        x_hat = T.reshape(x_hat, (1, x_hat.shape[0]))
    return recon_loss_batch(x_hat, (x.values / x.c_nom)[None], x.obs_mask[None])


@dataclass
class LossBatch:
    """Targets and physics of a batch, all on one voltage grid."""

    targets: np.ndarray
    obs_mask: np.ndarray
    v_grid: np.ndarray
    contexts: list[Optional[PhysicsContext]] = field(default_factory=list)

    @classmethod
    def from_features(
        cls,
        features: Sequence[QdLinearFeature],
        grid: VoltageGrid,
        contexts: Optional[Sequence[Optional[PhysicsContext]]] = None,
    ) -> "LossBatch":
        targets = np.stack([np.where(f.obs_mask, f.values / f.c_nom, 0.0) for f in features])
        obs = np.stack([f.obs_mask for f in features])
        ctx = list(contexts) if contexts is not None else [None] * len(features)
        return cls(targets=targets, obs_mask=obs, v_grid=grid.points(), contexts=ctx)


@dataclass
class LossTerms:
    total: Value
    recon: float
    residual: float


def residual_term(x_hat: Value, batch: LossBatch, cfg: LossConfig) -> Optional[Value]:
    """Mean squared normalized residual over rows that carry physics, else None."""
    rows = [i for i, c in enumerate(batch.contexts) if c is not None]
    if not rows:
        return None
    contexts = [batch.contexts[i] for i in rows]
    x_rows = x_hat if len(rows) == x_hat.shape[0] else T.take(x_hat, rows, axis=0)
    current = np.array([c.current_a for c in contexts])
    c_nom = np.array([c.c_nom for c in contexts])
    inputs = ResidualInputs(
        v_grid=batch.v_grid,
        t_grid=generated_times(x_rows, current, c_nom),
        current=current,
        coeffs=[c.coeffs for c in contexts],
        ocv_at_soc=ocv_along_curve(x_rows, contexts) if cfg.residual_mode == "ocv_corrected" else None,
    )
    r = ode_residual(inputs, cfg.residual_mode, cfg.convention)
    window = float(batch.v_grid[-1] - batch.v_grid[0])
    norm = np.array([c.coeffs.theta2 * window for c in contexts])
    r_n = r * _rowwise(1.0 / norm, r.shape)

    n_interior = r.shape[-1]
    if cfg.residual_region == "overlap":
        n_obs = batch.obs_mask[rows].sum(axis=-1)
        region = np.arange(1, n_interior + 1)[None, :] < n_obs[:, None]
    else:
        region = np.ones((len(rows), n_interior), dtype=bool)
    counts = region.sum(axis=-1)
    keep = counts > 0
    if not keep.any():
        return None
    weights = np.where(keep[:, None], region / np.maximum(counts, 1)[:, None], 0.0) / keep.sum()
    return T.sum_(r_n * r_n * T.constant(weights))


def pg_ssl_loss(x_hat: Value, batch: LossBatch, cfg: LossConfig) -> LossTerms:
    """Reconstruction plus lambda times the mean squared normalized residual.

    With lambda = 0 the residual is not evaluated and the loss equals the
    reconstruction term exactly.
    """
    recon = recon_loss_batch(x_hat, batch.targets, batch.obs_mask)
    if cfg.lam == 0.0:
        return LossTerms(total=recon, recon=recon.item(), residual=0.0)
    residual = residual_term(x_hat, batch, cfg)
    if residual is None:
        return LossTerms(total=recon, recon=recon.item(), residual=0.0)
    total = recon + T.scale(residual, cfg.lam)
    return LossTerms(total=total, recon=recon.item(), residual=residual.item())
