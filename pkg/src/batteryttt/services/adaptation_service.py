"""
Test-time adaptation service.

For each arriving target feature: adapt the trainable partition with a few
SGD-momentum steps on the self-supervised loss of that single sample, then
predict SOH from the unmasked input through the probed head. Labels join
only afterwards, for metrics.
"""

import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from tqdm import tqdm

from ..core import tensor as T
from ..core.features import apply_random_mask
from ..core.loss import LossBatch, PhysicsContext, pg_ssl_loss, physics_context_for
from ..core.metrics import mae, rmse
from ..core.model import ModelState, decode, latent_of, predict_soh, trainable_partition
from ..core.optim import collect_grads, sgd_momentum_step
from ..exceptions import ContractError, TrainingDivergedError
from ..schemas.features import MaskSpec, PhysicsSidecar, QdLinearFeature, VoltageGrid
from ..schemas.training import (
    AdaptationReport,
    LossConfig,
    OptimConfig,
    SampleRecord,
    TtaConfig,
)

logger = logging.getLogger(__name__)


def sample_seed(seed: int, cell_id: str, cycle: int) -> int:
    """Per-sample RNG key; independent of the sample's position in the stream."""
    key = zlib.crc32(f"{cell_id}:{cycle}".encode("utf-8"))
    return int(np.random.default_rng([seed, key]).integers(2**31))


def effective_loss(loss: LossConfig, cfg: TtaConfig) -> LossConfig:
    """Loss settings at test time: recon_only drops the residual, residual_mode may be overridden."""
    update: dict = {}
    if cfg.ssl == "recon_only":
        update["lam"] = 0.0
    if cfg.residual_mode is not None:
        update["residual_mode"] = cfg.residual_mode
    return loss.model_copy(update=update) if update else loss


def tta_adapt(
    state: ModelState,
    feature: QdLinearFeature,
    cfg: TtaConfig,
    optim: OptimConfig,
    loss: LossConfig,
    grid: VoltageGrid,
    context: Optional[PhysicsContext] = None,
    momentum: Optional[dict[str, np.ndarray]] = None,
) -> list[float]:
    """
    Adapt ``state`` in place on one unlabelled feature.

    Runs ``optim.tta_steps`` SGD-momentum steps on the PG-SSL loss of the
    masked sample. One mask is drawn per sample and reused across steps.

    Returns:
        SSL loss before each step plus the loss after the last step
        (empty for mode ``none``)

    Raises:
        TrainingDivergedError: On a non-finite loss
    """
    if cfg.mode == "none":
        return []
    trainable = sorted(state.set_mode(cfg.mode))
    params = [state.store.param(n) for n in trainable]
    buffers = momentum if momentum is not None else {}

    spec = MaskSpec(ratio=cfg.mask_ratio, seed=sample_seed(optim.seed, feature.cell_id, feature.cycle))
    masked, _ = apply_random_mask(feature, spec)
    batch = LossBatch.from_features([feature], grid, [context])
    loss_cfg = effective_loss(loss, cfg)

    losses: list[float] = []
    for step in range(optim.tta_steps + 1):
        state.store.zero_grad()
        terms = pg_ssl_loss(decode(state, latent_of(state, masked)), batch, loss_cfg)
        value = terms.total.item()
        if not math.isfinite(value):
            raise TrainingDivergedError(
                f"test-time loss became {value}",
                {"cell_id": feature.cell_id, "cycle": feature.cycle, "step": step},
            )
        losses.append(value)
        if step == optim.tta_steps:
            break
        T.backward(terms.total)
        sgd_momentum_step(params, collect_grads(params), buffers, optim.tta_lr, optim.momentum)
    state.store.zero_grad()
    return losses


def predict(state: ModelState, feature: QdLinearFeature) -> float:
    """h(f(x)) on the unmasked partial input, in percent."""
    return float(predict_soh(state, latent_of(state, feature)).data[0])


class AdaptationSession:
    """
    One stream, one mutable model copy.

    ``episodic`` restores the pretrained parameters and clears momentum
    before every sample; ``online`` carries both forward.
    """

    def __init__(
        self,
        base: ModelState,
        cfg: TtaConfig,
        optim: OptimConfig,
        loss: LossConfig,
        grid: VoltageGrid,
        physics: Optional[PhysicsSidecar] = None,
    ):
        self.state = base.clone()
        self.cfg = cfg
        self.optim = optim
        self.loss = loss
        self.grid = grid
        self.physics = physics
        self._initial = self.state.store.snapshot()
        self._momentum: dict[str, np.ndarray] = {}

    def reset(self) -> None:
        self.state.store.restore(self._initial)
        self._momentum = {}

    def process(self, feature: QdLinearFeature) -> SampleRecord:
        """Adapt on ``feature`` and predict its SOH."""
        start = time.perf_counter()
        if self.cfg.reset_policy == "episodic":
            self.reset()
        context = (
            physics_context_for(feature, self.physics, self.grid)
            if self.cfg.ssl == "pg_ssl" and self.cfg.mode != "none"
            else None
        )
        losses = tta_adapt(
            self.state, feature, self.cfg, self.optim, self.loss, self.grid, context, self._momentum
        )
        soh = predict(self.state, feature)
        wall_ms = (time.perf_counter() - start) * 1000.0
        return SampleRecord(
            cell_id=feature.cell_id,
            cycle=feature.cycle,
            predicted_soh=soh,
            ssl_losses=losses,
            wall_ms=wall_ms,
        )


@dataclass
class _CellTask:
    base: ModelState
    features: list[QdLinearFeature]
    cfg: TtaConfig
    optim: OptimConfig
    loss: LossConfig
    grid: VoltageGrid
    physics: Optional[PhysicsSidecar] = None
    positions: list[int] = field(default_factory=list)


def _run_cell(task: _CellTask) -> list[tuple[int, SampleRecord]]:
    session = AdaptationSession(task.base, task.cfg, task.optim, task.loss, task.grid, task.physics)
    return [(pos, session.process(f)) for pos, f in zip(task.positions, task.features)]


def group_by_cell(features: Iterable[QdLinearFeature]) -> dict[str, list[tuple[int, QdLinearFeature]]]:
    """Stream positions and features per cell, in order of first appearance."""
    groups: dict[str, list[tuple[int, QdLinearFeature]]] = {}
    for pos, feature in enumerate(features):
        groups.setdefault(feature.cell_id, []).append((pos, feature))
    return groups


def trainable_count(state: ModelState, mode: str) -> int:
    if mode == "none":
        return 0
    return state.store.count(trainable_partition(state, mode))


def attach_labels(
    records: Sequence[SampleRecord], labels: Optional[dict[tuple[str, int], float]]
) -> list[SampleRecord]:
    if not labels:
        return list(records)
    return [
        r.model_copy(update={"true_soh": labels.get((r.cell_id, r.cycle))}) for r in records
    ]


def summarize(
    records: Sequence[SampleRecord], config: dict, trainable_params: int
) -> AdaptationReport:
    """Aggregate metrics over records that carry a true SOH."""
    scored = [r for r in records if r.true_soh is not None]
    y_true = [r.true_soh for r in scored]
    y_pred = [r.predicted_soh for r in scored]
    return AdaptationReport(
        config=config,
        samples=list(records),
        mae=mae(y_true, y_pred) if scored else None,
        rmse=rmse(y_true, y_pred) if scored else None,
        trainable_params=trainable_params,
        total_ms=float(sum(r.wall_ms for r in records)),
    )


def adapt_and_predict_stream(
    state: ModelState,
    features: Sequence[QdLinearFeature],
    cfg: TtaConfig,
    optim: OptimConfig,
    loss: LossConfig,
    grid: VoltageGrid,
    physics: Optional[PhysicsSidecar] = None,
    labels: Optional[dict[tuple[str, int], float]] = None,
    jobs: int = 1,
    progress: bool = False,
) -> AdaptationReport:
    """
    Adapt and predict on a target stream, one sample at a time.

    Every cell gets its own session on a fresh copy of ``state``; sessions
    may run in parallel (``jobs`` > 1). Records keep stream order. ``state``
    itself is never modified.

    Raises:
        ContractError: If ``state`` has no fitted head partition
    """
    if "head.weight" not in state.store:
        raise ContractError("model has no SOH head")
    groups = group_by_cell(features)
    tasks = [
        _CellTask(
            base=state,
            features=[f for _, f in items],
            cfg=cfg,
            optim=optim,
            loss=loss,
            grid=grid,
            physics=physics,
            positions=[p for p, _ in items],
        )
        for items in groups.values()
    ]
    logger.info(
        f"Adapting {len(features)} samples from {len(tasks)} cells: mode={cfg.mode}, "
        f"ssl={cfg.ssl}, mask={cfg.mask_ratio}, reset={cfg.reset_policy}"
    )

    results: list[tuple[int, SampleRecord]] = []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for cell_results in tqdm(
                pool.map(_run_cell, tasks), total=len(tasks), desc="adapt", disable=not progress
            ):
                results.extend(cell_results)
    else:
        for task in tqdm(tasks, desc="adapt", disable=not progress):
            results.extend(_run_cell(task))

    records = [r for _, r in sorted(results, key=lambda item: item[0])]
    records = attach_labels(records, labels)
    config = {**cfg.model_dump(mode="json"), "steps": optim.tta_steps, "lr": optim.tta_lr,
              "momentum": optim.momentum, "seed": optim.seed, "lambda": effective_loss(loss, cfg).lam}
    report = summarize(records, config, trainable_count(state, cfg.mode))
    if report.mae is not None:
        logger.info(f"Stream MAE {report.mae:.4f}, RMSE {report.rmse:.4f}, {report.mean_ms:.1f} ms/sample")
    return report
