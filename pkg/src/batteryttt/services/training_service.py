"""
Source-domain training: self-supervised pretraining of the embedder,
reprogrammer, encoder, decoder and prompt, then a closed-form linear probe
of the SOH head on frozen latents.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from tqdm import tqdm

from ..core import tensor as T
from ..core.features import apply_random_mask, truncate_partial
from ..core.loss import LossBatch, PhysicsContext, pg_ssl_loss, physics_context_for
from ..core.model import ModelState, decode, latent_of
from ..core.optim import AdamState, adamw_step, collect_grads, grad_norm
from ..exceptions import ContractError, ProbeError, TrainingDivergedError
from ..schemas.features import FeatureDataset, MaskSpec, QdLinearFeature, VoltageGrid
from ..schemas.model import ModelConfig
from ..schemas.training import LossConfig, OptimConfig

logger = logging.getLogger(__name__)

# Latent batches for the probe; only bounds peak memory.
_PROBE_CHUNK = 64


@dataclass
class PretrainResult:
    """Pretrained state, per-epoch mean loss and peak gradient norm."""

    state: ModelState
    history: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.history)


def plateaued(history: Sequence[float], window: int, tol: float) -> bool:
    """Relative improvement of the best loss over the last ``window`` epochs is below ``tol``."""
    if len(history) <= window:
        return False
    best_before = min(history[:-window])
    best_now = min(history)
    if best_before <= 0:
        return True
    return (best_before - best_now) / best_before < tol


def physics_contexts(
    dataset: FeatureDataset, grid: Optional[VoltageGrid] = None
) -> list[Optional[PhysicsContext]]:
    """One physics context per feature (None where the residual cannot be formed)."""
    grid = grid or dataset.grid
    if dataset.physics is None or grid is None:
        if dataset.physics is None:
            logger.info("No physics sidecar: the ODE residual term is disabled")
        return [None] * len(dataset)
    return [physics_context_for(f, dataset.physics, grid) for f in dataset.features]


class TrainingService:
    """Pretraining and linear probing on a labelled source dataset."""

    def __init__(
        self,
        model_config: ModelConfig,
        optim: OptimConfig,
        loss: LossConfig,
        progress: bool = False,
    ):
        """
        Initialize training service.

        Args:
            model_config: Architecture of the network
            optim: Optimizer and schedule settings
            loss: PG-SSL loss settings
            progress: Show a tqdm bar over epochs
        """
        self.model_config = model_config
        self.optim = optim
        self.loss = loss
        self.progress = progress

    def _pretrain_view(
        self, feature: QdLinearFeature, rng: np.random.Generator
    ) -> QdLinearFeature:
        """Randomly truncated, randomly masked copy of a source curve."""
        fraction = rng.uniform(self.optim.min_observed_fraction, 1.0)
        partial = truncate_partial(feature, fraction)
        spec = MaskSpec(ratio=self.optim.pretrain_mask_ratio, seed=int(rng.integers(2**31)))
        masked, _ = apply_random_mask(partial, spec)
        return masked

    def pretrain(
        self, dataset: FeatureDataset, state: Optional[ModelState] = None
    ) -> PretrainResult:
        """
        Minimize the mean PG-SSL loss over the source features.

        Each sample is seen with a random observed fraction in
        [min_observed_fraction, 1] and a random mask over the visible prefix;
        the reconstruction target is the complete source curve.

        Raises:
            ContractError: If the dataset is empty
            TrainingDivergedError: On a non-finite loss
        """
        if len(dataset) == 0:
            raise ContractError("pretraining needs a non-empty dataset")
        if dataset.grid is None:
            raise ContractError("pretraining needs the feature grid")
        state = state or ModelState.initialize(self.model_config)
        trainable = sorted(state.set_mode("pretrain"))
        params = [state.store.param(n) for n in trainable]
        contexts = physics_contexts(dataset)
        features = dataset.features
        n = len(features)
        batch_size = min(self.optim.batch_size, n)

        rng = np.random.default_rng(self.optim.seed)
        adam = AdamState()
        history: list[float] = []
        grad_norms: list[float] = []
        stopped_early = False

        logger.info(
            f"Pretraining on {n} samples: {state.store.count(trainable)} trainable parameters, "
            f"lambda={self.loss.lam}, up to {self.optim.max_epochs} epochs"
        )
        bar = tqdm(range(self.optim.max_epochs), desc="pretrain", disable=not self.progress)
        for epoch in bar:
            order = rng.permutation(n)
            weighted, seen, peak = 0.0, 0, 0.0
            for start in range(0, n, batch_size):
                idx = order[start : start + batch_size]
                views = [self._pretrain_view(features[i], rng) for i in idx]
                batch = LossBatch.from_features(
                    [features[i] for i in idx], dataset.grid, [contexts[i] for i in idx]
                )
                state.store.zero_grad()
                x_hat = decode(state, latent_of(state, views))
                terms = pg_ssl_loss(x_hat, batch, self.loss)
                value = terms.total.item()
                if not math.isfinite(value):
                    raise TrainingDivergedError(
                        f"pretraining loss became {value}",
                        {"epoch": epoch + 1, "batch": start // batch_size,
                         "recon": terms.recon, "residual": terms.residual},
                    )
                T.backward(terms.total)
                grads = collect_grads(params)
                norm = grad_norm(grads)
                if not math.isfinite(norm):
                    raise TrainingDivergedError(
                        f"pretraining gradient norm became {norm}",
                        {"epoch": epoch + 1, "batch": start // batch_size},
                    )
                peak = max(peak, norm)
                adamw_step(
                    params,
                    grads,
                    adam,
                    lr=self.optim.pretrain_lr,
                    betas=self.optim.betas,
                    weight_decay=self.optim.weight_decay,
                    eps=self.optim.eps,
                )
                weighted += value * len(idx)
                seen += len(idx)
            history.append(weighted / seen)
            grad_norms.append(peak)
            bar.set_postfix(loss=f"{history[-1]:.3e}")
            logger.debug(f"epoch {epoch + 1}: loss {history[-1]:.6e}, peak grad norm {peak:.3e}")
            if plateaued(history, self.optim.plateau_window, self.optim.plateau_tol):
                stopped_early = True
                logger.info(f"Loss plateaued after {epoch + 1} epochs")
                break

        state.store.zero_grad()
        state.set_mode("probe")
        logger.info(f"Pretraining done: final loss {history[-1]:.6e} after {len(history)} epochs")
        return PretrainResult(
            state=state, history=history, grad_norms=grad_norms, stopped_early=stopped_early
        )

    def latents(self, state: ModelState, features: Sequence[QdLinearFeature]) -> np.ndarray:
        """Frozen encoder latents (N, D) of unmasked features."""
        rows = [
            latent_of(state, list(features[i : i + _PROBE_CHUNK])).data
            for i in range(0, len(features), _PROBE_CHUNK)
        ]
        return np.concatenate(rows, axis=0)

    def linear_probe(self, state: ModelState, dataset: FeatureDataset) -> ModelState:
        """
        Fit the SOH head by closed-form ridge regression on frozen latents.

        Only the head changes; every other parameter keeps its bytes.

        Raises:
            ProbeError: No labelled samples, or latents of rank 0
        """
        labelled = [f for f in dataset.features if dataset.label_for(f) is not None]
        if not labelled:
            raise ProbeError("linear probe needs labelled source samples")
        state.set_mode("probe")
        z = self.latents(state, labelled)
        if not np.all(np.isfinite(z)):
            raise ProbeError("latents contain non-finite values")
        if np.linalg.matrix_rank(z) == 0:
            raise ProbeError("latents have rank 0; the head cannot be fitted")
        y = np.array([dataset.label_for(f) for f in labelled], dtype=np.float64)

        design = np.hstack([z, np.ones((len(z), 1))])
        gram = design.T @ design + self.optim.ridge * np.eye(design.shape[1])
        coef = np.linalg.solve(gram, design.T @ y)

        store = state.store
        store["head.weight"].data = coef[:-1].reshape(-1, 1).copy()
        store["head.bias"].data = np.array([coef[-1]])
        fitted = design @ coef
        logger.info(
            f"Linear probe on {len(labelled)} samples: "
            f"train MAE {float(np.mean(np.abs(fitted - y))):.4f} pct-points"
        )
        return state
