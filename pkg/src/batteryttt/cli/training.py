"""
`pretrain` and `probe` commands.
"""

import argparse
import logging

import pandas as pd

from ..config import AppConfig
from ..exceptions import ConfigError
from ..services.training_service import TrainingService
from ..utils.file_utils import ensure_output_directory, load_checkpoint, read_features, save_checkpoint
from .common import add_settings_option, load_settings

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    pre = subparsers.add_parser("pretrain", help="Self-supervised pretraining on source features")
    pre.add_argument("--in", dest="input", required=True, help="Source feature CSV")
    pre.add_argument("--out", required=True, help="Output checkpoint JSON")
    add_settings_option(pre)
    pre.add_argument("--epochs", type=int, default=None, help="Maximum epochs")
    pre.add_argument("--seed", type=int, default=None, help="Model and batch-order seed")
    pre.add_argument("--lambda", dest="lam", type=float, default=None, help="Residual weight")
    pre.add_argument("--batch-size", type=int, default=None, help="Mini-batch size")
    pre.add_argument("--history", default=None, help="Write the per-epoch loss to this CSV")
    pre.set_defaults(func=run_pretrain)

    probe = subparsers.add_parser("probe", help="Fit the SOH head on frozen latents")
    probe.add_argument("--checkpoint", required=True, help="Pretrained checkpoint JSON")
    probe.add_argument("--in", dest="input", required=True, help="Labelled source feature CSV")
    probe.add_argument("--out", default=None, help="Output checkpoint (default: overwrite)")
    add_settings_option(probe)
    probe.set_defaults(func=run_probe)


def run_pretrain(args: argparse.Namespace, app: AppConfig) -> int:
    settings = load_settings(args.config, app)
    optim_update = {
        k: v
        for k, v in {"max_epochs": args.epochs, "seed": args.seed, "batch_size": args.batch_size}.items()
        if v is not None
    }
    optim = settings.optim.model_validate({**settings.optim.model_dump(), **optim_update})
    model = settings.model
    if args.seed is not None:
        model = model.model_copy(update={"seed": args.seed})
    loss = settings.loss
    if args.lam is not None:
        loss = loss.model_validate({**loss.model_dump(), "lam": args.lam})

    dataset = read_features(args.input)
    if dataset.grid is not None and dataset.grid.n_points != model.t_full:
        raise ConfigError(
            f"feature grid has {dataset.grid.n_points} points but model.t_full is {model.t_full}"
        )
    service = TrainingService(model, optim, loss, progress=app.show_progress)
    result = service.pretrain(dataset)
    save_checkpoint(args.out, result.state)
    if args.history:
        pd.DataFrame(
            {"epoch": range(1, result.epochs + 1), "loss": result.history}
        ).to_csv(ensure_output_directory(args.history), index=False)
    print(f"Pretrained for {result.epochs} epochs, final loss {result.history[-1]:.6e}")
    return 0


def run_probe(args: argparse.Namespace, app: AppConfig) -> int:
    settings = load_settings(args.config, app)
    state = load_checkpoint(args.checkpoint)
    dataset = read_features(args.input)
    service = TrainingService(state.config, settings.optim, settings.loss)
    service.linear_probe(state, dataset)
    out = args.out or args.checkpoint
    save_checkpoint(out, state)
    print(f"Probed head written to {out}")
    return 0
