"""
`adapt` and `ablate` commands.
"""

import argparse
import logging
from pathlib import Path

from ..config import AppConfig
from ..exceptions import ConfigError
from ..schemas.experiment import ExperimentConfig
from ..services.adaptation_service import adapt_and_predict_stream
from ..services.experiment_service import ExperimentService
from ..utils.config_loader import get_config
from ..utils.file_utils import load_checkpoint, read_features
from ..utils.json_utils import parse_with_pydantic, read_json, write_json
from ..utils.logging_utils import log_run
from .common import add_settings_option, jobs_of, load_settings

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    adapt = subparsers.add_parser("adapt", help="Adapt and predict on a target feature stream")
    adapt.add_argument("--checkpoint", required=True, help="Probed checkpoint JSON")
    adapt.add_argument("--in", dest="input", required=True, help="Target feature CSV")
    adapt.add_argument("--out", required=True, help="Output report JSON")
    add_settings_option(adapt)
    adapt.add_argument("--mode", choices=["none", "tta_full", "tta_ppa"], default=None)
    adapt.add_argument("--ssl", choices=["recon_only", "pg_ssl"], default=None)
    adapt.add_argument("--mask", type=float, default=None, help="Test-time mask ratio")
    adapt.add_argument("--steps", type=int, default=None, help="SGD steps per sample")
    adapt.add_argument("--lr", type=float, default=None, help="Test-time learning rate")
    adapt.add_argument("--reset", choices=["episodic", "online"], default=None)
    adapt.add_argument(
        "--residual-mode", choices=["paper_literal", "ocv_corrected"], default=None
    )
    adapt.add_argument("--seed", type=int, default=None, help="Test-time mask seed")
    adapt.add_argument("--jobs", type=int, default=None, help="Parallel per-cell sessions")
    adapt.set_defaults(func=run_adapt)

    ablate = subparsers.add_parser("ablate", help="Run the seeded ablation matrix")
    ablate.add_argument("--config", required=True, help="Experiment configuration JSON")
    ablate.add_argument("--out", default=None, help="Output directory")
    ablate.add_argument("--seeds", type=int, nargs="+", default=None, help="Override the seed list")
    ablate.add_argument("--jobs", type=int, default=None, help="Worker processes")
    ablate.set_defaults(func=run_ablate)


def run_adapt(args: argparse.Namespace, app: AppConfig) -> int:
    settings = load_settings(args.config, app)
    tta_update = {
        k: v
        for k, v in {
            "mode": args.mode,
            "ssl": args.ssl,
            "mask_ratio": args.mask,
            "reset_policy": args.reset,
            "residual_mode": args.residual_mode,
        }.items()
        if v is not None
    }
    tta = settings.tta.model_validate({**settings.tta.model_dump(), **tta_update})
    optim_update = {
        k: v
        for k, v in {"tta_steps": args.steps, "tta_lr": args.lr, "seed": args.seed}.items()
        if v is not None
    }
    optim = settings.optim.model_validate({**settings.optim.model_dump(), **optim_update})

    state = load_checkpoint(args.checkpoint)
    dataset = read_features(args.input)
    if dataset.grid is None:
        raise ConfigError(f"{args.input}: feature file has no grid sidecar")
    if dataset.grid.n_points != state.config.t_full:
        raise ConfigError(
            f"feature grid has {dataset.grid.n_points} points, checkpoint expects {state.config.t_full}"
        )
    report = adapt_and_predict_stream(
        state,
        dataset.features,
        tta,
        optim,
        settings.loss,
        dataset.grid,
        physics=dataset.physics,
        labels=dataset.labels,
        jobs=jobs_of(args, app),
        progress=app.show_progress,
    )
    write_json(args.out, report.model_dump(mode="json"))
    if app.run_log:
        log_run("adapt", report, seed=optim.seed, notes=Path(args.input).name)
    mae = "n/a" if report.mae is None else f"{report.mae:.4f}"
    print(f"{len(report.samples)} samples, MAE {mae}, {report.mean_ms:.1f} ms/sample -> {args.out}")
    return 0


def run_ablate(args: argparse.Namespace, app: AppConfig) -> int:
    document = read_json(args.config)
    # Sweep defaults come from the YAML settings when the document omits them
    defaults = get_config().section("ablation")
    for key in ("seeds", "mask_sweep", "lambda_sweep", "target_observed_fraction"):
        if key not in document and key in defaults:
            document[key] = defaults[key]
    experiment = parse_with_pydantic(document, ExperimentConfig, source=args.config)
    if args.seeds:
        experiment = experiment.model_copy(update={"seeds": args.seeds})
    service = ExperimentService(experiment, jobs=jobs_of(args, app), progress=app.show_progress)
    result = service.run()
    out = service.write(result, args.out)
    print((out / "ablation.txt").read_text(encoding="utf-8"))
    return 0
