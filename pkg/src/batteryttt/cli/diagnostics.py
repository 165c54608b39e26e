"""
`gradcheck` and `report` commands.
"""

import argparse
import json
import logging

from ..config import AppConfig
from ..exceptions import ConfigError
from ..services.gradcheck_service import GradCheckService
from ..services.report_service import ReportService
from ..utils.logging_utils import get_log_summary
from .common import add_settings_option, load_settings

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    grad = subparsers.add_parser("gradcheck", help="Finite-difference check of the full composite")
    add_settings_option(grad)
    grad.add_argument("--seed", type=int, default=0)
    grad.add_argument("--epsilon", type=float, default=1e-5, help="Central-difference step")
    grad.add_argument("--coords", type=int, default=200, help="Sampled coordinates")
    grad.add_argument("--tolerance", type=float, default=1e-4, help="Max relative error")
    grad.add_argument(
        "--strict",
        action="store_true",
        help="Also check coordinates below the roundoff resolution of the loss",
    )
    grad.set_defaults(func=run_gradcheck)

    report = subparsers.add_parser("report", help="Render adaptation reports as tables")
    report.add_argument("--in", dest="inputs", nargs="*", default=[], help="Report JSON files")
    report.add_argument("--out", default=None, help="Write the aligned text table here")
    report.add_argument("--csv", default=None, help="Write the summary CSV here")
    report.add_argument("--xlsx", default=None, help="Write an Excel workbook here")
    report.add_argument("--runs", action="store_true", help="Summarize the CSV run log")
    report.set_defaults(func=run_report)


def run_gradcheck(args: argparse.Namespace, app: AppConfig) -> int:
    settings = load_settings(args.config, app)
    service = GradCheckService(settings.model, settings.loss)
    result = service.run(
        seed=args.seed,
        epsilon=args.epsilon,
        max_coords=args.coords,
        tolerance=args.tolerance,
        resolve=not args.strict,
    )
    print(json.dumps(result.as_dict(), indent=2))
    return 0 if result.passed else 1


def run_report(args: argparse.Namespace, app: AppConfig) -> int:
    if not args.inputs and not args.runs:
        raise ConfigError("report needs --in files or --runs")
    if args.inputs:
        service = ReportService()
        text = service.write(
            service.load(args.inputs), out=args.out, csv_path=args.csv, xlsx_path=args.xlsx
        )
        print(text, end="")
    if args.runs:
        print(json.dumps(get_log_summary(), indent=2, default=str))
    return 0
