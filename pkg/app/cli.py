"""Batch front end: logconcave <subcommand> [flags].

Exit status 0 on success, 2 on invalid configuration, 3 when --strict is set and the
verdict is inconclusive, 1 on any other failure.
"""

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from app.config import parse_body, parse_measure, parse_phi, read_json, run_config
from app.errors import ConfigError
from app.experiment_service import ExperimentService, is_inconclusive
from app.models import RunConfig

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

SUBCOMMANDS: Dict[str, Callable[[RunConfig], Any]] = {
    "mass": ExperimentService.mass,
    "tail": ExperimentService.tail,
    "ldp-scan": ExperimentService.ldp_scan,
    "induction": ExperimentService.induction,
    "pathological-phi": ExperimentService.pathological_phi,
    "witness": ExperimentService.witness,
    "sections": ExperimentService.sections,
    "bp-experiment": ExperimentService.bp_experiment,
    "rectangle-demo": ExperimentService.rectangle_demo,
    "fact-check": ExperimentService.fact_check,
    "exceptional-set": ExperimentService.exceptional_set,
}

# flags naming a JSON file, with the parser that validates it
FILE_FLAGS = {
    "measure": parse_measure,
    "phi": parse_phi,
    "body": parse_body,
    "body2": lambda data, text: parse_body(data, text, "body2"),
}


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON; flags override its fields")
    common.add_argument("--measure", help="measure JSON file")
    common.add_argument("--phi", help="phi JSON file")
    common.add_argument("--body", help="body JSON file (K)")
    common.add_argument("--body2", help="second body JSON file (L)")
    common.add_argument("--grid", help="start:end:count")
    common.add_argument("--log", action="store_true", default=None, help="log-spaced grid")
    common.add_argument("--budget", type=int, help="Monte Carlo samples per estimate")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file (stdout when omitted)")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--strict", action="store_true", default=None, help="exit 3 on inconclusive verdicts")
    common.add_argument("--threads", type=int)
    common.add_argument("--record", action="store_true", help="store the run in the experiment ledger")
    common.add_argument("--verbose", action="store_true")
    common.add_argument("--quiet", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logconcave", description="Measures of dilates for log-concave densities")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    common = _common_flags()
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])

    sub.choices["rectangle-demo"].add_argument("--tmin", type=float)
    sub.choices["rectangle-demo"].add_argument("--tmax", type=float)
    sub.choices["rectangle-demo"].add_argument("--points", type=int)
    sub.choices["pathological-phi"].add_argument("--kmax", dest="k_max", type=int)
    sub.choices["induction"].add_argument("--m-max", dest="m_max", type=int)
    for name in ("ldp-scan",):
        sub.choices[name].add_argument("--window", type=float)
        sub.choices[name].add_argument("--delta", type=float)
    for name in ("witness", "fact-check"):
        sub.choices[name].add_argument("--R", dest="R", type=float)
    sub.choices["witness"].add_argument("--t0", type=float)
    sub.choices["witness"].add_argument("--t-max", dest="t_max", type=float)
    sub.choices["fact-check"].add_argument("--trials", type=int)
    for name in ("sections", "bp-experiment"):
        sub.choices[name].add_argument("--net-size", dest="net_size", type=int)
    sub.choices["exceptional-set"].add_argument("--alpha", type=float)
    sub.choices["exceptional-set"].add_argument("--T", dest="T", type=float)
    sub.choices["exceptional-set"].add_argument("--step", type=float)
    sub.choices["exceptional-set"].add_argument("--order", type=int)
    return parser


def _load_file_flag(name: str, path: str) -> Dict[str, Any]:
    """Read a body/phi/measure file, validating it with line context, and keep its JSON."""
    data, text = read_json(path)
    FILE_FLAGS[name](data, text)
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: Dict[str, Any] = {}
    if args.config:
        data, _ = read_json(args.config)
        if not isinstance(data, dict):
            raise ConfigError("run config must be a JSON object")
        values.update(data)
    for key, value in vars(args).items():
        if value is None or key in ("config", "record", "verbose", "quiet"):
            continue
        values[key] = _load_file_flag(key, value) if key in FILE_FLAGS else value
    if "format" not in values and str(values.get("out", "")).endswith(".json"):
        values["format"] = "json"
    return run_config(values)


def _cell(value: Any) -> str:
    match value:
        case None:
            return ""
        case bool():
            return "true" if value else "false"
        case float():
            return format(value, ".17g")
    return str(value)


def render(report: Any, fmt: str) -> str:
    """CSV from the report's table, or JSON from the full report."""
    if fmt == "json":
        return json.dumps(report.model_dump(), indent=2) + "\n"
    columns, rows = report.table()
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(value) for value in row])
    return buffer.getvalue()


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    # suppress sqlalchemy engine logs below warning level
    logging.getLogger("sqlalchemy.engine.Engine").setLevel(logging.WARNING)


def run(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        logger.info("Running %s (seed %d)", config.subcommand, config.seed)
        report = SUBCOMMANDS[args.subcommand](config)
        output = render(report, config.format)
        if config.out:
            Path(config.out).write_text(output)
            logger.info("Wrote %s", config.out)
        else:
            sys.stdout.write(output)
    except ConfigError as error:
        logger.error("Invalid configuration: %s", error)
        return 2
    except OSError as error:
        logger.error("%s failed on file access: %s", args.subcommand, error)
        return 1
    except (ValueError, RuntimeError) as error:
        logger.error("%s failed: %s", args.subcommand, error)
        return 1

    if args.record:
        ExperimentService.record_run(config, report)
    if config.strict and is_inconclusive(report):
        logger.warning("Inconclusive verdict with --strict")
        return 3
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    configure_logging("--verbose" in args, "--quiet" in args)
    return run(args)
