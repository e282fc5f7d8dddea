"""
CF-Safe - Command Line
check / extract / repair / alternatives / normalize
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.advisor.config import KIND_ALIASES, AdvisorConfig
from src.checker.reachability import extract_frontier
from src.config import ToolSettings, load_config_file, validated
from src.model.core import Mdp, SafetyProperty
from src.model.errors import CfSafeError, UsageError
from src.parser.emitter import emit_normalized
from src.parser.prism_parser import load_model
from src.policy.engine import EMPTY_OVERRIDES, PolicyModel, check_policy, load_policy
from src.repair.analysis import action_redundancy, alternative_rank_sweep, render_analysis
from src.repair.pipeline import build_chain, measure, run_comparison
from src.repair.report import render_text, write_reports
from src.transformer.dtmc_writer import write_dtmc

logger = logging.getLogger(__name__)

# --config keys that belong to the advisor, keyed by their long-flag spelling
ADVISOR_OPTIONS = {
    "endpoint": "endpoint",
    "model": "model",
    "api_key_env": "api_key_env",
    "desc": "description_path",
    "description_path": "description_path",
    "script": "script_path",
    "script_path": "script_path",
    "cache": "cache_dir",
    "cache_dir": "cache_dir",
    "timeout": "timeout",
    "max_retries": "max_retries",
    "excerpt_budget": "excerpt_budget",
}

TOOL_OPTIONS = tuple(ToolSettings.model_fields)


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# ============ Argument parsing ============

def _add_common(parser: argparse.ArgumentParser, *, inputs: bool = True):
    if inputs:
        parser.add_argument("model", help="PRISM-subset model file")
        parser.add_argument("policy", help="policy JSON file (tabular or mlp)")
    parser.add_argument("--config", help="JSON file with default option values")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--state-limit", type=int)
    parser.add_argument("--numeric", choices=["auto", "exact", "float"])
    parser.add_argument("--strict", action="store_true", default=None,
                        help="fail when the policy's raw argmax is disabled")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="cf-safe", description="Verify and repair RL policies on PRISM models")
    commands = parser.add_subparsers(dest="command", required=True)

    check_cmd = commands.add_parser("check", help="check a reachability property")
    _add_common(check_cmd)
    check_cmd.add_argument("property", help="P=? [ F \"label\" ]")
    check_cmd.add_argument("--emit-dtmc", help="write the induced chain in explicit form")

    extract_cmd = commands.add_parser("extract", help="print the violation frontier as JSON lines")
    _add_common(extract_cmd)
    extract_cmd.add_argument("property")

    repair_cmd = commands.add_parser("repair", help="repair the frontier and re-check")
    _add_common(repair_cmd)
    repair_cmd.add_argument("properties", nargs="+", metavar="property")
    repair_cmd.add_argument("--advisor", action="append", choices=sorted(KIND_ALIASES),
                            help="advice method; repeat to compare methods (default baseline)")
    repair_cmd.add_argument("--desc", help="environment description for llm-desc")
    repair_cmd.add_argument("--script", help="scripted advice file")
    repair_cmd.add_argument("--endpoint", help="OpenAI-compatible base URL, e.g. https://host/v1")
    repair_cmd.add_argument("--model", dest="llm_model", help="model identifier sent to the endpoint")
    repair_cmd.add_argument("--cache", help="response cache directory")
    repair_cmd.add_argument("--api-key-env")
    repair_cmd.add_argument("--timeout", type=float)
    repair_cmd.add_argument("--max-retries", type=int)
    repair_cmd.add_argument("--excerpt-budget", type=int)
    repair_cmd.add_argument("--passes", type=int)
    repair_cmd.add_argument("--fallback-baseline", action="store_true", default=None)
    repair_cmd.add_argument("--out-dir", default="data/output")
    repair_cmd.add_argument("--run-name", default="repair")

    alt_cmd = commands.add_parser("alternatives", help="rank sweep and action redundancy tables")
    _add_common(alt_cmd)
    alt_cmd.add_argument("property")
    alt_cmd.add_argument("--max-rank", type=int, default=3)
    alt_cmd.add_argument("--actions", help="comma separated actions to disable (default all)")

    normalize_cmd = commands.add_parser("normalize", help="print the normalized model")
    normalize_cmd.add_argument("model")
    _add_common(normalize_cmd, inputs=False)

    return parser


# ============ Settings ============

def resolve_options(args: argparse.Namespace) -> Tuple[ToolSettings, Dict[str, Any]]:
    """Flag > --config file > default"""
    file_values = load_config_file(args.config) if args.config else {}
    unknown = sorted(k for k in file_values if k not in TOOL_OPTIONS and k not in ADVISOR_OPTIONS)
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")

    tool = {k: v for k, v in file_values.items() if k in TOOL_OPTIONS}
    for key in TOOL_OPTIONS:
        value = getattr(args, key, None)
        if value is not None:
            tool[key] = value

    advisor: Dict[str, Any] = {}
    for key, value in file_values.items():
        if key in ADVISOR_OPTIONS:
            advisor[ADVISOR_OPTIONS[key]] = value
    flags = {
        "endpoint": getattr(args, "endpoint", None),
        "model": getattr(args, "llm_model", None),
        "api_key_env": getattr(args, "api_key_env", None),
        "description_path": getattr(args, "desc", None),
        "script_path": getattr(args, "script", None),
        "cache_dir": getattr(args, "cache", None),
        "timeout": getattr(args, "timeout", None),
        "max_retries": getattr(args, "max_retries", None),
        "excerpt_budget": getattr(args, "excerpt_budget", None),
    }
    advisor.update({k: v for k, v in flags.items() if v is not None})
    return validated(ToolSettings, tool), advisor


def configure_logging(level: str):
    logging.basicConfig(level=getattr(logging, level), stream=sys.stderr, force=True,
                        format="%(levelname)s %(name)s: %(message)s")


def _load_inputs(args: argparse.Namespace) -> Tuple[Mdp, PolicyModel]:
    for kind, path in (("model", args.model), ("policy", args.policy)):
        if not Path(path).is_file():
            raise UsageError(f"{kind} file not found: {path}")
    mdp = load_model(args.model)
    policy = load_policy(args.policy)
    check_policy(policy, mdp)
    return mdp, policy


# ============ Commands ============

def cmd_check(args: argparse.Namespace, settings: ToolSettings) -> int:
    prop = SafetyProperty.parse(args.property)
    mdp, policy = _load_inputs(args)
    prop.validate(mdp)
    chain = build_chain(mdp, policy, EMPTY_OVERRIDES, settings)
    if args.emit_dtmc:
        write_dtmc(chain, args.emit_dtmc)
    measurement = measure(chain, prop, settings)
    print(repr(measurement.value))
    print(f"{measurement.describe()} states={len(chain)}")
    return 0


def cmd_extract(args: argparse.Namespace, settings: ToolSettings) -> int:
    prop = SafetyProperty.parse(args.property)
    mdp, policy = _load_inputs(args)
    prop.validate(mdp)
    chain = build_chain(mdp, policy, EMPTY_OVERRIDES, settings)
    for record in extract_frontier(chain, prop):
        print(json.dumps(record.to_dict(), sort_keys=True))
    return 0


def cmd_repair(args: argparse.Namespace, settings: ToolSettings, advisor_options: Dict[str, Any]) -> int:
    props = [SafetyProperty.parse(text) for text in args.properties]
    kinds: List[str] = []
    for name in args.advisor or ["baseline"]:
        kind = KIND_ALIASES[name]
        if kind not in kinds:
            kinds.append(kind)
    configs = [validated(AdvisorConfig, {"kind": kind, **advisor_options}) for kind in kinds]

    mdp, policy = _load_inputs(args)
    for prop in props:
        prop.validate(mdp)
    reports = run_comparison(mdp, policy, props, configs, settings=settings)
    write_reports(reports, args.out_dir, args.run_name)
    sys.stdout.write(render_text(reports))
    return 0


def cmd_alternatives(args: argparse.Namespace, settings: ToolSettings) -> int:
    prop = SafetyProperty.parse(args.property)
    if args.max_rank < 1:
        raise UsageError("--max-rank must be at least 1")
    mdp, policy = _load_inputs(args)
    actions: Optional[Sequence[str]] = None
    if args.actions:
        actions = [a.strip() for a in args.actions.split(",") if a.strip()]
    sweep = alternative_rank_sweep(mdp, policy, prop, args.max_rank, settings=settings)
    redundancy = action_redundancy(mdp, policy, prop, actions, settings=settings)
    sys.stdout.write(render_analysis(f"Rank sweep for {prop.display}", sweep))
    sys.stdout.write("\n")
    sys.stdout.write(render_analysis(f"Action redundancy for {prop.display}", redundancy))
    return 0


def cmd_normalize(args: argparse.Namespace) -> int:
    if not Path(args.model).is_file():
        raise UsageError(f"model file not found: {args.model}")
    sys.stdout.write(emit_normalized(load_model(args.model)))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        settings, advisor_options = resolve_options(args)
        configure_logging(settings.log_level)
        if args.command == "check":
            return cmd_check(args, settings)
        if args.command == "extract":
            return cmd_extract(args, settings)
        if args.command == "repair":
            return cmd_repair(args, settings, advisor_options)
        if args.command == "alternatives":
            return cmd_alternatives(args, settings)
        return cmd_normalize(args)
    except CfSafeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
