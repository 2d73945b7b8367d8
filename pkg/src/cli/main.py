"""
Command-line surface: run, check and sweep scenarios
"""

import argparse
import asyncio
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from src.core.config import get_settings
from src.core.exceptions import ConfigError, IonworkError
from src.models.scenario import Experiment, ScenarioBundle, ScenarioConfig
from src.services.output_service import emit_outputs
from src.services.scenario_service import ScenarioService, load_scenario, sweep_configs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_RUN_ERROR = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ionwork", description="Trapped-ion work statistics simulator")
    subcommands = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    source = common.add_mutually_exclusive_group()
    source.add_argument("--config", help="Scenario JSON file")
    source.add_argument(
        "--experiment",
        choices=[e.value for e in Experiment],
        help="Run the built-in default scenario instead of a file",
    )
    common.add_argument("--seed", type=int, help="Override sampling.seed")
    common.add_argument("--shots", type=int, help="Override sampling.shots (0 = exact only)")
    common.add_argument("--jobs", type=int, help="Protocols run concurrently")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--log-level", help="Logging level (default from settings)")

    subcommands.add_parser("run", parents=[common], help="Run a scenario and write outputs")
    subcommands.add_parser("check", parents=[common], help="Run and exit nonzero if any check fails")
    sweep = subcommands.add_parser("sweep", parents=[common], help="Run a Cartesian grid of protocols")
    sweep.add_argument(
        "--grid",
        action="append",
        default=[],
        metavar="FIELD=V1,V2",
        help="Sweep values for tau_us, gamma_khz or target_alpha (repeatable)",
    )
    return parser


def parse_grid(items: Sequence[str]) -> Dict[str, List[float]]:
    grid: Dict[str, List[float]] = {}
    for item in items:
        name, _, values = item.partition("=")
        if not name or not values:
            raise ConfigError(f"Expected FIELD=V1,V2, got '{item}'", field="grid")
        try:
            grid[name.strip()] = [float(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"Non-numeric sweep value in '{item}'", field="grid")
    return grid


def resolve_config(args: argparse.Namespace) -> ScenarioConfig:
    if args.config:
        config = load_scenario(args.config)
    elif args.experiment:
        config = ScenarioConfig.default(Experiment(args.experiment))
    else:
        raise ConfigError("Give --config PATH or --experiment NAME")

    data = config.model_dump(mode="json")
    if args.seed is not None:
        data["sampling"]["seed"] = args.seed
    if args.shots is not None:
        data["sampling"]["shots"] = args.shots
    if args.out is not None:
        data["output"]["out_dir"] = args.out
    try:
        return ScenarioConfig.model_validate(data)
    except ValueError as e:
        raise ConfigError(str(e), field="command line")


def run_scenario(config: ScenarioConfig, out_dir: Optional[str] = None, jobs: int = 1) -> ScenarioBundle:
    """Run every protocol of a scenario and write the result bundle"""
    bundle = asyncio.run(ScenarioService(config, jobs=jobs).run())
    emit_outputs(bundle, out_dir or config.output.out_dir)
    return bundle


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    jobs = args.jobs or settings.jobs

    try:
        config = resolve_config(args)
        out_dir = config.output.out_dir
        if args.command == "sweep":
            grid = parse_grid(args.grid)
            if not grid:
                raise ConfigError("sweep needs at least one --grid FIELD=V1,V2", field="grid")
            bundles = [
                run_scenario(point, str(Path(out_dir) / "sweep" / label), jobs)
                for label, point in sweep_configs(config, grid)
            ]
        else:
            bundles = [run_scenario(config, out_dir, jobs)]
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR
    except (IonworkError, OSError) as e:
        logger.error(f"Run failed: {e}")
        return EXIT_RUN_ERROR

    passed = all(bundle.passed for bundle in bundles)
    logger.info(f"Checks {'passed' if passed else 'FAILED'} ({len(bundles)} bundle(s))")
    if args.command == "check" and not passed:
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
