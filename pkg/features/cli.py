"""
Command-line interface functionality.
Prices single jobs from config files, regenerates the result tables and manages
saved configs.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from core.config import ConfigStore, PricingConfig, load_config
from core.errors import ConfigError, NumericError, ParameterError
from core.mc import McConfig
from features import presets
from features.jobs import run_job, with_overrides
from features.sheet_dump import dump_field, dump_sheets
from features.tables import TABLES, run_table, table_sheets, write_table

# Get the logger
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _finess(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid finess must be a number, got {text!r}")


class CommandLineInterface:
    @staticmethod
    def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
        """Parse command line arguments"""
        parser = argparse.ArgumentParser(prog="odgrid", description="Grid pricing of local vol and hybrid models")
        commands = parser.add_subparsers(dest="command", required=True)

        # Single job
        price = commands.add_parser("price", help="Price one job from a config file or a saved config name")
        price.add_argument("config", help="Path to a JSON job file, or the name of a saved config")
        price.add_argument("--json", action="store_true", help="Print the result record as JSON")
        price.add_argument("--dump-sheets", metavar="FILE",
                           help="Write the value sheets of a lv1d job as CSV (step,node,state,value)")
        price.add_argument("--dump-field", metavar="FILE",
                           help="Write the adjusted vol field and AD masses of a glv job as CSV")
        price.add_argument("--steps", type=int, help="Override the number of time steps")
        price.add_argument("--grid-finess", type=_finess, help="Override the grid finess on every axis")
        price.add_argument("--rho", type=float, help="Override the pairwise correlation")
        price.add_argument("--seed", type=int, help="Monte Carlo seed")
        price.add_argument("--threads", type=int,
                           help="Monte Carlo worker threads (default: $ODGRID_THREADS or 1)")

        # Result tables
        table = commands.add_parser("table", help="Regenerate a result table as CSV")
        table.add_argument("table_id", help=f"One of: {', '.join(TABLES)}")
        table.add_argument("--with-mc", action="store_true", help="Add Monte Carlo columns where the table has them")
        table.add_argument("--out", metavar="FILE", help="Write to FILE instead of stdout")
        table.add_argument("--json", action="store_true", help="Emit JSON records instead of CSV")
        table.add_argument("--dump-sheets", metavar="FILE",
                           help="lv1d_calib only: write the value sheets of the at-the-money call at the "
                                "longest maturity as CSV")
        table.add_argument("--steps", type=int, help="Override the time steps (steps per year for glv_calib)")
        table.add_argument("--grid-finess", type=_finess, help="Override the grid finess on every axis")
        table.add_argument("--rho", type=float, help="Override the pairwise correlation of basket tables")
        table.add_argument("--paths", type=int, default=500_000, help="Monte Carlo paths (default: 500000)")
        table.add_argument("--seed", type=int, default=McConfig.seed, help="Monte Carlo seed")
        table.add_argument("--threads", type=int,
                           help="Monte Carlo worker threads (default: $ODGRID_THREADS or 1)")

        # Configuration management
        configs = commands.add_parser("configs", help="Manage saved configs")
        actions = configs.add_subparsers(dest="action", required=True)
        actions.add_parser("list", help="List all saved configs")
        show = actions.add_parser("show", help="Print a saved config")
        show.add_argument("name")
        save = actions.add_parser("save", help="Validate a job file and save it under a name")
        save.add_argument("name")
        save.add_argument("file")
        delete = actions.add_parser("delete", help="Delete a saved config")
        delete.add_argument("name")
        examples = actions.add_parser("examples", help="Write one example config per model")
        examples.add_argument("--out", metavar="DIR", help="Write files to DIR instead of the config store")

        return parser.parse_args(argv)

    @staticmethod
    def resolve_config(ref: str, store: Optional[ConfigStore] = None) -> PricingConfig:
        if os.path.exists(ref):
            return load_config(ref)
        config = (store or ConfigStore()).load(ref)
        if config is None:
            raise ConfigError(f"no config file or saved config named {ref!r}")
        return config

    @staticmethod
    def price(args: argparse.Namespace) -> int:
        config = CommandLineInterface.resolve_config(args.config)
        config = with_overrides(config, args.steps, args.grid_finess, args.rho)
        sheets_path = args.dump_sheets or config.output.dump_sheets
        field_path = args.dump_field or config.output.dump_field
        if sheets_path and config.model != "lv1d":
            raise ConfigError("value sheets are dumped for lv1d jobs only", field="output.dump_sheets")
        if field_path and config.model != "glv":
            raise ConfigError("the adjusted vol field exists for glv jobs only", field="output.dump_field")

        result = run_job(config, threads=args.threads, seed=args.seed, keep_sheets=bool(sheets_path))
        if sheets_path:
            dump_sheets(result.sheets, sheets_path)
        if field_path:
            dump_field(result.vol_field, field_path)

        record = result.to_record()
        if args.json or config.output.json:
            print(json.dumps(record, indent=2))
        else:
            print(f"model:       {record['model']}")
            print(f"price:       {record['price']:.6f}")
            if record.get("stderr") is not None:
                print(f"stderr:      {record['stderr']:.6f}")
            if record["implied_vol"] is not None:
                print(f"implied vol: {100.0 * record['implied_vol']:.4f}%")
            print(f"elapsed:     {record['elapsed']:.3f}s")
            if record.get("grid"):
                print(f"grid:        {json.dumps(record['grid'])}")
        return EXIT_OK

    @staticmethod
    def table(args: argparse.Namespace) -> int:
        mc = McConfig(paths=args.paths, seed=args.seed, threads=args.threads) if args.with_mc else None
        if args.dump_sheets:
            dump_sheets(table_sheets(args.table_id, args.steps, args.grid_finess), args.dump_sheets)
        frame = run_table(args.table_id, with_mc=args.with_mc, mc=mc, steps=args.steps,
                          grid_finess=args.grid_finess, correlation=args.rho)
        text = write_table(frame, args.out, args.json)
        if not args.out:
            sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return EXIT_OK

    @staticmethod
    def configs(args: argparse.Namespace) -> int:
        store = ConfigStore()
        if args.action == "list":
            print("Available configurations:")
            for name in store.list_configs():
                print(f"  - {name}")
        elif args.action == "show":
            config = store.load(args.name)
            if config is None:
                raise ConfigError(f"no saved config named {args.name!r}")
            print(json.dumps(config.to_dict(), indent=2))
        elif args.action == "save":
            name = store.import_file(args.file, args.name)
            logger.info(f"Saved {args.file} as {name}")
        elif args.action == "delete":
            if not store.delete(args.name):
                raise ConfigError(f"no saved config named {args.name!r}")
        else:
            for tag, data in presets.example_configs().items():
                config = PricingConfig.from_dict(data)
                if args.out:
                    os.makedirs(args.out, exist_ok=True)
                    path = os.path.join(args.out, f"{config.name}.json")
                    with open(path, "w") as f:
                        json.dump(config.to_dict(), f, indent=2)
                    print(path)
                else:
                    store.save(config.name, config)
                    print(config.name)
        return EXIT_OK

    @staticmethod
    def handle_command_line(argv: Optional[List[str]] = None) -> int:
        """Handle command line arguments and run the requested command; returns the exit code"""
        args = CommandLineInterface.parse_arguments(argv)
        handler = {
            "price": CommandLineInterface.price,
            "table": CommandLineInterface.table,
            "configs": CommandLineInterface.configs,
        }[args.command]
        try:
            return handler(args)
        except (ConfigError, ParameterError) as e:
            logger.debug("invalid input", exc_info=True)
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CONFIG
        except NumericError as e:
            logger.debug("numerical failure", exc_info=True)
            print(f"numerical error: {e}", file=sys.stderr)
            return EXIT_NUMERIC
        except OSError as e:
            logger.debug("i/o failure", exc_info=True)
            print(f"error: {e}", file=sys.stderr)
            return EXIT_IO
