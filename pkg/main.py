#! /usr/bin/python3
import sys
import argparse
import logging

# Import utility functions
from utils import setup_logging

from features.cli import CommandLineInterface


def main():
    """Main application entry point"""
    # Logging flags are handled here, everything else by the CLI module
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument('--verbose', '-v', action='store_true', help='Log progress at INFO level')
    parser.add_argument('--log-file', type=str, help='Also append log records to this file')
    args, remaining = parser.parse_known_args()

    setup_logging(log_file=args.log_file,
                  console_level=logging.INFO if args.verbose else logging.WARNING)

    sys.exit(CommandLineInterface.handle_command_line(remaining))


if __name__ == "__main__":
    main()
