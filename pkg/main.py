"""
Main entry point for the flowplan workflow allocation planner.

This script puts the project root on the import path and hands the command
line to the CLI.
"""

import sys
import os

# Add the project root to the path
project_root = os.path.dirname(os.path.abspath(__file__))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from src.cli import main as cli_main


def main():
    """
    Main entry point for the planner.

    Runs the requested subcommand and exits with its status code.
    """
    try:
        status = cli_main()
    except KeyboardInterrupt:
        print("Interrupted", file=sys.stderr)
        status = 130
    sys.exit(status)


if __name__ == "__main__":
    main()
