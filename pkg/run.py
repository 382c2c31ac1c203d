#!/usr/bin/env python3
"""
Startup script for the SMI simulator.
This script sets up the path and runs the command-line application.

    python run.py run --preset baseline --seed 1
    python run.py verify --p 0.5
"""
import sys
import os


def main():
    """Configures path and starts the CLI."""
    # Add the 'src' directory to the Python path
    # This allows us to import 'smi_sim' as a top-level module
    sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "src")))

    from smi_sim.main import app

    app()


if __name__ == "__main__":
    main()
