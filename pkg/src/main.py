# src/main.py

"""
Main module for Pledgepoint.
Entry point: python -m src.main <command> ...
"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
