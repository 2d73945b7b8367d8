#!/usr/bin/env python3
"""
ionwork - Main Entry Point
"""

import os
import sys

# Make the src package importable when run from anywhere
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.cli.main import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
