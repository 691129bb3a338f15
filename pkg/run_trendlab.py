#!/usr/bin/env python3
"""
Command-line entry point for trendlab.

Usage:
    python run_trendlab.py run configs/sample_naive.ini
    python run_trendlab.py train configs/sample_xlstm.ini --max-epochs 1
    python run_trendlab.py report runs/
"""

import sys

from trendlab.cli import main

if __name__ == "__main__":
    sys.exit(main())
