#!/usr/bin/env python3
"""
Command-line entry point.

Loads .env before any settings are read, then hands over to the click
group. Logging is configured by the group from --log-level or
NRDR_LOG_LEVEL.

Usage:
  python run_nrdr.py generate --manifold ring --n 2000 --seed 3 --out ring.csv
  python run_nrdr.py embed --in ring.csv --method nonredundant --d 3 --out ring_nr.csv
  python run_nrdr.py diagnose --in ring.csv --angular 0,1 --embedding ring_nr.csv
"""
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

from nrdr.cli import cli  # noqa: E402


if __name__ == "__main__":
    cli(prog_name="nrdr")
