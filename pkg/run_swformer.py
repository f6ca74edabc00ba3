#!/usr/bin/env python
"""
SWformer toolkit runner.

Usage:
    python run_swformer.py haar-bench --size 16 --T 4
    python run_swformer.py train --config configs/toy.json --out runs/toy
    python run_swformer.py energy --config configs/toy.json --checkpoint runs/toy/checkpoint
"""

import logging
import sys

from swformer.cli import parse_and_dispatch
from swformer.config import settings

logging.basicConfig(
    level=getattr(logging, settings.SWF_LOG_LEVEL.upper(), logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)

if __name__ == "__main__":
    sys.exit(parse_and_dispatch(sys.argv[1:]))
