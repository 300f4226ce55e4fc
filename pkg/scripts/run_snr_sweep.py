#!/usr/bin/env python3
"""Run the 1-D diffusion SNR/sample-count sweep (200 trials per cell)."""
import sys
from pathlib import Path

from pdesrc.cli import main

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "sweep_snr_1d.toml"

if __name__ == "__main__":
    sys.exit(main(["run", str(CONFIG), *sys.argv[1:]]))
